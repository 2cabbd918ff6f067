"""Order-3 forward-mode Taylor jets in the 2n real coordinates, and Wirtinger conversion.

Real coordinates are ordered ``(x1, y1, x2, y2, ...)`` with ``z_j = x_j + i y_j``.
All arrays carry arbitrary leading batch dimensions, so one traversal of an
expression tree evaluates a whole point cloud.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DomainError, NumericalError, ValidationError
from .expr import Binary, Expr, Imag, Num, Param, Pow, Unary, Var, bind_params

MAX_DIM = 6


@dataclass
class Jet3:
    """Taylor data to total order ``order`` (1, 2 or 3).

    ``grad[..., i]``, ``hess[..., i, j]`` and ``third[..., i, j, k]`` are full dense
    symmetric arrays; entries are complex so holomorphic map components can be
    carried too.
    """

    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray | None = None
    third: np.ndarray | None = None

    @property
    def order(self) -> int:
        return 1 if self.hess is None else (2 if self.third is None else 3)

    @property
    def dim(self) -> int:
        return self.grad.shape[-1]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __getitem__(self, idx) -> "Jet3":
        return Jet3(self.value[idx], self.grad[idx],
                    None if self.hess is None else self.hess[idx],
                    None if self.third is None else self.third[idx])

    # arithmetic ---------------------------------------------------------
    def __add__(self, other: "Jet3") -> "Jet3":
        return Jet3(self.value + other.value, self.grad + other.grad,
                    _add(self.hess, other.hess), _add(self.third, other.third))

    def __sub__(self, other: "Jet3") -> "Jet3":
        return self + other.scale(-1.0)

    def scale(self, c) -> "Jet3":
        c = np.asarray(c)
        return Jet3(self.value * c, self.grad * c[..., None],
                    None if self.hess is None else self.hess * c[..., None, None],
                    None if self.third is None else self.third * c[..., None, None, None])

    def __mul__(self, other: "Jet3") -> "Jet3":
        return jet_mul(self, other)

    def conj(self) -> "Jet3":
        return self.map(np.conj)

    def real(self) -> "Jet3":
        return self.map(lambda a: a.real + 0j)

    def imag(self) -> "Jet3":
        return self.map(lambda a: a.imag + 0j)

    def map(self, f) -> "Jet3":
        return Jet3(f(self.value), f(self.grad),
                    None if self.hess is None else f(self.hess),
                    None if self.third is None else f(self.third))


def _add(a, b):
    if a is None or b is None:
        return None
    return a + b


def _sym3(a, B):
    """``a_i B_jk + a_j B_ik + a_k B_ij``."""
    t = a[..., :, None, None] * B[..., None, :, :]
    return t + np.swapaxes(t, -3, -2) + np.moveaxis(t, -3, -1)


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def jet_mul(f: Jet3, g: Jet3) -> Jet3:
    fv, gv = f.value[..., None], g.value[..., None]
    grad = fv * g.grad + gv * f.grad
    hess = third = None
    if f.hess is not None and g.hess is not None:
        fv2, gv2 = fv[..., None], gv[..., None]
        hess = fv2 * g.hess + gv2 * f.hess + _outer(f.grad, g.grad) + _outer(g.grad, f.grad)
        if f.third is not None and g.third is not None:
            third = (fv2[..., None] * g.third + gv2[..., None] * f.third
                     + _sym3(f.grad, g.hess) + _sym3(g.grad, f.hess))
    return Jet3(f.value * g.value, grad, hess, third)


def compose(f: Jet3, v0, d1, d2, d3) -> Jet3:
    """Jet of ``phi(f)`` given ``phi`` and its first three derivatives at ``f.value``."""
    d1e = d1[..., None]
    grad = d1e * f.grad
    hess = third = None
    if f.hess is not None:
        gg = _outer(f.grad, f.grad)
        hess = d1e[..., None] * f.hess + d2[..., None, None] * gg
        if f.third is not None:
            third = (d1e[..., None, None] * f.third
                     + d2[..., None, None, None] * _sym3(f.grad, f.hess)
                     + d3[..., None, None, None] * gg[..., :, :, None] * f.grad[..., None, None, :])
    return Jet3(v0, grad, hess, third)


def constant(c, shape, d: int, order: int) -> Jet3:
    value = np.full(shape, complex(c))
    return Jet3(value, np.zeros(shape + (d,), complex),
                np.zeros(shape + (d, d), complex) if order >= 2 else None,
                np.zeros(shape + (d, d, d), complex) if order >= 3 else None)


def variable(z: np.ndarray, j: int, order: int) -> Jet3:
    """Jet of ``z_j`` (0-based) at points ``z``."""
    shape = z.shape[:-1]
    d = 2 * z.shape[-1]
    out = constant(0, shape, d, order)
    out.value = z[..., j].astype(complex)
    out.grad[..., 2 * j] = 1.0
    out.grad[..., 2 * j + 1] = 1j
    return out


def _falling(k: int, m: int) -> int:
    out = 1
    for i in range(m):
        out *= k - i
    return out


def _power_derivs(a, k: int):
    """``a**k`` and its first three derivatives, exact zeros where the falling factorial vanishes."""
    vals = []
    for m in range(4):
        coef = _falling(k, m)
        vals.append(np.zeros_like(a) if coef == 0 else coef * a ** (k - m))
    return vals


def jet_eval(e: Expr, z, params: Mapping[str, float] | None = None, order: int = 3,
             *, strict: bool = True):
    """Taylor jet of ``e`` at ``z`` (shape ``(..., n)``) to total order ``order``.

    With ``strict=False`` returns ``(jet, bad)``; ``bad`` marks points outside the
    domain of smoothness or with non-finite entries.
    """
    if e.n > MAX_DIM:
        raise ValidationError(f"dimension {e.n} exceeds supported maximum {MAX_DIM}")
    z = np.asarray(z, dtype=complex)
    if z.shape[-1] != e.n:
        raise ValidationError(f"point has {z.shape[-1]} coordinates, expected {e.n}")
    p = bind_params(e, params)
    shape = z.shape[:-1]
    d = 2 * e.n
    bad = np.zeros(shape, dtype=bool)
    memo: dict[int, Jet3] = {}

    def go(node) -> Jet3:
        nonlocal bad
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Num):
            out = constant(node.value, shape, d, order)
        elif isinstance(node, Imag):
            out = constant(1j, shape, d, order)
        elif isinstance(node, Param):
            out = constant(p[node.name], shape, d, order)
        elif isinstance(node, Var):
            out = variable(z, node.index - 1, order)
        elif isinstance(node, Binary):
            a, b = go(node.left), go(node.right)
            if node.op == "add":
                out = a + b
            elif node.op == "sub":
                out = a - b
            elif node.op == "mul":
                out = a * b
            else:
                viol = b.value == 0
                bad = bad | viol
                bv = np.where(viol, 1.0, b.value)
                recip = compose(b, 1 / bv, -1 / bv**2, 2 / bv**3, -6 / bv**4)
                out = a * recip
        elif isinstance(node, Pow):
            a = go(node.base)
            av = a.value
            if node.k < 0:
                viol = av == 0
                bad = bad | viol
                av = np.where(viol, 1.0, av)
            out = compose(a, *_power_derivs(av, node.k))
        elif isinstance(node, Unary):
            out = _unary(node.op, go(node.arg))
            if isinstance(out, tuple):
                out, viol = out
                bad = bad | viol
        else:
            raise ValidationError(f"unknown node {node!r}")
        memo[key] = out
        return out

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        jet = go(e.root)
        finite = np.isfinite(jet.value) & np.all(np.isfinite(jet.grad), axis=-1)
        if jet.hess is not None:
            finite &= np.all(np.isfinite(jet.hess), axis=(-2, -1))
        if jet.third is not None:
            finite &= np.all(np.isfinite(jet.third), axis=(-3, -2, -1))
    if strict:
        if bad.any():
            raise DomainError("point outside the domain of smoothness (log/sqrt/division)")
        if not finite.all():
            raise NumericalError("jet overflowed")
        return jet
    return jet, bad | ~finite


def _unary(op: str, a: Jet3):
    v = a.value
    if op == "neg":
        return a.scale(-1.0)
    if op == "conj":
        return a.conj()
    if op == "re":
        return a.real()
    if op == "im":
        return a.imag()
    if op == "abs2":
        return jet_mul(a, a.conj()).real()
    if op == "exp":
        ev = np.exp(v)
        return compose(a, ev, ev, ev, ev)
    if op == "sin":
        s, c = np.sin(v), np.cos(v)
        return compose(a, s, c, -s, -c)
    if op == "cos":
        s, c = np.sin(v), np.cos(v)
        return compose(a, c, -s, -c, s)
    if op == "log":
        viol = ~(v.real > 0)
        w = np.where(viol, 1.0, v)
        return compose(a, np.log(w), 1 / w, -1 / w**2, 2 / w**3), viol
    if op == "sqrt":
        viol = ~(v.real > 0)
        w = np.where(viol, 1.0, v)
        r = np.sqrt(w)
        return compose(a, r, 0.5 / r, -0.25 / (r * w), 0.375 / (r * w * w)), viol
    if op == "ramp":
        pos = (v.real > 0)
        ar = a.real()
        return ar.map(lambda arr: np.where(_expand(pos, arr), arr, 0.0))
    raise ValidationError(f"unknown function {op}")


def _expand(mask, arr):
    return mask.reshape(mask.shape + (1,) * (arr.ndim - mask.ndim))


# ------------------------------------------------------------- Wirtinger


def wirtinger_matrix(n: int) -> np.ndarray:
    """Rows ``d/dz_1..d/dz_n, d/dzbar_1..d/dzbar_n`` in terms of ``d/dx, d/dy``."""
    W = np.zeros((2 * n, 2 * n), complex)
    for j in range(n):
        W[j, 2 * j], W[j, 2 * j + 1] = 0.5, -0.5j
        W[n + j, 2 * j], W[n + j, 2 * j + 1] = 0.5, 0.5j
    return W


@dataclass
class WirtingerJet:
    """Mixed Wirtinger derivatives of a real scalar.

    ``d1``, ``d2``, ``d3`` index the combined slots ``(z_1..z_n, zbar_1..zbar_n)``.
    The named properties are the blocks the Levi-form formulas consume;
    conjugate blocks follow from ``rho`` being real.
    """

    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray | None
    d3: np.ndarray | None
    n: int

    @property
    def rho_j(self):  # d rho / d z_j
        return self.d1[..., : self.n]

    @property
    def rho_jk(self):  # d2 / dz_j dz_k
        return self.d2[..., : self.n, : self.n]

    @property
    def rho_jkbar(self):  # d2 / dz_j dzbar_k, Hermitian
        return self.d2[..., : self.n, self.n:]

    @property
    def rho_jkl(self):
        return self.d3[..., : self.n, : self.n, : self.n]

    @property
    def rho_jklbar(self):  # d3 / dz_j dz_k dzbar_l
        return self.d3[..., : self.n, : self.n, self.n:]

    @property
    def rho_jkbarlbar(self):  # d3 / dz_j dzbar_k dzbar_l
        return self.d3[..., : self.n, self.n:, self.n:]

    @property
    def batch_shape(self):
        return self.value.shape

    def __getitem__(self, idx) -> "WirtingerJet":
        return WirtingerJet(self.value[idx], self.d1[idx],
                            None if self.d2 is None else self.d2[idx],
                            None if self.d3 is None else self.d3[idx], self.n)


def wirtinger(j: Jet3):
    """Complex Wirtinger tensors ``(value, d1, d2, d3)`` of any (possibly complex) jet."""
    n = j.dim // 2
    W = wirtinger_matrix(n)
    d1 = j.grad @ W.T
    d2 = d3 = None
    if j.hess is not None:
        d2 = np.einsum("ai,bj,...ij->...ab", W, W, j.hess, optimize=True)
    if j.third is not None:
        d3 = np.einsum("ai,bj,ck,...ijk->...abc", W, W, W, j.third, optimize=True)
    return j.value, d1, d2, d3


def to_wirtinger(j: Jet3, tol: float = 1e-10) -> WirtingerJet:
    """Wirtinger data of a real-valued jet; rejects values with ``|Im| > tol * (1 + |Re|)``."""
    imag = np.abs(j.value.imag)
    if np.any(imag > tol * (1 + np.abs(j.value.real))):
        raise ValidationError(f"jet is not real-valued (|Im| up to {imag.max():.3e})")
    value, d1, d2, d3 = wirtinger(j)
    n = j.dim // 2
    if d2 is not None:
        # rho_{j kbar} is Hermitian for real rho; remove roundoff asymmetry
        d2 = 0.5 * (d2 + np.conj(_swap_halves(d2, n, 2)))
        H = d2[..., :n, n:]
        H = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
        d2[..., :n, n:] = H
        d2[..., n:, :n] = np.conj(H)
    return WirtingerJet(value.real.copy(), d1, d2, d3, n)


def _swap_halves(t: np.ndarray, n: int, rank: int) -> np.ndarray:
    """Exchange holomorphic and antiholomorphic slots in every index."""
    perm = np.r_[n:2 * n, 0:n]
    for ax in range(rank):
        t = np.take(t, perm, axis=t.ndim - rank + ax)
    return t


def point_jet(e: Expr, z, params=None, order: int = 3) -> WirtingerJet:
    return to_wirtinger(jet_eval(e, z, params, order))


# ----------------------------------------------------------- validation


def fd_check(e: Expr, z, params=None, h: float = 1e-4, floor: float = 1.0) -> float:
    """Worst discrepancy of the order-3 jet at one point against central differences.

    Gradient and Hessian come from stencils of ``eval``; third derivatives from
    central differences of analytic Hessians.  Each entry's error is divided
    by ``max(|entry|, floor)``.
    """
    from .expr import eval_expr

    z = np.asarray(z, dtype=complex)
    n = e.n
    d = 2 * n
    jet = jet_eval(e, z, params, order=3)
    x0 = np.empty(d)
    x0[0::2], x0[1::2] = z.real, z.imag
    E = np.eye(d)

    def at(x):
        return x[..., 0::2] + 1j * x[..., 1::2]

    def f(x):
        return eval_expr(e, at(x), params)

    plus = x0 + h * E
    minus = x0 - h * E
    fp, fm = f(plus), f(minus)
    grad = (fp - fm) / (2 * h)
    pp = x0 + h * (E[:, None, :] + E[None, :, :])
    pm = x0 + h * (E[:, None, :] - E[None, :, :])
    mp = x0 + h * (-E[:, None, :] + E[None, :, :])
    mm = x0 - h * (E[:, None, :] + E[None, :, :])
    hess = (f(pp) - f(pm) - f(mp) + f(mm)) / (4 * h * h)
    hp = jet_eval(e, at(plus), params, order=2).hess
    hm = jet_eval(e, at(minus), params, order=2).hess
    third = np.moveaxis((hp - hm) / (2 * h), 0, -1)

    def rel(a, b):
        return np.max(np.abs(a - b) / np.maximum(np.abs(a), floor))

    return float(max(rel(jet.grad, grad), rel(jet.hess, hess), rel(jet.third, third)))
