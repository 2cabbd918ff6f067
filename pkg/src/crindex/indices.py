"""Diederich-Fornaess and Steinness bounds from pointwise (A, B) data, the
psi-rescaling optimizer and the plurisubharmonic-exponent oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .dangelo import FORM, ab_from_jet, rescale_jet
from .domains import DomainSpec, check_real
from .errors import NotPseudoconvexError, ValidationError
from .expr import Binary, Expr, Num, Pow, Unary, Var, validate_real
from .geometry import (DEFAULT_TOL_LEVI, SigmaSample, _complex, _real, find_weak_points,
                       sample_boundary)
from .jet import Jet3, jet_eval, to_wirtinger

FAIL = 0.0
INFINITE = math.inf
TOL_A = 1e-10
TOL_B = 1e-10


# ------------------------------------------------------------ thresholds


def df_threshold(A, B, tolA: float = TOL_A, tolB: float = TOL_B):
    """Largest exponent allowed by one (A, B) pair; ``FAIL`` (0) when none is."""
    A, B = np.broadcast_arrays(np.asarray(A, float), np.asarray(B, float))
    small = A <= tolA
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = np.clip(1 + A / np.where(B < 0, B, -1.0), 0.0, 1.0)
    out = np.where(small, np.where(B <= tolB, 1.0, FAIL),
                   np.where(B >= -tolB, FAIL, ratio))
    return float(out) if out.ndim == 0 else out


def steinness_threshold(A, B, tolA: float = TOL_A, tolB: float = TOL_B):
    """Smallest exponent allowed by one (A, B) pair; ``inf`` when none is."""
    A, B = np.broadcast_arrays(np.asarray(A, float), np.asarray(B, float))
    small = A <= tolA
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = 1 + A / np.where(B > 0, B, 1.0)
    out = np.where(small, np.where(B >= -tolB, 1.0, INFINITE),
                   np.where(B <= tolB, INFINITE, ratio))
    return float(out) if out.ndim == 0 else out


def _margin(A, B, objective: str, tolA: float, tolB: float):
    """Continuous surrogate ``k`` per pair, larger is better.

    DF exponent ``k / (1 + k)`` and Steinness exponent ``k / (k - 1)``
    are monotone in ``k``; pairs with negligible ``A`` either impose nothing
    (``+inf``) or rule out every exponent (a large negative value).
    """
    sign = -1.0 if objective == "df" else 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        k = sign * (A + B) / np.where(A > tolA, A, 1.0)
    ok_small = (B <= tolB) if objective == "df" else (B >= -tolB)
    return np.where(A > tolA, k, np.where(ok_small, np.inf, -1e12))


def exponent_from_margin(k: float, objective: str) -> float:
    if objective == "df":
        if k == np.inf:
            return 1.0
        return k / (1 + k) if k > 0 else FAIL
    if k == np.inf:
        return 1.0
    return k / (k - 1) if k > 1 else INFINITE


# ------------------------------------------------------------ psi family


def _s_expr(j: int = 2):
    return Unary("log", Unary("abs2", Var(j)))


def poly_basis(n: int, degree: int = 2) -> list[tuple[str, Expr]]:
    """Real monomials of degree ``1..degree`` in ``x_1, y_1, ..., x_n, y_n``."""
    coords = []
    for j in range(1, n + 1):
        coords += [(f"x{j}", Unary("re", Var(j))), (f"y{j}", Unary("im", Var(j)))]
    out = [(name, Expr(node, n)) for name, node in coords]
    if degree >= 2:
        for a in range(len(coords)):
            for b in range(a, len(coords)):
                na, ea = coords[a]
                nb, eb = coords[b]
                node = Pow(ea, 2) if a == b else Binary("mul", ea, eb)
                out.append((f"{na}*{nb}", Expr(node, n)))
    return out


@dataclass
class PsiFamily:
    """``psi_theta = sum theta_i basis_i``; the rescaled defining function is ``rho e^psi``."""
    basis: list[Expr]
    labels: list[str]
    bound: float = 20.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.basis) != len(self.labels):
            raise ValidationError("basis and labels differ in length")

    @property
    def dim(self) -> int:
        return len(self.basis)

    def expr(self, theta) -> Expr:
        theta = np.asarray(theta, float)
        n = self.basis[0].n if self.basis else 2
        node = Num(0.0)
        for t, b in zip(theta, self.basis):
            if t != 0:
                node = Binary("add", node, Binary("mul", Num(float(t)), b.root))
        return Expr(node, n)

    def validate(self, bbox, samples: int = 200):
        for label, b in zip(self.labels, self.basis):
            resid = validate_real(b, bbox, self.params, samples)
            if resid > 1e-12:
                raise ValidationError(f"psi basis function {label} is not real-valued")

    @classmethod
    def for_domain(cls, spec: DomainSpec, kind: str = "default") -> "PsiFamily":
        """Named families: ``poly1``, ``poly2``, ``worm`` (constant, ``s``, ``s^2``,
        ``Re z1``, ``Im z1`` and the worm's log-cos profiles) and ``default``
        (``worm`` for worms, ``poly2`` otherwise)."""
        n = spec.n
        if kind == "default":
            kind = "worm" if spec.name == "worm" else "poly2"
        if kind == "poly1":
            items = poly_basis(n, 1)
        elif kind == "poly2":
            items = poly_basis(n, 2)
        elif kind == "worm":
            if n != 2:
                raise ValidationError("worm basis needs dimension 2")
            s = _s_expr(2)
            items = [("1", Expr(Num(1.0), n)), ("s", Expr(s, n)), ("s^2", Expr(Pow(s, 2), n)),
                     ("x1", Expr(Unary("re", Var(1)), n)), ("y1", Expr(Unary("im", Var(1)), n))]
            items += [(lab, e) for lab, e in spec.psi_extras if lab not in ("s", "s^2")]
        else:
            raise ValidationError(f"unknown psi basis {kind!r}")
        return cls([e for _, e in items], [lab for lab, _ in items])


# ------------------------------------------------------------ estimators


@dataclass
class Witness:
    point: list
    direction: list
    A: float
    B: float

    @classmethod
    def make(cls, p, v, A, B):
        return cls([complex(c) for c in p], [complex(c) for c in v], float(A), float(B))


@dataclass
class Estimate:
    value: float
    witness: Witness | None
    A: np.ndarray
    B: np.ndarray
    thresholds: np.ndarray


class SigmaData:
    """Jets of ``rho`` and of each psi basis function on the sampled weak set,
    so that any ``theta`` is evaluated with array arithmetic only."""

    def __init__(self, spec: DomainSpec, sigma: SigmaSample, family: PsiFamily | None = None):
        self.spec = spec
        self.sigma = sigma
        P, V = sigma.pairs()
        self.P, self.V = P, V
        self.rho = spec.jet(P, 3) if len(P) else None
        self.family = family
        self.basis_jets = []
        if family is not None and len(P):
            for b in family.basis:
                jet, bad = jet_eval(b, P, family.params, 3, strict=False)
                if bad.any():
                    raise ValidationError("psi basis function is singular on the weak set")
                self.basis_jets.append(jet)

    def __len__(self):
        return len(self.P)

    def psi_jet(self, theta) -> Jet3 | None:
        out = None
        for t, j in zip(theta, self.basis_jets):
            if t == 0:
                continue
            term = j.scale(float(t))
            out = term if out is None else out + term
        return out

    def ab(self, theta=None, psi: Expr | None = None):
        if len(self.P) == 0:
            return np.zeros(0), np.zeros(0)
        jet = self.rho
        pj = None
        if psi is not None:
            pj = jet_eval(psi, self.P, None, 3)
        elif theta is not None:
            pj = self.psi_jet(theta)
        if pj is not None:
            jet = rescale_jet(jet, pj)
        return ab_from_jet(to_wirtinger(jet), self.V, FORM)


def weak_set(spec: DomainSpec, samples: int = 2000, seed: int = 0, strategy: str = "random",
             tol_levi: float = DEFAULT_TOL_LEVI, require_pseudoconvex: bool = True) -> SigmaSample:
    bs = sample_boundary(spec, strategy, samples, seed)
    sigma = find_weak_points(spec, bs, tol_levi, seed=seed)
    sigma.warnings.extend(bs.warnings)
    if require_pseudoconvex and sigma.nonpseudoconvex:
        p, lam = min(sigma.nonpseudoconvex, key=lambda t: t[1])
        raise NotPseudoconvexError(
            f"Levi form has a negative eigenvalue {lam:.3e} on the boundary",
            witness={"point": [complex(c) for c in p], "eigenvalue": lam})
    return sigma


def _estimate(data: SigmaData, objective: str, tolA, tolB, theta=None, psi=None) -> Estimate:
    A, B = data.ab(theta, psi)
    if objective == "df":
        th = df_threshold(A, B, tolA, tolB)
        th = np.atleast_1d(th)
        if len(th) == 0:
            return Estimate(1.0, None, A, B, th)
        i = int(np.argmin(th))
    else:
        th = np.atleast_1d(steinness_threshold(A, B, tolA, tolB))
        if len(th) == 0:
            return Estimate(1.0, None, A, B, th)
        i = int(np.argmax(th))
    return Estimate(float(th[i]), Witness.make(data.P[i], data.V[i], A[i], B[i]), A, B, th)


def df_estimate(spec: DomainSpec, psi: Expr | None = None, samples: int = 2000, seed: int = 0,
                tolA: float = TOL_A, tolB: float = TOL_B, tol_levi: float = DEFAULT_TOL_LEVI,
                sigma: SigmaSample | None = None) -> Estimate:
    """Minimum DF threshold over sampled weak points and null directions for ``rho e^psi``."""
    if sigma is None:
        sigma = weak_set(spec, samples, seed, tol_levi=tol_levi)
    return _estimate(SigmaData(spec, sigma), "df", tolA, tolB, psi=psi)


def steinness_estimate(spec: DomainSpec, psi: Expr | None = None, samples: int = 2000,
                       seed: int = 0, tolA: float = TOL_A, tolB: float = TOL_B,
                       tol_levi: float = DEFAULT_TOL_LEVI,
                       sigma: SigmaSample | None = None) -> Estimate:
    """Maximum Steinness threshold over sampled weak points for ``rho e^psi``."""
    if sigma is None:
        sigma = weak_set(spec, samples, seed, tol_levi=tol_levi)
    return _estimate(SigmaData(spec, sigma), "steinness", tolA, tolB, psi=psi)


# ------------------------------------------------------------ optimizer


@dataclass
class OptimizeResult:
    objective: str
    theta: np.ndarray
    estimate: Estimate
    baseline: float
    evaluations: int
    budget_exhausted: bool
    labels: list[str]

    @property
    def value(self) -> float:
        return self.estimate.value

    def improved(self) -> bool:
        if self.objective == "df":
            return self.value > self.baseline
        return self.value < self.baseline


def optimize_psi(spec: DomainSpec, family: PsiFamily, objective: str = "df",
                 budget: int = 2000, seed: int = 0, restarts: int = 4,
                 sigma: SigmaSample | None = None, samples: int = 2000,
                 tolA: float = TOL_A, tolB: float = TOL_B,
                 tol_levi: float = DEFAULT_TOL_LEVI) -> OptimizeResult:
    """Nelder-Mead over ``theta`` maximizing the DF bound or minimizing the Steinness bound.

    The search runs on the continuous margin ``min_p k`` (see ``_margin``),
    split into ``restarts`` runs sharing ``budget`` objective evaluations.
    Each run starts from the best point so far with a fresh seeded simplex.
    The result is never worse than ``theta = 0``.
    """
    if objective not in ("df", "steinness"):
        raise ValidationError(f"unknown objective {objective!r}")
    if budget < 0:
        raise ValidationError("budget must be nonnegative")
    if sigma is None:
        sigma = weak_set(spec, samples, seed, tol_levi=tol_levi)
    data = SigmaData(spec, sigma, family)
    zero = np.zeros(family.dim)
    base = _estimate(data, objective, tolA, tolB, theta=zero)
    count = 0

    def margin(theta) -> float:
        nonlocal count
        count += 1
        A, B = data.ab(theta=np.clip(theta, -family.bound, family.bound))
        if len(A) == 0:
            return -np.inf
        with np.errstate(all="ignore"):
            k = _margin(A, B, objective, tolA, tolB)
        if not np.all(np.isfinite(A) & np.isfinite(B)):
            return 1e300
        return -float(np.min(k))

    best_theta, best_f = zero, margin(zero) if budget > 0 else np.inf
    if budget > 0 and len(data) and family.dim:
        rng = np.random.default_rng(seed)
        per = max(budget // max(restarts, 1), family.dim + 2)
        bounds = [(-family.bound, family.bound)] * family.dim
        for r in range(restarts):
            if count >= budget:
                break
            scale = 0.5 / (r + 1)
            simplex = best_theta + scale * np.vstack(
                [np.zeros(family.dim), rng.normal(size=(family.dim, family.dim))])
            simplex = np.clip(simplex, -family.bound, family.bound)
            left = budget - count
            res = minimize(margin, best_theta, method="Nelder-Mead", bounds=bounds,
                           options={"maxfev": min(per, left), "initial_simplex": simplex,
                                    "xatol": 1e-10, "fatol": 1e-12})
            if res.fun < best_f:
                best_f, best_theta = float(res.fun), np.asarray(res.x, float)
    est = _estimate(data, objective, tolA, tolB, theta=best_theta)
    better = est.value > base.value if objective == "df" else est.value < base.value
    if not better:
        est, best_theta = base, zero
    return OptimizeResult(objective, best_theta, est, base.value, count,
                          count >= budget and budget > 0, list(family.labels))


# ------------------------------------------------------------ oracle


def _hessian_parts(spec: DomainSpec, psi: Expr | None, z):
    """``(f, f_{j kbar}, f_j conj(f_k))`` for ``f = rho e^psi`` at ``z``."""
    jet = spec.jet(z, 2)
    if psi is not None:
        jet = rescale_jet(jet, jet_eval(psi, z, None, 2))
    w = to_wirtinger(jet)
    d = w.rho_j
    return w.value, w.rho_jkbar, d[..., :, None] * np.conj(d)[..., None, :]


def _check_side(side: str, exponent: float):
    if side == "interior":
        if not 0 < exponent < 1:
            raise ValidationError("interior exponent must lie in (0, 1)")
    elif side == "exterior":
        if not exponent > 1:
            raise ValidationError("exterior exponent must exceed 1")
    else:
        raise ValidationError(f"side must be interior or exterior, got {side!r}")


def hessian_power(spec: DomainSpec, psi: Expr | None, exponent: float, side: str, z):
    """Smallest eigenvalue of the complex Hessian of ``-(-f)^eta`` (interior) or
    ``f^eta`` (exterior), ``f = rho e^psi``, at one point."""
    _check_side(side, exponent)
    z = np.asarray(z, complex)
    f, R, D = _hessian_parts(spec, psi, z)
    f = float(f)
    if side == "interior":
        if not f < 0:
            raise ValidationError("interior evaluation needs rho(z) < 0")
        H = exponent * (-f) ** (exponent - 1) * (R + (1 - exponent) * D / (-f))
    else:
        if not f > 0:
            raise ValidationError("exterior evaluation needs rho(z) > 0")
        H = exponent * f ** (exponent - 1) * (R + (exponent - 1) * D / f)
    return float(np.linalg.eigvalsh(0.5 * (H + H.conj().T))[0])


def oracle_samples(spec: DomainSpec, side: str, boundary, count: int = 2000, seed: int = 0,
                   depths: int = 8, collar: float | None = None):
    """Interior: coarse quasi-random points of the domain plus a collar; exterior: collar.

    Collar points are boundary points pushed along ``-/+ grad rho`` by
    log-spaced distances from ``1e-5`` to ``collar`` (default 5% of the
    bounding-box diameter).
    """
    if collar is None:
        collar = 0.05 * spec.diameter
    boundary = np.asarray(boundary, complex).reshape(-1, spec.n)
    pts = []
    if len(boundary):
        g = spec.jet(boundary, 1).grad.real
        unit = g / np.linalg.norm(g, axis=-1, keepdims=True)
        sgn = -1.0 if side == "interior" else 1.0
        x = _real(boundary)
        for t in np.geomspace(1e-5, collar, depths):
            pts.append(_complex(x + sgn * t * unit))
    if side == "interior":
        lo, hi = spec.bbox[:, 0], spec.bbox[:, 1]
        x = qmc.scale(qmc.Halton(2 * spec.n, scramble=True, seed=seed).random(count), lo, hi)
        pts.append(_complex(x))
    z = np.concatenate(pts) if pts else np.zeros((0, spec.n), complex)
    val, bad = spec.eval(z, strict=False)
    keep = ~bad & ((val.real < 0) if side == "interior" else (val.real > 0))
    if side == "exterior":
        keep &= val.real < collar * 10
    return z[keep]


@dataclass
class OracleResult:
    side: str
    exponent: float
    iterations: int
    samples: int
    monotone: bool
    tol: float


class _Predicate:
    def __init__(self, spec, psi, side, z, floor=1e-10):
        f, R, D = _hessian_parts(spec, psi, z)
        f = f.real
        ok = np.isfinite(f) & np.all(np.isfinite(R), axis=(-1, -2))
        self.R, self.D, self.f = R[ok], D[ok], f[ok]
        self.side = side
        self.floor = floor
        self.count = int(ok.sum())

    def min_eig(self, exponent: float):
        if self.side == "interior":
            c = (1 - exponent) / (-self.f)
        else:
            c = (exponent - 1) / self.f
        M = self.R + c[:, None, None] * self.D
        return np.linalg.eigvalsh(0.5 * (M + np.conj(np.swapaxes(M, -1, -2))))[:, 0]

    def __call__(self, exponent: float) -> bool:
        # the positive factor eta |f|^(eta-1) is dropped: it does not change signs
        if self.count == 0:
            return True
        return bool(np.all(self.min_eig(exponent) >= -self.floor))


def oracle_exponent(spec: DomainSpec, psi: Expr | None, side: str, samples, tol: float = 1e-3,
                    max_iter: int = 40, cap: float = 1e3) -> OracleResult:
    """Bisection for the largest interior / smallest exterior exponent for which
    the sampled complex Hessians are positive semidefinite (to ``-1e-10``)."""
    if side not in ("interior", "exterior"):
        raise ValidationError(f"side must be interior or exterior, got {side!r}")
    pred = _Predicate(spec, psi, side, np.asarray(samples, complex))
    it = 0
    if side == "interior":
        grid = np.linspace(tol, 1 - tol, 9)
        flags = [pred(e) for e in grid]
        monotone = all(a >= b for a, b in zip(flags, flags[1:]))
        lo, hi = 0.0, 1.0
        if not pred(tol):
            return OracleResult(side, FAIL, 1, pred.count, monotone, tol)
        lo = tol
        while hi - lo > tol and it < max_iter:
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if pred(mid) else (lo, mid)
            it += 1
        return OracleResult(side, lo, it, pred.count, monotone, tol)
    grid = 1 + np.geomspace(tol, cap - 1, 9)
    flags = [pred(e) for e in grid]
    monotone = all(a <= b for a, b in zip(flags, flags[1:]))
    if not pred(cap):
        return OracleResult(side, INFINITE, 1, pred.count, monotone, tol)
    lo, hi = 1.0, cap
    while hi - lo > tol and it < max_iter:
        mid = 0.5 * (lo + hi) if hi - lo < 1 else math.sqrt(lo * hi)
        lo, hi = (lo, mid) if pred(mid) else (mid, hi)
        it += 1
    return OracleResult(side, hi, it, pred.count, monotone, tol)


# ------------------------------------------------------------ report


@dataclass
class IndexReport:
    domain: dict
    pseudoconvex: bool | dict
    sample_count: int
    sigma_count: int
    pair_count: int
    seed: int
    tolerances: dict
    df_lower: float | None = None
    df_theta: list | None = None
    df_witness: Witness | None = None
    st_upper: float | None = None
    st_theta: list | None = None
    st_witness: Witness | None = None
    baseline_df: float | None = None
    baseline_st: float | None = None
    psi_labels: list | None = None
    oracle: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def index_report(spec: DomainSpec, samples: int = 2000, seed: int = 0,
                 family: PsiFamily | None = None, budget: int = 0, which=("df", "steinness"),
                 tolA: float = TOL_A, tolB: float = TOL_B,
                 tol_levi: float = DEFAULT_TOL_LEVI, strategy: str = "random",
                 sigma: SigmaSample | None = None) -> IndexReport:
    check_real(spec, 200)
    if sigma is None:
        sigma = weak_set(spec, samples, seed, strategy, tol_levi)
    P, _ = sigma.pairs()
    rep = IndexReport(spec.describe(), True, sigma.scanned, len(sigma), len(P), seed,
                      {"tolA": tolA, "tolB": tolB, "tol_levi": tol_levi},
                      warnings=list(sigma.warnings))
    if family is None:
        family = PsiFamily([], [])
    rep.psi_labels = list(family.labels)
    for obj in which:
        res = optimize_psi(spec, family, obj, budget, seed, sigma=sigma, tolA=tolA, tolB=tolB)
        if obj == "df":
            rep.df_lower, rep.df_theta = res.value, res.theta.tolist()
            rep.df_witness, rep.baseline_df = res.estimate.witness, res.baseline
        else:
            rep.st_upper, rep.st_theta = res.value, res.theta.tolist()
            rep.st_witness, rep.baseline_st = res.estimate.witness, res.baseline
    return rep
