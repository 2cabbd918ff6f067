"""D'Angelo 1-form data on the boundary.

The form is extended to a neighbourhood of the boundary as the contraction
``alpha = i_T (d dbar rho)`` with ``T = Ln - conj(Ln)``.  Its ``dz_j``
coefficient is

    a_j = sum_k rho_{j kbar} rho_k / |d rho|^2,

and its exterior derivatives only need ``d a_j / d zbar_m``, which is explicit
in the third-order Wirtinger data of ``rho``.

Two routes to the pointwise quantities ``(A, B)`` are provided:

* ``form``: ``A = |omega(v)|^2 / 4`` and ``B = -A - dbar_omega(v, vbar) / 4``,
  where ``omega`` is the (1,0) part of ``alpha``;
* ``field``: ``A = |Levi(v, N)|^2 / |grad rho|^2`` and
  ``B = Re N(Levi(L, L)) / (2 |grad rho|)`` for the vector field
  ``L = v - (v rho) Ln``, differentiated analytically.

At null directions of the Levi form the two routes agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domains import DomainSpec
from .errors import ValidationError
from .geometry import Frame, frame_at, levi_form
from .jet import Jet3, WirtingerJet, compose, to_wirtinger

FORM, FIELD = "form", "field"


@dataclass
class Form1:
    """Real 1-form ``sum a_j dz_j + conj(a_j) dzbar_j`` at ``point``."""
    a: np.ndarray
    point: np.ndarray | None = None

    def on(self, X, Xbar=None):
        """Value on the vector ``X^{1,0} + Xbar^{0,1}`` (``Xbar`` = (0,1) coefficients)."""
        out = np.einsum("...j,...j->...", self.a, X)
        if Xbar is not None:
            out = out + np.einsum("...j,...j->...", np.conj(self.a), Xbar)
        return out

    def omega(self, v):
        """The (1,0) part applied to a (1,0) vector."""
        return self.on(v)

    def on_conj(self, v):
        """Value on ``conj(v)`` for a (1,0) vector ``v``."""
        return np.conj(self.on(v))


def _q(w: WirtingerJet):
    return np.sum(np.abs(w.rho_j) ** 2, axis=-1)


def form_coefficients(w: WirtingerJet):
    rho = w.rho_j
    return np.einsum("...jk,...k->...j", w.rho_jkbar, rho) / _q(w)[..., None]


def alpha_at(w: WirtingerJet, f: Frame | None = None) -> Form1:
    return Form1(form_coefficients(w), None if f is None else f.point)


def _check_tangent(w: WirtingerJet, v, tol: float = 1e-10):
    v = np.asarray(v, complex)
    resid = np.abs(np.einsum("...j,...j->...", w.rho_j, v))
    scale = np.linalg.norm(w.rho_j, axis=-1) * np.linalg.norm(v, axis=-1)
    if np.any(resid > tol * np.maximum(scale, 1e-300)):
        raise ValidationError("direction is not complex tangential (d rho(v) != 0)")
    return v


def alpha_on_conj(w: WirtingerJet, f: Frame, v, tol: float = 1e-10):
    """``Levi(Ln, v)``, which equals the form evaluated on ``conj(v)``."""
    v = _check_tangent(w, v, tol)
    return levi_form(w, f.Ln, v)


def dbar_jacobian(w: WirtingerJet):
    """``S[j, m] = d a_j / d zbar_m``."""
    rho = w.rho_j
    R = w.rho_jkbar
    Rkm_holo = w.rho_jk  # rho_{km}
    third = w.rho_jkbarlbar  # rho_{j kbar mbar}
    Q = _q(w)
    a = form_coefficients(w)
    dP = np.einsum("...jkm,...k->...jm", third, rho) + np.einsum("...jk,...km->...jm", R, R)
    dQ = np.einsum("...km,...k->...m", R, np.conj(rho)) + \
        np.einsum("...k,...km->...m", rho, np.conj(Rkm_holo))
    return (dP - a[..., :, None] * dQ[..., None, :]) / Q[..., None, None]


def d_alpha_w(w: WirtingerJet, X, Y):
    """``(d alpha)(X, conj(Y))`` for (1,0) vectors ``X``, ``Y``."""
    S = dbar_jacobian(w)
    K = np.conj(np.swapaxes(S, -1, -2)) - S
    return np.einsum("...j,...jk,...k->...", X, K, np.conj(Y))


def idc_alpha_w(w: WirtingerJet, v):
    """``i (d^c alpha)(v, conj(v))``, a real number."""
    S = dbar_jacobian(w)
    return 2 * np.real(np.einsum("...j,...jk,...k->...", v, S, np.conj(v)))


def dbar_omega_w(w: WirtingerJet, v):
    return -0.5 * idc_alpha_w(w, v)


def omega_w(w: WirtingerJet, v):
    return np.einsum("...j,...j->...", form_coefficients(w), v)


def _ab_form(w: WirtingerJet, v):
    A = np.abs(omega_w(w, v)) ** 2 / 4
    B = -A - 0.25 * dbar_omega_w(w, v)
    return A, B


def _ab_field(w: WirtingerJet, v, W=None):
    n = w.n
    f = frame_at(w)
    rho = w.rho_j
    R = w.rho_jkbar
    d3 = w.d3
    gn = f.grad_norm
    A = np.abs(levi_form(w, v, f.N)) ** 2 / gn**2
    # derivatives of L_j = v_j - (sum_i v_i rho_i) Ln_j at the base point
    vh = np.einsum("...i,...im->...m", v, w.rho_jk)  # sum_i v_i rho_{i m}
    va = np.einsum("...i,...im->...m", v, R)  # sum_i v_i rho_{i mbar}
    dL = -f.Ln[..., None, :] * vh[..., :, None]  # [m, j] = d_m L_j
    dbL = -f.Ln[..., None, :] * va[..., :, None]  # [m, j] = d_mbar L_j
    if W is not None:
        W = np.asarray(W, complex)
        Wt = W - np.einsum("...i,...i->...", W, rho)[..., None] * f.Ln
        dL = dL + rho[..., :, None] * Wt[..., None, :]
        dbL = dbL + np.conj(rho)[..., :, None] * Wt[..., None, :]
    Rm = d3[..., :n, :n, n:]  # rho_{j m kbar}
    vb = np.conj(v)
    term1 = np.einsum("...jmk,...j,...k->...m", Rm, v, vb)
    term2 = np.einsum("...jk,...mj,...k->...m", R, dL, vb)
    term3 = np.einsum("...jk,...j,...mk->...m", R, v, np.conj(dbL))
    NLevi = np.einsum("...m,...m->...", f.N, term1 + term2 + term3)
    B = 0.5 * np.real(NLevi) / gn
    return A, B


def ab_from_jet(w: WirtingerJet, v, route: str = FORM, W=None):
    if route == FORM:
        return _ab_form(w, v)
    if route == FIELD:
        return _ab_field(w, v, W)
    raise ValidationError(f"unknown route {route!r}")


@dataclass
class ABQuantities:
    A: float
    B: float
    route: str


def _w(spec: DomainSpec, p, order: int = 3) -> WirtingerJet:
    return spec.wirtinger(np.asarray(p, complex), order)


def omega(spec: DomainSpec, p, v):
    return omega_w(_w(spec, p, 2), np.asarray(v, complex))


def d_alpha(spec: DomainSpec, p, v, u):
    return d_alpha_w(_w(spec, p), np.asarray(v, complex), np.asarray(u, complex))


def dc_alpha(spec: DomainSpec, p, v):
    return idc_alpha_w(_w(spec, p), np.asarray(v, complex))


def dbar_omega(spec: DomainSpec, p, v):
    return dbar_omega_w(_w(spec, p), np.asarray(v, complex))


def ab_quantities(spec: DomainSpec, p, v, route: str = FORM, W=None):
    w = _w(spec, p)
    v = _check_tangent(w, v)
    A, B = ab_from_jet(w, v, route, W)
    if np.ndim(A) == 0:
        return ABQuantities(float(A), float(B), route)
    return A, B


# ------------------------------------------------------------- rescaling


def rescale_jet(rho: Jet3, psi: Jet3) -> Jet3:
    """Jet of ``rho * exp(psi)``."""
    e = np.exp(psi.value)
    return rho * compose(psi, e, e, e, e)


def rescaled_wirtinger(spec: DomainSpec, psi, p, params=None) -> WirtingerJet:
    from .jet import jet_eval

    p = np.asarray(p, complex)
    jr = spec.jet(p, 3)
    jp = jet_eval(psi, p, params, 3)
    return to_wirtinger(rescale_jet(jr, jp))


# ------------------------------------------------------------ FD oracle


def commutator_fd(spec: DomainSpec, p, v, h: float = 1e-5):
    """``d rho([Ln, conj(L)])`` at ``p`` with the bracket's coefficients differentiated
    by central finite differences, for ``L = v - (v rho) Ln``.

    Only the (1,0) part of the bracket is seen by ``d rho``; it equals
    ``-conj(L)(Ln_j)``, so the oracle differentiates the ``Ln`` coefficient
    field along ``conj(v)``.
    """
    p = np.asarray(p, complex)
    v = np.asarray(v, complex)
    n = spec.n

    def ln_field(z):
        w = spec.wirtinger(z, order=1)
        r = w.rho_j
        return np.conj(r) / np.sum(np.abs(r) ** 2, axis=-1)[..., None]

    # d/dzbar_m = (d/dx_m + i d/dy_m) / 2
    E = np.eye(n)
    zs = np.concatenate([p + h * E, p - h * E, p + 1j * h * E, p - 1j * h * E])
    vals = ln_field(zs).reshape(4, n, n)  # [stencil, m, j]
    dx = (vals[0] - vals[1]) / (2 * h)
    dy = (vals[2] - vals[3]) / (2 * h)
    dbar = 0.5 * (dx + 1j * dy)  # [m, j] = d Ln_j / d zbar_m
    rho_j = spec.wirtinger(p, order=1).rho_j
    return -np.einsum("j,m,mj->", rho_j, np.conj(v), dbar)
