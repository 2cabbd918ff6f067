"""Holomorphic maps between domains and numerical checks of CR-invariance.

A map is given by holomorphic expressions ``f_1..f_m`` in ``z_1..z_n``.  The
pulled-back domain ``{rho o f < 0}`` and the original one should carry the
same D'Angelo data at corresponding weak points, and hence the same index
estimates; the functions here measure how well that holds numerically.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .dangelo import FORM, ab_from_jet, alpha_on_conj, idc_alpha_w, omega_w, rescaled_wirtinger
from .domains import DomainSpec, MapText
from .errors import ValidationError
from .expr import NON_HOLOMORPHIC, Expr, Unary, depends_on_z, eval_expr, substitute, walk
from .geometry import (DEFAULT_TOL_LEVI, SigmaSample, WEAK, _complex, _real, classify,
                       frame_at, levi_at, levi_form, project_batch)
from .jet import jet_eval, to_wirtinger, wirtinger

HOLO_TOL = 1e-12
INVERSE_TOL = 1e-10


class SingularJacobianWarning(UserWarning):
    pass


@dataclass
class MapSpec:
    n_in: int
    n_out: int
    components: list[Expr]
    params: dict = field(default_factory=dict)
    inverse: "MapSpec | None" = None

    def __post_init__(self):
        if len(self.components) != self.n_out:
            raise ValidationError(f"map needs {self.n_out} components, got {len(self.components)}")
        for k, c in enumerate(self.components, 1):
            if c.n != self.n_in:
                raise ValidationError(f"component f{k} has dimension {c.n}, expected {self.n_in}")
            for node in walk(c.root):
                if isinstance(node, Unary) and node.op in NON_HOLOMORPHIC and depends_on_z(node.arg):
                    raise ValidationError(
                        f"component f{k} is not holomorphic: {node.op}() applied to the variables")
        if self.inverse is not None and (self.inverse.n_in != self.n_out
                                         or self.inverse.n_out != self.n_in):
            raise ValidationError("inverse has mismatched dimensions")

    @classmethod
    def from_text(cls, t: MapText) -> "MapSpec":
        inv = None
        if t.inverse is not None:
            inv = cls(t.inverse.dim_in, t.inverse.dim_out, t.inverse.components, t.inverse.params)
        return cls(t.dim_in, t.dim_out, t.components, t.params, inv)

    def __call__(self, z):
        z = np.asarray(z, complex)
        return np.stack([eval_expr(c, z, self.params) for c in self.components], axis=-1)

    def jacobian(self, z):
        """``J[..., k, j] = d f_k / d z_j``."""
        z = np.asarray(z, complex)
        rows = []
        for c in self.components:
            _, d1, _, _ = wirtinger(jet_eval(c, z, self.params, order=1))
            rows.append(d1[..., : self.n_in])
        return np.stack(rows, axis=-2)

    def antiholomorphic_residual(self, z) -> float:
        """Largest ``|d f_k / d zbar_j|`` at the points ``z``."""
        z = np.asarray(z, complex)
        worst = 0.0
        for c in self.components:
            _, d1, _, _ = wirtinger(jet_eval(c, z, self.params, order=1))
            worst = max(worst, float(np.abs(d1[..., self.n_in:]).max()))
        return worst

    def inverse_residual(self, z) -> float:
        if self.inverse is None:
            raise ValidationError("map has no inverse")
        z = np.asarray(z, complex)
        return float(np.abs(self.inverse(self(z)) - z).max())

    def validate(self, z):
        """Numerical holomorphy and inverse checks at sample points."""
        h = self.antiholomorphic_residual(z)
        if h > HOLO_TOL:
            raise ValidationError(f"map is not holomorphic at samples (|df/dzbar| = {h:.3e})")
        if self.inverse is not None:
            r = self.inverse_residual(z)
            if r > INVERSE_TOL:
                raise ValidationError(f"inverse does not invert the map (residual {r:.3e})")
        return True


def compose_maps(outer: MapSpec, inner: MapSpec) -> MapSpec:
    """``outer o inner``."""
    if outer.n_in != inner.n_out:
        raise ValidationError("maps cannot be composed: dimension mismatch")
    params = _merge_params(outer.params, inner.params)
    comps = [substitute(c, inner.components) for c in outer.components]
    inv = None
    if outer.inverse is not None and inner.inverse is not None:
        inv = compose_maps(inner.inverse, outer.inverse)
    return MapSpec(inner.n_in, outer.n_out, comps, params, inv)


def _merge_params(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        if k in out and out[k] != v:
            raise ValidationError(f"parameter {k!r} has conflicting values")
        out[k] = v
    return out


def pushforward(m: MapSpec, p, v):
    """``(f_* v)_k = sum_j (d f_k / d z_j)(p) v_j``."""
    J = m.jacobian(p)
    if m.n_in == m.n_out:
        det = np.abs(np.linalg.det(J))
        if np.any(det < 1e-12):
            warnings.warn("singular Jacobian in pushforward", SingularJacobianWarning,
                          stacklevel=2)
    return np.einsum("...kj,...j->...k", J, np.asarray(v, complex))


def pullback_domain(m: MapSpec, spec2: DomainSpec, samples: int = 512) -> DomainSpec:
    """``{rho o f < 0}`` with a bounding box obtained by mapping ``spec2``'s box back
    through the inverse."""
    if m.n_out != spec2.n:
        raise ValidationError("map target dimension differs from the domain's")
    if m.inverse is None:
        raise ValidationError("pullback needs a map with an inverse")
    rho = substitute(spec2.rho, m.components)
    params = _merge_params(spec2.params, m.params)
    d = 2 * spec2.n
    lo, hi = spec2.bbox[:, 0], spec2.bbox[:, 1]
    x = qmc.scale(qmc.Halton(d, scramble=False).random(samples), lo, hi)
    x = np.concatenate([x, lo[None], hi[None]])
    _, bad = spec2.eval(_complex(x), strict=False)
    zin = m.inverse(_complex(x[~bad]))
    xr = _real(zin)
    pad = 0.05 * (xr.max(0) - xr.min(0)) + 1e-9
    bbox = np.stack([xr.min(0) - pad, xr.max(0) + pad], axis=-1)
    extras = [(lab, substitute(e, m.components)) for lab, e in spec2.psi_extras]
    out = DomainSpec(m.n_in, rho, params, bbox, name=f"pullback({spec2.name})",
                     meta={"pulled_back_from": spec2.name, **{k: v for k, v in spec2.meta.items()}})
    out.psi_extras = extras
    return out


def transport_sigma(m: MapSpec, spec1: DomainSpec, sigma2: SigmaSample,
                    tol_levi: float = DEFAULT_TOL_LEVI, seed: int = 0) -> SigmaSample:
    """Carry weak points of ``spec2`` to ``spec1 = pullback(m, spec2)`` through the inverse,
    re-project and re-classify them there."""
    if m.inverse is None:
        raise ValidationError("transport needs a map with an inverse")
    if len(sigma2) == 0:
        return SigmaSample(np.zeros((0, spec1.n), complex), [], 0, [], tol_levi)
    q = m.inverse(sigma2.points)
    q, ok = project_batch(spec1, q, tol=0.0)
    q = q[ok]
    w = spec1.wirtinger(q, order=2)
    levi = levi_at(w, frame_at(w, q))
    pts, classes = [], []
    for i, c in enumerate(classify(levi, tol_levi, seed=seed)):
        if c.kind == WEAK:
            pts.append(q[i])
            classes.append(c)
    P = np.array(pts) if pts else np.zeros((0, spec1.n), complex)
    return SigmaSample(P, classes, len(sigma2.points), [], tol_levi)


# ------------------------------------------------------------ residual suites


@dataclass
class ResidualReport:
    name: str
    max_residual: float
    count: int
    vacuous: bool = False
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "max_residual": self.max_residual, "count": self.count,
                "vacuous": self.vacuous, **self.details}


def _rel(a, b):
    return np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))


def _random_tangent(w, rng, k):
    """``k`` random unit tangential (1,0) vectors per point, shape ``(k, m, n)``."""
    f = frame_at(w)
    E = f.tangent_basis
    c = rng.normal(size=(k,) + E.shape[:-2] + (E.shape[-1],)) + \
        1j * rng.normal(size=(k,) + E.shape[:-2] + (E.shape[-1],))
    v = np.einsum("...ja,k...a->k...j", E, c)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def check_levi_pushforward(m: MapSpec, spec1: DomainSpec, spec2: DomainSpec, points,
                           pairs: int = 3, seed: int = 0) -> ResidualReport:
    """``Levi_{rho o f}(X, Y)(p)`` against ``Levi_rho(f_* X, f_* Y)(f(p))`` on random
    tangential pairs, plus the identity ``d rho(f_* Ln_{rho o f}) = 1``."""
    p = np.asarray(points, complex).reshape(-1, spec1.n)
    if len(p) == 0:
        return ResidualReport("levi_pushforward", 0.0, 0, vacuous=True)
    rng = np.random.default_rng(seed)
    w1 = spec1.wirtinger(p, order=2)
    fp = m(p)
    w2 = spec2.wirtinger(fp, order=2)
    J = m.jacobian(p)
    X = _random_tangent(w1, rng, pairs)
    Y = _random_tangent(w1, rng, pairs)
    lhs = levi_form(w1, X, Y)
    fX = np.einsum("...kj,...j->...k", J, X)
    fY = np.einsum("...kj,...j->...k", J, Y)
    rhs = levi_form(w2, fX, fY)
    levi_res = float(_rel(lhs, rhs).max())
    Ln1 = frame_at(w1).Ln
    claim = np.einsum("...k,...kj,...j->...", w2.rho_j, J, Ln1)
    claim_res = float(np.abs(claim - 1).max())
    return ResidualReport("levi_pushforward", max(levi_res, claim_res), len(p),
                          details={"levi_residual": levi_res, "claim_residual": claim_res})


def check_alpha_invariance(m: MapSpec, spec1: DomainSpec, spec2: DomainSpec,
                           sigma1: SigmaSample) -> ResidualReport:
    """Both CR-invariance identities at weak points of ``spec1`` along null directions:
    ``alpha_{rho o f}(vbar) = alpha_rho(conj(f_* v))`` and the same for ``i d^c alpha``."""
    P, V = sigma1.pairs()
    if len(P) == 0:
        return ResidualReport("alpha_invariance", 0.0, 0, vacuous=True)
    a1, a2, c1, c2 = alpha_pairs(m, spec1, spec2, P, V)
    ra = float(_rel(a1, a2).max())
    rc = float(_rel(c1, c2).max())
    return ResidualReport("alpha_invariance", max(ra, rc), len(P),
                          details={"alpha_residual": ra, "dc_alpha_residual": rc})


def alpha_pairs(m: MapSpec, spec1: DomainSpec, spec2: DomainSpec, P, V):
    """Both sides of the two identities at points ``P`` (of ``spec1``) and directions ``V``."""
    w1 = spec1.wirtinger(P, order=3)
    w2 = spec2.wirtinger(m(P), order=3)
    fV = pushforward(m, P, V)
    a1 = alpha_on_conj(w1, frame_at(w1), V, tol=1e-8)
    a2 = alpha_on_conj(w2, frame_at(w2), fV, tol=1e-8)
    return a1, a2, idc_alpha_w(w1, V), idc_alpha_w(w2, fV)


def negative_control(m: MapSpec, spec1: DomainSpec, spec2: DomainSpec, points,
                     seed: int = 0) -> ResidualReport:
    """The first identity at tangential directions that are not Levi-null."""
    p = np.asarray(points, complex).reshape(-1, spec1.n)
    w1 = spec1.wirtinger(p, order=2)
    levi = levi_at(w1, frame_at(w1, p))
    keep = levi.lambda_min > 1e-3 * np.maximum(levi.lambda_scale, 1.0)
    p = p[keep]
    if len(p) == 0:
        return ResidualReport("negative_control", 0.0, 0, vacuous=True)
    rng = np.random.default_rng(seed)
    V = _random_tangent(spec1.wirtinger(p, order=2), rng, 1)[0]
    a1, a2, _, _ = alpha_pairs(m, spec1, spec2, p, V)
    return ResidualReport("negative_control", float(_rel(a1, a2).max()), len(p))


def check_rescaling(spec: DomainSpec, psi: Expr, sigma: SigmaSample,
                    params=None) -> ResidualReport:
    """``omega~(v) = omega(v) + d psi(v)`` and
    ``i d^c alpha~(v, vbar) = i d^c alpha(v, vbar) + 2 sum psi_{j kbar} v_j conj(v_k)``
    for ``rho~ = rho e^psi`` at weak points and null directions."""
    P, V = sigma.pairs()
    if len(P) == 0:
        return ResidualReport("rescaling", 0.0, 0, vacuous=True)
    w = spec.wirtinger(P, 3)
    wt = rescaled_wirtinger(spec, psi, P, params)
    wp = to_wirtinger(jet_eval(psi, P, params, 2))
    om_pred = omega_w(w, V) + np.einsum("...j,...j->...", wp.rho_j, V)
    dc_pred = idc_alpha_w(w, V) + 2 * np.real(
        np.einsum("...j,...jk,...k->...", V, wp.rho_jkbar, np.conj(V)))
    r1 = float(_rel(omega_w(wt, V), om_pred).max())
    r2 = float(_rel(idc_alpha_w(wt, V), dc_pred).max())
    return ResidualReport("rescaling", max(r1, r2), len(P),
                          details={"omega_residual": r1, "dc_alpha_residual": r2})


def ab_invariance(m: MapSpec, spec1: DomainSpec, spec2: DomainSpec, sigma1: SigmaSample):
    """Largest change of the pointwise pair (A, B) between corresponding points."""
    P, V = sigma1.pairs()
    if len(P) == 0:
        return 0.0
    A1, B1 = ab_from_jet(spec1.wirtinger(P, 3), V, FORM)
    A2, B2 = ab_from_jet(spec2.wirtinger(m(P), 3), pushforward(m, P, V), FORM)
    return float(max(_rel(A1, A2).max(), _rel(B1, B2).max()))


# ------------------------------------------------------------ experiment


@dataclass
class InvarianceResult:
    df: tuple[float, float]
    st: tuple[float, float]
    sigma_counts: tuple[int, int]
    theta_df: tuple[list, list]
    theta_st: tuple[list, list]

    @property
    def delta_df(self) -> float:
        return _delta(*self.df)

    @property
    def delta_st(self) -> float:
        return _delta(*self.st)


def _delta(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b)


def invariance_experiment(m: MapSpec, spec2: DomainSpec, family=None, budget: int = 500,
                          seed: int = 0, samples: int = 2000,
                          tol_levi: float = DEFAULT_TOL_LEVI) -> InvarianceResult:
    """Optimize the index bounds on ``spec2`` and on its pullback with the psi family
    carried along by composition, and report both pairs."""
    from .indices import PsiFamily, optimize_psi, weak_set

    spec1 = pullback_domain(m, spec2)
    if family is None:
        family = PsiFamily.for_domain(spec2)
    fam1 = PsiFamily([substitute(b, m.components) for b in family.basis], list(family.labels),
                     family.bound, _merge_params(family.params, m.params))
    sigma2 = weak_set(spec2, samples, seed, tol_levi=tol_levi)
    sigma1 = transport_sigma(m, spec1, sigma2, tol_levi, seed)
    out = {}
    for obj in ("df", "steinness"):
        r2 = optimize_psi(spec2, family, obj, budget, seed, sigma=sigma2)
        r1 = optimize_psi(spec1, fam1, obj, budget, seed, sigma=sigma1)
        out[obj] = (r1, r2)
    d1, d2 = out["df"]
    s1, s2 = out["steinness"]
    return InvarianceResult((d1.value, d2.value), (s1.value, s2.value),
                            (len(sigma1), len(sigma2)),
                            (d1.theta.tolist(), d2.theta.tolist()),
                            (s1.theta.tolist(), s2.theta.tolist()))
