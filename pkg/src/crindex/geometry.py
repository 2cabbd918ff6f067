"""Boundary points, the per-point frame, the restricted Levi form and classification.

Everything here is batched: a ``WirtingerJet`` with batch shape ``S`` yields a
``Frame`` and ``LeviData`` with the same leading shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .domains import DomainSpec
from .errors import ConvergenceError, NumericalError, ValidationError
from .jet import WirtingerJet

DEFAULT_TOL_LEVI = 1e-8
DEDUPE_RADIUS = 1e-6


def levi_form(w: WirtingerJet, X, Y):
    """``sum rho_{j kbar} X_j conj(Y_k)`` for (1,0) vectors ``X``, ``Y``."""
    return np.einsum("...jk,...j,...k->...", w.rho_jkbar, X, np.conj(Y))


def hermitian_pair(X, Y):
    """Euclidean metric on (1,0) vectors, ``g(X, Y) = 1/2 sum X_j conj(Y_j)``."""
    return 0.5 * np.einsum("...j,...j->...", X, np.conj(Y))


@dataclass
class Frame:
    point: np.ndarray
    dbar_rho: np.ndarray  # (rho_1, ..., rho_n); rho_j = d rho / d z_j
    grad_norm: np.ndarray  # |grad rho| = 2 |d rho|
    N: np.ndarray
    Ln: np.ndarray
    tangent_basis: np.ndarray  # (..., n, n-1): columns span ker d rho

    @property
    def T(self):
        """``(Ln, -conj(Ln))``: holomorphic and antiholomorphic parts of ``T = Ln - conj(Ln)``."""
        return self.Ln, -np.conj(self.Ln)

    def is_tangent(self, v, tol: float = 1e-10):
        return np.abs(np.einsum("...j,...j->...", self.dbar_rho, v)) <= tol * np.maximum(
            np.linalg.norm(v, axis=-1), 1e-300) * np.linalg.norm(self.dbar_rho, axis=-1)

    def __getitem__(self, idx) -> "Frame":
        return Frame(self.point[idx], self.dbar_rho[idx], self.grad_norm[idx], self.N[idx],
                     self.Ln[idx], self.tangent_basis[idx])


def _normalize_phase(V):
    """Rotate each column so its largest-modulus entry is real and positive."""
    idx = np.argmax(np.abs(V), axis=-2)
    big = np.take_along_axis(V, idx[..., None, :], axis=-2)
    phase = big / np.abs(big)
    return V / phase


def frame_at(w: WirtingerJet, point=None, tol: float = 1e-12) -> Frame:
    rho_j = w.rho_j
    q = np.sum(np.abs(rho_j) ** 2, axis=-1)
    if np.any(np.sqrt(q) <= tol):
        raise NumericalError("d rho vanishes: not a defining function at this point")
    norm = np.sqrt(q)
    N = np.conj(rho_j) / norm[..., None]
    Ln = np.conj(rho_j) / q[..., None]
    n = rho_j.shape[-1]
    # Householder reflection sending the unit normal direction to a multiple of e_1
    u = N
    u1 = u[..., 0]
    ph = np.where(np.abs(u1) > 0, u1 / np.where(np.abs(u1) > 0, np.abs(u1), 1.0), 1.0)
    h = u.copy()
    h[..., 0] += ph
    hh = np.sum(np.abs(h) ** 2, axis=-1)
    H = np.eye(n) - 2 * h[..., :, None] * np.conj(h[..., None, :]) / hh[..., None, None]
    basis = _normalize_phase(H[..., :, 1:])
    if point is None:
        point = np.full(rho_j.shape, np.nan + 0j)
    return Frame(np.asarray(point, complex), rho_j, 2 * norm, N, Ln, basis)


@dataclass
class LeviData:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, in tangent-basis coordinates
    lambda_scale: np.ndarray
    basis: np.ndarray  # tangent basis the matrix is written in

    @property
    def lambda_min(self):
        return self.eigenvalues[..., 0]

    def ambient(self, coords):
        """(1,0) vector in C^n from tangent-basis coordinates."""
        return np.einsum("...ja,...a->...j", self.basis, coords)

    def __getitem__(self, idx) -> "LeviData":
        return LeviData(self.matrix[idx], self.eigenvalues[idx], self.eigenvectors[idx],
                        self.lambda_scale[idx], self.basis[idx])


def levi_at(w: WirtingerJet, f: Frame) -> LeviData:
    E = f.tangent_basis
    M = np.einsum("...ja,...jk,...kb->...ab", E, w.rho_jkbar, np.conj(E))
    # M[a, b] = Levi(e_a, e_b) is the transpose of the usual Hermitian matrix;
    # use its conjugate so that eigenvectors act as column coordinates of e.
    H = np.conj(M)
    H = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
    vals, vecs = np.linalg.eigh(H)
    scale = np.max(np.abs(vals), axis=-1)
    return LeviData(np.conj(H), vals, vecs, scale, E)


@dataclass
class PointClass:
    kind: str  # "strict" | "weak" | "nonpseudoconvex"
    lambda_min: float
    null_dirs: list = field(default_factory=list)  # unit (1,0) vectors in C^n

    @property
    def is_weak(self) -> bool:
        return self.kind == "weak"


STRICT, WEAK, NONPSC = "strict", "weak", "nonpseudoconvex"


def classify(levi: LeviData, tol_levi: float = DEFAULT_TOL_LEVI, extra_null_dirs: int = 8,
             seed: int = 0):
    """Classify one point (unbatched ``LeviData``) or a batch (returns a list)."""
    if tol_levi <= 0:
        raise ValidationError("tol_levi must be positive")
    if levi.eigenvalues.ndim > 1:
        flat = levi.eigenvalues.shape[:-1]
        return [classify(levi[idx], tol_levi, extra_null_dirs, seed)
                for idx in np.ndindex(*flat)]
    vals = levi.eigenvalues
    thresh = tol_levi * max(float(levi.lambda_scale), 1.0)
    lam = float(vals[0])
    if lam < -thresh:
        return PointClass(NONPSC, lam)
    if abs(lam) > thresh:
        return PointClass(STRICT, lam)
    null = np.abs(vals) <= thresh
    coords = [levi.eigenvectors[:, i] for i in np.flatnonzero(null)]
    if len(coords) > 1 and extra_null_dirs > 0:
        rng = np.random.default_rng(seed)
        Q = np.stack(coords, axis=-1)
        for _ in range(extra_null_dirs):
            c = rng.normal(size=len(coords)) + 1j * rng.normal(size=len(coords))
            coords.append(Q @ (c / np.linalg.norm(c)))
    dirs = [_normalize_phase(levi.ambient(c)[:, None])[:, 0] for c in coords]
    return PointClass(WEAK, lam, dirs)


# ------------------------------------------------------------ projection


def _real(z):
    x = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    x[..., 0::2], x[..., 1::2] = z.real, z.imag
    return x


def _complex(x):
    return x[..., 0::2] + 1j * x[..., 1::2]


def project_batch(spec: DomainSpec, z0, max_iter: int = 50, tol: float = 1e-12,
                  accept: float = 1e-12):
    """Newton projection of many starts onto ``rho = 0``.

    Iterates until ``|rho| <= tol (1 + |grad rho|)``; with ``tol = 0`` it runs
    until no further decrease is possible, i.e. to working precision.  A point
    is ``ok`` when it ends with ``|rho| <= accept (1 + |grad rho|)``.  Starts
    that leave the domain of smoothness or hit a vanishing gradient fail.
    """
    x = _real(np.asarray(z0, complex).reshape(-1, spec.n))
    m = x.shape[0]
    ok = np.zeros(m, bool)
    alive = np.ones(m, bool)
    jet, bad = spec.jet(_complex(x), order=1, strict=False)
    alive &= ~bad
    r = np.where(alive, jet.value.real, np.inf)
    g = np.where(alive[:, None], jet.grad.real, 0.0)
    for _ in range(max_iter + 1):
        gn = np.linalg.norm(g, axis=-1)
        done = alive & ((np.abs(r) <= tol * (1 + gn)) | (r == 0))
        ok |= done
        alive &= ~done
        degenerate = alive & (gn < 1e-14)
        alive &= ~degenerate
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        step = (r[idx] / gn[idx] ** 2)[:, None] * g[idx]
        t = np.ones(len(idx))
        pending = np.ones(len(idx), bool)
        new_x = x[idx].copy()
        new_r = r[idx].copy()
        new_g = g[idx].copy()
        near = np.abs(r[idx]) <= accept * (1 + gn[idx])
        for k in range(30):
            if k == 3:
                # already at working precision: give up early
                stop = pending & near
                alive[idx[stop]] = False
                pending &= ~near
            if not pending.any():
                break
            sel = np.flatnonzero(pending)
            cand = x[idx[sel]] - t[sel, None] * step[sel]
            cj, cbad = spec.jet(_complex(cand), order=1, strict=False)
            cr = cj.value.real
            good = ~cbad & (np.abs(cr) < np.abs(r[idx[sel]]) * (1 - 1e-4 * t[sel])
                            + tol * (1 + gn[idx[sel]]))
            acc = sel[good]
            new_x[acc] = cand[good]
            new_r[acc] = cr[good]
            new_g[acc] = cj.grad.real[good]
            pending[acc] = False
            t[sel[~good]] *= 0.5
        alive[idx[pending]] = False
        x[idx], r[idx], g[idx] = new_x, new_r, new_g
    gn = np.linalg.norm(g, axis=-1)
    ok |= ~ok & ~bad & np.isfinite(r) & (np.abs(r) <= accept * (1 + gn))
    return _complex(x), ok


def project_to_boundary(spec: DomainSpec, z0, max_iter: int = 50):
    z0 = np.asarray(z0, complex)
    gz = spec.jet(z0[None], order=1, strict=False)
    jet, bad = gz
    if bad[0]:
        raise NumericalError("start point outside the domain of smoothness")
    if np.linalg.norm(jet.grad.real[0]) < 1e-14:
        raise NumericalError("vanishing gradient at the start point (critical point of rho)")
    pts, ok = project_batch(spec, z0[None], max_iter)
    if not ok[0]:
        raise ConvergenceError("boundary projection did not converge")
    return pts[0]


# -------------------------------------------------------------- sampling


@dataclass
class BoundarySample:
    points: np.ndarray
    requested: int
    strategy: str
    seed: int
    max_nn_gap: float
    warnings: list[str] = field(default_factory=list)


def dedupe(points, radius: float = DEDUPE_RADIUS):
    """Drop points within ``radius`` of an earlier one (order preserving)."""
    if len(points) == 0:
        return points
    x = _real(points)
    tree = cKDTree(x)
    keep = np.ones(len(x), bool)
    for i, j in sorted(tree.query_pairs(radius)):
        if keep[i] and keep[j]:
            keep[j] = False
    return points[keep]


def _starts(spec: DomainSpec, strategy: str, count: int, seed: int):
    lo, hi = spec.bbox[:, 0], spec.bbox[:, 1]
    d = 2 * spec.n
    if strategy == "grid":
        m = max(2, math.ceil(count ** (1.0 / d)))
        axes = [lo[k] + (np.arange(m) + 0.5) * (hi[k] - lo[k]) / m for k in range(d)]
        x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    elif strategy == "random":
        x = qmc.scale(qmc.Halton(d, scramble=True, seed=seed).random(count), lo, hi)
    else:
        raise ValidationError(f"unknown sampling strategy {strategy!r}")
    return _complex(x)


def nearest_gap(points) -> float:
    if len(points) < 2:
        return math.inf
    dist, _ = cKDTree(_real(points)).query(_real(points), k=2)
    return float(dist[:, 1].max())


def sample_boundary(spec: DomainSpec, strategy: str = "random", count: int = 500,
                    seed: int = 0) -> BoundarySample:
    bbox = np.asarray(spec.bbox, float)
    if bbox.size == 0 or np.any(bbox[:, 1] <= bbox[:, 0]):
        raise ValidationError("empty bounding box")
    if count <= 0:
        raise ValidationError("sample count must be positive")
    z0 = _starts(spec, strategy, count, seed)
    pts, ok = project_batch(spec, z0)
    pts = pts[ok]
    inside = np.all((_real(pts) >= bbox[:, 0]) & (_real(pts) <= bbox[:, 1]), axis=-1)
    pts = dedupe(pts[inside])
    warnings = []
    if len(pts) < count / 2:
        warnings.append(f"only {len(pts)} boundary points found for {count} requested")
    return BoundarySample(pts, count, strategy, seed, nearest_gap(pts), warnings)


# ------------------------------------------------------ weak-point search


def levi_min(spec: DomainSpec, z):
    """Smallest restricted Levi eigenvalue and its scale at boundary points ``z``."""
    w = spec.wirtinger(z, order=2)
    levi = levi_at(w, frame_at(w, z))
    return levi.lambda_min, levi.lambda_scale


def _tangent_frames(spec: DomainSpec, z):
    """Orthonormal real bases ``(m, 2n-1, 2n)`` of the real tangent spaces at ``z``."""
    g = spec.jet(z, order=1).grad.real
    _, _, vt = np.linalg.svd(g[:, None, :])
    return vt[:, 1:, :]


def refine_weak(spec: DomainSpec, z, iters: int = 20, h: float = 1e-4,
                target: float = 0.0, max_step: float | None = None):
    """Drive boundary points toward the zero set of the smallest Levi eigenvalue.

    Saddle-free Newton on ``lambda_min`` restricted to the boundary, with
    finite-difference derivatives in tangent coordinates and projection back
    after each step.  Returns ``(points, lambda_min)``.
    """
    z = np.asarray(z, complex).reshape(-1, spec.n)
    if max_step is None:
        max_step = 0.05 * spec.diameter
    lam, _ = levi_min(spec, z)
    d = 2 * spec.n - 1
    pairs = [(a, b) for a in range(d) for b in range(a + 1, d)]
    active = np.abs(lam) > target
    for _ in range(iters):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        x = _real(z[idx])
        B = _tangent_frames(spec, z[idx])
        offs = [np.zeros((len(idx), 2 * spec.n))]
        for a in range(d):
            offs += [h * B[:, a], -h * B[:, a]]
        for a, b in pairs:
            for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                offs.append(h * (sa * B[:, a] + sb * B[:, b]))
        stencil = np.stack([x + o for o in offs], axis=0)
        pz, pok = project_batch(spec, _complex(stencil.reshape(-1, 2 * spec.n)), tol=0.0)
        vals = np.full(len(pz), np.nan)
        if pok.any():
            vals[pok], _ = levi_min(spec, pz[pok])
        vals = vals.reshape(len(offs), len(idx))
        f0 = vals[0]
        grad = np.empty((len(idx), d))
        hess = np.empty((len(idx), d, d))
        for a in range(d):
            fp, fm = vals[1 + 2 * a], vals[2 + 2 * a]
            grad[:, a] = (fp - fm) / (2 * h)
            hess[:, a, a] = (fp - 2 * f0 + fm) / h**2
        base = 1 + 2 * d
        for k, (a, b) in enumerate(pairs):
            pp, pm, mp, mm = vals[base + 4 * k: base + 4 * k + 4]
            hess[:, a, b] = hess[:, b, a] = (pp - pm - mp + mm) / (4 * h * h)
        finite = np.isfinite(grad).all(-1) & np.isfinite(hess).all((-1, -2))
        ev, evec = np.linalg.eigh(np.where(finite[:, None, None], hess, np.eye(d)))
        # flat directions along the weak set would give huge, useless steps
        cutoff = 1e-3 * np.maximum(np.abs(ev).max(-1, keepdims=True), 1e-30)
        inv = np.where(np.abs(ev) > cutoff, 1 / np.maximum(np.abs(ev), cutoff), 0.0)
        gc = np.einsum("mba,mb->ma", evec, np.where(finite[:, None], grad, 0.0))
        step_t = -np.einsum("mab,mb->ma", evec, inv * gc)
        sn = np.linalg.norm(step_t, axis=-1)
        step_t *= np.minimum(1.0, max_step / np.maximum(sn, 1e-300))[:, None]
        step = np.einsum("ma,mad->md", step_t, B)
        cur = lam[idx]
        improved = np.zeros(len(idx), bool)
        t = np.ones(len(idx))
        for _ in range(8):
            sel = np.flatnonzero(~improved & finite)
            if len(sel) == 0:
                break
            cz, cok = project_batch(spec, _complex(x[sel] + t[sel, None] * step[sel]),
                                     tol=0.0)
            cl = np.full(len(sel), np.inf)
            if cok.any():
                cl[cok], _ = levi_min(spec, cz[cok])
            good = cok & (np.abs(cl) < np.abs(cur[sel]))
            gi = sel[good]
            z[idx[gi]] = cz[good]
            lam[idx[gi]] = cl[good]
            improved[gi] = True
            t[sel[~good]] *= 0.5
        active[idx[~improved]] = False
        active &= np.abs(lam) > target
    lam, _ = levi_min(spec, z)
    return z, lam


@dataclass
class SigmaSample:
    """Numerically weak boundary points with their null directions."""
    points: np.ndarray
    classes: list[PointClass]
    scanned: int
    nonpseudoconvex: list[tuple[np.ndarray, float]]
    tol_levi: float
    warnings: list[str] = field(default_factory=list)

    def pairs(self):
        """``(point, direction)`` arrays over all null directions."""
        P, V = [], []
        for p, c in zip(self.points, self.classes):
            for v in c.null_dirs:
                P.append(p)
                V.append(v)
        if not P:
            n = self.points.shape[-1] if self.points.ndim == 2 else 2
            return np.zeros((0, n), complex), np.zeros((0, n), complex)
        return np.array(P), np.array(V)

    def __len__(self):
        return len(self.points)


def find_weak_points(spec: DomainSpec, sample: BoundarySample | np.ndarray,
                     tol_levi: float = DEFAULT_TOL_LEVI, refine: bool = True,
                     refine_fraction: float = 0.25, seed: int = 0) -> SigmaSample:
    """Classify sampled boundary points, refining near-weak ones onto the weak set.

    Candidates for refinement are the points whose relative smallest eigenvalue
    lies in the lowest ``refine_fraction`` quantile; refined points that fail the
    weak test are discarded.
    """
    pts = sample.points if isinstance(sample, BoundarySample) else np.asarray(sample, complex)
    if len(pts) == 0:
        return SigmaSample(pts, [], 0, [], tol_levi)
    w = spec.wirtinger(pts, order=2)
    levi = levi_at(w, frame_at(w, pts))
    rel = levi.lambda_min / np.maximum(levi.lambda_scale, 1.0)
    bad = rel < -tol_levi
    nonpsc = [(pts[i], float(levi.lambda_min[i])) for i in np.flatnonzero(bad)]
    candidates = pts
    if refine and len(pts):
        lim = np.quantile(rel, refine_fraction)
        pick = (rel <= lim) & ~bad
        refined, _ = refine_weak(spec, pts[pick])
        candidates = np.concatenate([pts[~pick], refined]) if pick.any() else pts
    tight, tok = project_batch(spec, candidates, tol=0.0)
    candidates = dedupe(np.where(tok[:, None], tight, candidates))
    w = spec.wirtinger(candidates, order=2)
    levi = levi_at(w, frame_at(w, candidates))
    weak_pts, classes = [], []
    for i, c in enumerate(classify(levi, tol_levi, seed=seed)):
        if c.kind == WEAK:
            weak_pts.append(candidates[i])
            classes.append(c)
        elif c.kind == NONPSC and not any(np.allclose(candidates[i], q) for q, _ in nonpsc):
            nonpsc.append((candidates[i], c.lambda_min))
    P = np.array(weak_pts) if weak_pts else np.zeros((0, spec.n), complex)
    return SigmaSample(P, classes, len(pts), nonpsc, tol_levi)
