"""Acceptance run: one check per numbered criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are repeated in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import contextlib
import io
import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from corpus import dyadic_corpus, random_corpus  # noqa: E402
from maps import ROTATION, WORM_SHEAR, load  # noqa: E402
from crindex.cli import run  # noqa: E402
from crindex.crmap import (check_alpha_invariance, check_rescaling, invariance_experiment,  # noqa: E402
                           negative_control, pullback_domain, transport_sigma)
from crindex.dangelo import FIELD, FORM, ab_from_jet, alpha_on_conj, commutator_fd, d_alpha_w  # noqa: E402
from crindex.domains import ball, complex_ellipsoid, worm  # noqa: E402
from crindex.expr import parse  # noqa: E402
from crindex.geometry import frame_at, levi_at, sample_boundary  # noqa: E402
from crindex.indices import (PsiFamily, df_estimate, optimize_psi, oracle_exponent,  # noqa: E402
                             oracle_samples, steinness_estimate, weak_set)
from crindex.jet import fd_check  # noqa: E402

RESULTS: list[str] = []
_CACHE: dict = {}


def _worm_sigma(beta=2.0, samples=2000, seed=0):
    key = (beta, samples, seed)
    if key not in _CACHE:
        spec = worm(beta)
        _CACHE[key] = (spec, weak_set(spec, samples, seed))
    return _CACHE[key]


def _record(num: int, ok: bool, detail: str):
    line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def _cli(argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = run(argv)
    return code, json.loads(buf.getvalue())


# ---------------------------------------------------------------- criteria


def criterion_1():
    t0 = time.perf_counter()
    c1, df = _cli(["df", "--builtin", "ball", "--samples", "2000"])
    c2, st = _cli(["steinness", "--builtin", "ball", "--samples", "2000"])
    spec = ball(2)
    bd = sample_boundary(spec, "random", 2000, 0).points
    inner = oracle_exponent(spec, None, "interior", oracle_samples(spec, "interior", bd, 2000))
    outer = oracle_exponent(spec, None, "exterior", oracle_samples(spec, "exterior", bd, 2000))
    dt = time.perf_counter() - t0
    ok = (c1 == c2 == 0 and df["df_lower"] == 1.0 and st["st_upper"] == 1.0
          and df["sigma_count"] == 0 and inner.exponent >= 0.995 and outer.exponent <= 1.005
          and dt < 30)
    return ok, (f"df={df['df_lower']} st={st['st_upper']} oracle_in={inner.exponent:.5f} "
                f"oracle_out={outer.exponent:.5f} time={dt:.1f}s")


def criterion_2():
    spec = complex_ellipsoid(2, 2)
    sigma = weak_set(spec, 2000, 0)
    P, V = sigma.pairs()
    A, B = ab_from_jet(spec.wirtinger(P, 3), V, FORM)
    # hand computation: on z2 = 0 the form is (zbar1, 0) and d a / d zbar vanishes on e2
    on_circle = np.abs(np.abs(P[:, 0]) - 1).max() < 1e-8 and np.abs(P[:, 1]).max() < 1e-6
    along_e2 = np.abs(np.abs(V[:, 1]) - 1).max() < 1e-8
    df = df_estimate(spec, sigma=sigma).value
    st = steinness_estimate(spec, sigma=sigma).value
    amax, bmax = float(np.abs(A).max()), float(np.abs(B).max())
    ok = (len(P) > 0 and on_circle and along_e2 and amax <= 1e-8 and bmax <= 1e-8
          and df == 1.0 and st == 1.0)
    return ok, f"weak points={len(sigma)} max|A|={amax:.1e} max|B|={bmax:.1e} df={df} st={st}"


def criterion_3():
    t0 = time.perf_counter()
    spec, sigma = _worm_sigma()
    P, V = sigma.pairs()
    P, V = P[:200], V[:200]
    w = spec.wirtinger(P, 3)
    A1, B1 = ab_from_jet(w, V, FORM)
    A2, B2 = ab_from_jet(w, V, FIELD)
    route = float((np.abs(B2 - B1) / (1 + np.abs(B1))).max())
    scale = np.maximum(levi_at(w, frame_at(w, P)).lambda_scale, 1.0)
    rng = np.random.default_rng(0)
    ext = 0.0
    for _ in range(3):
        W = rng.normal(size=2) + 1j * rng.normal(size=2)
        _, Bw = ab_from_jet(w, V, FIELD, W=np.broadcast_to(W, P.shape))
        ext = max(ext, float((np.abs(Bw - B2) / scale).max()))
    dt = time.perf_counter() - t0
    ok = len(P) == 200 and route <= 1e-5 and ext <= 1e-6 and dt < 120
    return ok, f"pairs={len(P)} route={route:.1e} extension={ext:.1e} time={dt:.1f}s"


def criterion_4():
    spec, sigma = _worm_sigma()
    P, V = sigma.pairs()
    w = spec.wirtinger(P, 3)
    scale = np.maximum(levi_at(w, frame_at(w, P)).lambda_scale, 1.0)
    worst = float((np.abs(d_alpha_w(w, V, V)) / scale).max())
    return len(P) > 0 and worst <= 1e-8, f"pairs={len(P)} max|d alpha(v,vbar)|/scale={worst:.1e}"


def criterion_5():
    spec = worm(2.0)
    rng = np.random.default_rng(5)
    pts = sample_boundary(spec, "random", 400, 5).points
    pts = pts[rng.choice(len(pts), 50, replace=False)]
    worst = 0.0
    for p in pts:
        w = spec.wirtinger(p, 3)
        f = frame_at(w, p)
        c = rng.normal() + 1j * rng.normal()
        v = c * f.tangent_basis[:, 0]
        exact = alpha_on_conj(w, f, v)
        fd = commutator_fd(spec, p, v)
        worst = max(worst, abs(fd - exact) / max(abs(exact), 1e-12))
    return worst <= 1e-5, f"tangentials=50 max relative={worst:.1e}"


def criterion_6():
    spec, sigma = _worm_sigma()
    rep = check_rescaling(spec, parse("0.3 * log(abs2(z2))", 2), sigma)
    ok = rep.count > 0 and rep.max_residual <= 1e-7
    return ok, (f"pairs={rep.count} omega={rep.details['omega_residual']:.1e} "
                f"dc_alpha={rep.details['dc_alpha_residual']:.1e}")


def criterion_7():
    spec2, sigma2 = _worm_sigma()
    residuals = {}
    for name, text in (("unitary", ROTATION), ("shear", WORM_SHEAR)):
        m = load(text)
        spec1 = pullback_domain(m, spec2)
        sigma1 = transport_sigma(m, spec1, sigma2)
        residuals[name] = check_alpha_invariance(m, spec1, spec2, sigma1).max_residual
    m = load(WORM_SHEAR)
    spec1 = pullback_domain(m, spec2)
    neg = negative_control(m, spec1, spec2, sample_boundary(spec1, "random", 500, 0).points)
    uni = invariance_experiment(load(ROTATION), spec2, budget=300, seed=0, samples=1000)
    d_uni = max(uni.delta_df, uni.delta_st)
    d_shear = []
    for seed in range(5):
        r = invariance_experiment(m, spec2, budget=300, seed=seed, samples=1000)
        d_shear.append(max(r.delta_df, r.delta_st))
    ok = (max(residuals.values()) <= 1e-8 and d_uni <= 1e-6 and max(d_shear) <= 0.02
          and neg.max_residual > 1e-3)
    return ok, (f"alpha residual unitary={residuals['unitary']:.1e} "
                f"shear={residuals['shear']:.1e} delta unitary={d_uni:.1e} "
                f"delta shear(5 seeds)={max(d_shear):.1e} negative control={neg.max_residual:.2f}")


def criterion_8():
    parts, ok = [], True
    for beta in (2.0, 2.5, 3.0):
        t0 = time.perf_counter()
        spec, sigma = _worm_sigma(beta)
        fam = PsiFamily.for_domain(spec, "worm")
        df = optimize_psi(spec, fam, "df", 2000, 0, sigma=sigma).value
        st = optimize_psi(spec, fam, "steinness", 2000, 0, sigma=sigma).value
        dt = time.perf_counter() - t0
        total = (1 / df if df > 0 else np.inf) + (1 / st if st > 0 else np.inf)
        ok &= bool(abs(total - 2) <= 0.1 and dt < 600)
        parts.append(f"beta={beta}: df={df:.4f} st={st:.4f} sum={total:.4f} ({dt:.0f}s)")
    return ok, "; ".join(parts)


def criterion_9():
    spec, sigma = _worm_sigma()
    est = df_estimate(spec, sigma=sigma).value
    bd = np.concatenate([sample_boundary(spec, "random", 2000, 0).points, sigma.points])
    orc = oracle_exponent(spec, None, "interior", oracle_samples(spec, "interior", bd, 2000))
    gap = abs(orc.exponent - est)
    return gap <= 0.05, f"oracle_df={orc.exponent:.4f} df_estimate={est:.4f} gap={gap:.4f}"


def criterion_10():
    worst = max(fd_check(e, z) for e, z in random_corpus(500, 0))
    exact = max(fd_check(e, z, h=2.0**-6) for e, z in dyadic_corpus(100, 0))
    return worst <= 1e-5 and exact == 0.0, f"random corpus max={worst:.1e} polynomial corpus={exact}"


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 11)}


@pytest.mark.parametrize("num", sorted(CRITERIA))
def test_criterion(num):
    ok, detail = CRITERIA[num]()
    assert _record(num, ok, detail), detail


if __name__ == "__main__":
    failed = 0
    for num in sorted(CRITERIA):
        ok, detail = CRITERIA[num]()
        failed += not _record(num, ok, detail)
    sys.exit(1 if failed else 0)
