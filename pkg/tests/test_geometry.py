import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crindex.domains import ball, ellipsoid
from crindex.errors import ConvergenceError, NumericalError, ValidationError
from crindex.expr import Binary, Expr, Num
from crindex.geometry import (NONPSC, STRICT, WEAK, classify, dedupe, find_weak_points, frame_at,
                              hermitian_pair, levi_at, levi_form, project_to_boundary,
                              sample_boundary)


def _scaled(spec, c):
    return dataclasses.replace(spec, rho=Expr(Binary("mul", Num(c), spec.rho.root), spec.n))


def _levi(spec, p):
    w = spec.wirtinger(np.asarray(p, complex), order=2)
    f = frame_at(w, p)
    return w, f, levi_at(w, f)


def test_ball_frame_at_pole():
    w, f, levi = _levi(ball(2), [1, 0])
    np.testing.assert_allclose(f.N, [1, 0])
    np.testing.assert_allclose(f.Ln, [1, 0])
    assert f.grad_norm == pytest.approx(2.0)
    np.testing.assert_allclose(f.tangent_basis[:, 0], [0, 1], atol=1e-15)
    assert classify(levi).kind == STRICT and levi.lambda_min == pytest.approx(1.0)


def test_complex_ellipsoid_weak_circle(cellipse):
    for t in np.linspace(0, 2 * np.pi, 7):
        _, _, levi = _levi(cellipse, [np.exp(1j * t), 0])
        c = classify(levi)
        assert c.kind == WEAK and c.lambda_min == 0
        assert len(c.null_dirs) == 1
        np.testing.assert_allclose(np.abs(c.null_dirs[0]), [0, 1], atol=1e-15)


def test_negated_ball_is_not_pseudoconvex():
    spec = _scaled(ball(2), -1.0)
    _, _, levi = _levi(spec, [1, 0])
    assert classify(levi).kind == NONPSC


def test_tolerance_must_be_positive():
    _, _, levi = _levi(ball(2), [1, 0])
    with pytest.raises(ValidationError):
        classify(levi, tol_levi=0)


DOMAINS = {"ball": ball(2), "ellipsoid": ellipsoid(1.0, 2.0), "ball3": ball(3)}


@given(st.sampled_from(sorted(DOMAINS)), st.integers(0, 2**31))
@settings(max_examples=60, deadline=None)
def test_frame_identities(name, seed):
    spec = DOMAINS[name]
    rng = np.random.default_rng(seed)
    z0 = rng.normal(size=spec.n) + 1j * rng.normal(size=spec.n)
    p = project_to_boundary(spec, z0 / np.linalg.norm(z0))
    w, f, _ = _levi(spec, p)
    assert abs(np.dot(f.Ln, w.rho_j) - 1) < 1e-12
    assert abs(hermitian_pair(f.N, f.N) - 0.5) < 1e-12
    np.testing.assert_allclose(f.Ln, 2 / f.grad_norm * f.N, atol=1e-12)
    assert np.all(f.is_tangent(f.tangent_basis.T))
    E = f.tangent_basis
    np.testing.assert_allclose(E.conj().T @ E, np.eye(spec.n - 1), atol=1e-12)


def test_cauchy_schwarz_at_weak_points(worm2, worm_sigma):
    assert len(worm_sigma) > 50
    for p, c in zip(worm_sigma.points, worm_sigma.classes):
        w, f, levi = _levi(worm2, p)
        for v in c.null_dirs:
            worst = max(abs(levi_form(w, v, f.tangent_basis[:, a])) for a in range(worm2.n - 1))
            assert worst <= 10 * worm_sigma.tol_levi * max(levi.lambda_scale, 1.0)


def test_worm_weak_set_is_the_core_annulus(worm2, worm_sigma):
    ell = worm2.meta["weak_interval"][1]
    P = worm_sigma.points
    s = np.log(np.abs(P[:, 1]) ** 2)
    assert np.abs(P[:, 0]).max() < 1e-8
    assert s.min() >= -1e-6 and s.max() <= ell + 1e-6
    assert s.max() - s.min() > 0.8 * ell
    assert worm_sigma.nonpseudoconvex == []


@pytest.mark.parametrize("c", [0.25, 3.0, 40.0])
def test_classify_invariant_under_positive_scaling(worm2, cellipse, c):
    for spec in (worm2, cellipse):
        sample = sample_boundary(spec, "random", 80, seed=3).points
        weak = [np.array([1j, 0]), np.array([1, 0j])] if spec is cellipse else []
        for p in list(sample[:20]) + weak:
            _, _, l1 = _levi(spec, p)
            _, _, l2 = _levi(_scaled(spec, c), p)
            a, b = classify(l1), classify(l2)
            assert a.kind == b.kind
            for u, v in zip(a.null_dirs, b.null_dirs):
                assert abs(abs(np.vdot(u, v)) - 1) < 1e-10


def test_projection():
    spec = ball(2)
    np.testing.assert_allclose(project_to_boundary(spec, [2, 0]), [1, 0], atol=1e-14)
    with pytest.raises(NumericalError):
        project_to_boundary(spec, [0, 0])
    spec_log = ellipsoid(1.0, 1.0)
    p = project_to_boundary(spec_log, [0.1 + 0.2j, -0.3j])
    assert abs(spec_log.eval(p)) < 1e-12
    assert issubclass(ConvergenceError, NumericalError)


def test_sampling_is_deterministic_and_on_boundary():
    spec = ball(2)
    a = sample_boundary(spec, "random", 300, seed=5)
    b = sample_boundary(spec, "random", 300, seed=5)
    np.testing.assert_array_equal(a.points, b.points)
    assert np.abs(spec.eval(a.points)).max() < 1e-11
    g = sample_boundary(spec, "grid", 500, seed=0)
    assert len(g.points) > 250 and g.warnings == []
    assert 0 < g.max_nn_gap < 1
    with pytest.raises(ValidationError):
        sample_boundary(spec, "spiral", 10)


def test_dedupe():
    pts = np.array([[0, 0], [1e-9, 0], [1, 0]], complex)
    assert len(dedupe(pts)) == 2


def test_ball_has_empty_weak_set():
    sigma = find_weak_points(ball(2), sample_boundary(ball(2), "grid", 300))
    assert len(sigma) == 0 and sigma.pairs()[0].shape == (0, 2)
    assert math.isfinite(sigma.tol_levi)
