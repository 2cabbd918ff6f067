import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crindex.dangelo import (FIELD, FORM, ab_from_jet, ab_quantities, alpha_at, alpha_on_conj,
                             commutator_fd, d_alpha, d_alpha_w, dc_alpha, omega)
from crindex.domains import ball
from crindex.errors import ValidationError
from crindex.geometry import frame_at, levi_at, project_to_boundary, sample_boundary
from crindex.expr import parse


def _weak_pairs(sigma, limit=None):
    P, V = sigma.pairs()
    return (P, V) if limit is None else (P[:limit], V[:limit])


def test_ball_dc_alpha_by_hand():
    # a_j = zbar_j / |z|^2, so d a_j / d zbar_m = delta_jm - zbar_j z_m on the sphere
    # and i d^c alpha(v, vbar) = 2 |v|^2 for tangential v
    spec = ball(2)
    rng = np.random.default_rng(0)
    for _ in range(10):
        p = project_to_boundary(spec, rng.normal(size=2) + 1j * rng.normal(size=2))
        v = np.array([-np.conj(p[1]), np.conj(p[0])]) * (rng.normal() + 1j * rng.normal())
        assert dc_alpha(spec, p, v) == pytest.approx(2 * np.vdot(v, v).real, rel=1e-13)
        np.testing.assert_allclose(alpha_at(spec.wirtinger(p, 2)).a, np.conj(p), atol=1e-14)


def test_complex_ellipsoid_weak_circle_by_hand(cellipse):
    for t in np.linspace(0, 2 * np.pi, 5):
        p = np.array([np.exp(1j * t), 0])
        v = np.array([0, 1.0 + 0j])
        assert omega(cellipse, p, v) == 0
        q = ab_quantities(cellipse, p, v)
        assert abs(q.A) <= 1e-15 and abs(q.B) <= 1e-15


def test_route_agreement(worm2, worm_sigma):
    P, V = _weak_pairs(worm_sigma)
    w = worm2.wirtinger(P, 3)
    A1, B1 = ab_from_jet(w, V, FORM)
    A2, B2 = ab_from_jet(w, V, FIELD)
    assert np.all(np.abs(A1 - A2) <= 1e-10)
    assert np.all(np.abs(B1 - B2) <= 1e-5 * (1 + np.abs(B1)))


def test_extension_independence(worm2, worm_sigma, rng):
    P, V = _weak_pairs(worm_sigma, 100)
    w = worm2.wirtinger(P, 3)
    _, B0 = ab_from_jet(w, V, FIELD)
    for _ in range(3):
        W = rng.normal(size=2) + 1j * rng.normal(size=2)
        _, B = ab_from_jet(w, V, FIELD, W=np.broadcast_to(W, P.shape))
        assert np.all(np.abs(B - B0) <= 1e-6 * (1 + np.abs(B0)))


def test_extension_matters_off_the_null_set(rng):
    spec = ball(2)
    P = sample_boundary(spec, "random", 20, 1).points
    w = spec.wirtinger(P, 3)
    f = frame_at(w, P)
    V = f.tangent_basis[..., 0]
    _, B0 = ab_from_jet(w, V, FIELD)
    _, B = ab_from_jet(w, V, FIELD, W=np.broadcast_to([1.0, 2.0j], P.shape))
    assert np.abs(B - B0).max() > 1e-3


def test_d_alpha_vanishes_on_null_directions(worm2, worm_sigma):
    P, V = _weak_pairs(worm_sigma)
    w = worm2.wirtinger(P, 3)
    scale = np.maximum(levi_at(w, frame_at(w, P)).lambda_scale, 1.0)
    assert np.all(np.abs(d_alpha_w(w, V, V)) <= 1e-8 * scale)


def test_d_alpha_is_skew_hermitian(rng):
    spec = ball(2)
    p = np.array([0.6, 0.8j])
    X, Y = (rng.normal(size=2) + 1j * rng.normal(size=2) for _ in range(2))
    assert d_alpha(spec, p, X, Y) == pytest.approx(-np.conj(d_alpha(spec, p, Y, X)), abs=1e-14)


@given(st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3), st.integers(0, 50))
@settings(max_examples=50, deadline=None)
def test_quadratic_scaling(c, k):
    spec = _WORM
    p = _P[k % len(_P)]
    v = _V[k % len(_V)]
    a = ab_quantities(spec, p, v)
    b = ab_quantities(spec, p, c * v)
    m = abs(c) ** 2
    assert b.A == pytest.approx(m * a.A, rel=1e-12, abs=1e-12 * m)
    assert b.B == pytest.approx(m * a.B, rel=1e-9, abs=1e-12 * m)


def _prep():
    from crindex.domains import worm
    spec = worm(2.0)
    pts = sample_boundary(spec, "random", 60, 2).points
    w = spec.wirtinger(pts, 2)
    V = frame_at(w, pts).tangent_basis[..., 0]
    return spec, pts, V


_WORM, _P, _V = _prep()


def test_alpha_of_T_vanishes_and_alpha_is_real():
    w = _WORM.wirtinger(_P, 3)
    f = frame_at(w, _P)
    form = alpha_at(w, f)
    Ln, mLnbar = f.T
    assert np.abs(form.on(Ln, mLnbar)).max() <= 1e-14
    # value on the real vector v + vbar is real, and the two routes to alpha(vbar) agree
    val = form.on(_V, np.conj(_V))
    assert np.abs(val.imag).max() <= 1e-14
    np.testing.assert_allclose(alpha_on_conj(w, f, _V), form.on_conj(_V), atol=1e-14)


def test_alpha_rejects_non_tangent():
    w = _WORM.wirtinger(_P[0], 3)
    with pytest.raises(ValidationError):
        alpha_on_conj(w, frame_at(w), np.conj(w.rho_j))


def test_commutator_matches_form(worm2, worm_sigma, rng):
    P = worm_sigma.points[:25]
    pts = np.concatenate([P, _P[:25]])
    for p in pts:
        w = worm2.wirtinger(p, 3)
        f = frame_at(w, p)
        c = rng.normal(size=1) + 1j * rng.normal(size=1)
        v = f.tangent_basis[:, 0] * c[0]
        exact = alpha_on_conj(w, f, v)
        fd = commutator_fd(worm2, p, v)
        assert abs(fd - exact) <= 1e-5 * max(abs(exact), 1.0)


def test_rescaling_law(worm2, worm_sigma):
    from crindex.crmap import check_rescaling
    psi = parse("0.3 * log(abs2(z2))", 2)
    rep = check_rescaling(worm2, psi, worm_sigma)
    assert rep.count > 0 and rep.max_residual <= 1e-7
