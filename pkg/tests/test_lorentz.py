import numpy as np
import pytest

from hypertropy.lorentz import Lorentz, ManifoldError, minkowski_inner

from oracles import frechet_centroid_descent

MAN = Lorentz(-1.0)
ORIGIN = MAN.origin(2)


def radial(t):
    return np.array([np.cosh(t), np.sinh(t), 0.0])


def random_points(rng, n, d=2, scale=1.0, curvature=-1.0):
    man = Lorentz(curvature)
    tangents = np.concatenate(
        [np.zeros((n, 1)), rng.normal(0, scale, size=(n, d))], axis=1)
    base = np.broadcast_to(man.origin(d), tangents.shape)
    return man.expmap(base, tangents)


def test_inner_origin():
    assert minkowski_inner(ORIGIN, ORIGIN) == pytest.approx(-1.0)


def test_inner_hyperboloid_constraint():
    p = radial(1.0)
    assert minkowski_inner(p, p) == pytest.approx(-1.0)


def test_inner_mixed():
    assert minkowski_inner(ORIGIN, radial(1.0)) == pytest.approx(-np.cosh(1.0))


def test_inner_dimension_mismatch():
    with pytest.raises(ManifoldError):
        minkowski_inner(np.ones(3), np.ones(4))


def test_dist_zero_at_same_point():
    assert MAN.dist(ORIGIN, ORIGIN) == 0.0


def test_dist_radial():
    assert MAN.dist(ORIGIN, radial(0.7)) == pytest.approx(0.7, abs=1e-12)


def test_dist_symmetric_pair():
    a, b = radial(1.0), np.array([np.cosh(1.0), -np.sinh(1.0), 0.0])
    # arccosh(cosh^2 1 + sinh^2 1) = arccosh(cosh 2) = 2
    assert MAN.dist(a, b) == pytest.approx(2.0, abs=1e-12)


def test_dist_rejects_off_manifold():
    with pytest.raises(ManifoldError):
        MAN.dist(np.array([1.0, 1.0, 0.0]), ORIGIN)


def test_sqdist_values():
    assert MAN.sqdist(ORIGIN, ORIGIN) == 0.0
    assert MAN.sqdist(ORIGIN, radial(1.0)) == pytest.approx(-2 + 2 * np.cosh(1.0))
    a, b = radial(1.0), np.array([np.cosh(1.0), -np.sinh(1.0), 0.0])
    assert MAN.sqdist(a, b) == pytest.approx(-2 + 2 * np.cosh(2.0))


def test_expmap_zero_vector():
    assert np.allclose(MAN.expmap(ORIGIN, np.zeros(3)), ORIGIN)


def test_expmap_radial_closed_form():
    t = 0.9
    out = MAN.expmap(ORIGIN, np.array([0.0, t, 0.0]))
    assert np.allclose(out, radial(t), atol=1e-12)


def test_expmap_rejects_non_tangent():
    with pytest.raises(ManifoldError):
        MAN.expmap(ORIGIN, np.array([1.0, 0.0, 0.0]))


def test_log_exp_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(50):
        base = random_points(rng, 1)[0]
        v = MAN.project_tangent(base, rng.normal(size=3))
        y = MAN.expmap(base, v)
        back = MAN.logmap(base, y)
        assert np.allclose(back, v, atol=1e-9)


def test_logmap_at_base_is_zero():
    assert np.allclose(MAN.logmap(ORIGIN, ORIGIN), 0.0)


def test_logmap_radial():
    t = 0.8
    assert np.allclose(MAN.logmap(ORIGIN, radial(t)), [0.0, t, 0.0], atol=1e-12)


def test_log_norm_equals_distance():
    rng = np.random.default_rng(5)
    for _ in range(30):
        x, y = random_points(rng, 2)
        v = MAN.logmap(x, y)
        norm = np.sqrt(max(minkowski_inner(v, v), 0.0))
        assert norm == pytest.approx(MAN.dist(x, y), abs=1e-9)


def test_dist_metric_properties():
    rng = np.random.default_rng(9)
    for _ in range(30):
        x, y, z = random_points(rng, 3)
        assert MAN.dist(x, y) == pytest.approx(MAN.dist(y, x), abs=1e-9)
        assert MAN.dist(x, y) + MAN.dist(y, z) >= MAN.dist(x, z) - 1e-9


def test_centroid_single_point():
    p = radial(1.3)
    assert np.allclose(MAN.centroid(p[None, :], np.array([1.0])), p, atol=1e-12)


def test_centroid_symmetry():
    pts = np.stack([radial(1.0), [np.cosh(1.0), -np.sinh(1.0), 0.0]])
    assert np.allclose(MAN.centroid(pts, np.array([1.0, 1.0])), ORIGIN, atol=1e-12)


def test_centroid_matches_descent_oracle():
    rng = np.random.default_rng(17)
    for _ in range(10):
        pts = random_points(rng, 5)
        w = rng.uniform(0.1, 1.0, size=5)
        closed = MAN.centroid(pts, w)
        numeric = frechet_centroid_descent(pts, w)
        assert MAN.dist(closed, numeric) < 1e-6


def test_centroid_weight_rescaling_invariance():
    rng = np.random.default_rng(21)
    pts = random_points(rng, 6)
    w = rng.uniform(0.1, 1.0, size=6)
    a = MAN.centroid(pts, w)
    b = MAN.centroid(pts, 17.0 * w)
    assert np.allclose(a, b, atol=1e-12)


def test_centroid_rejects_bad_weights():
    pts = random_points(np.random.default_rng(0), 3)
    with pytest.raises(ManifoldError):
        MAN.centroid(pts, np.zeros(3))
    with pytest.raises(ManifoldError):
        MAN.centroid(pts, np.array([1.0, -1.0, 0.0]))


def test_centroid_on_manifold_residual():
    rng = np.random.default_rng(23)
    for _ in range(20):
        pts = random_points(rng, 4, scale=2.0)
        mu = MAN.centroid(pts, rng.uniform(0.0, 1.0, size=4) + 0.01)
        assert abs(minkowski_inner(mu, mu) + 1.0) < 1e-9


def test_to_poincare_origin():
    assert np.allclose(MAN.to_poincare(ORIGIN), 0.0)


def test_to_poincare_radial_identity():
    t = 1.1
    out = MAN.to_poincare(radial(t))
    assert out[0] == pytest.approx(np.tanh(t / 2), abs=1e-12)
    assert out[1] == 0.0


def test_to_poincare_norm_below_one():
    rng = np.random.default_rng(29)
    pts = random_points(rng, 50, scale=3.0)
    norms = np.linalg.norm(MAN.to_poincare(pts), axis=1)
    assert np.all(norms < 1.0)


def test_lift_zero_row_is_origin():
    out = MAN.lift(np.zeros((1, 2)))
    assert np.allclose(out[0], ORIGIN)


def test_lift_unit_feature():
    out = MAN.lift(np.array([[1.0, 0.0]]))
    assert np.allclose(out[0], radial(1.0), atol=1e-12)


def test_lift_on_manifold():
    rng = np.random.default_rng(31)
    out = MAN.lift(rng.normal(size=(20, 7)))
    assert np.all(np.abs(minkowski_inner(out, out) + 1.0) < 1e-9)


def test_constructors_hold_invariant_other_curvature():
    man = Lorentz(-0.5)
    rng = np.random.default_rng(37)
    tangents = np.concatenate([np.zeros((10, 1)), rng.normal(size=(10, 2))], axis=1)
    base = np.broadcast_to(man.origin(2), tangents.shape)
    pts = man.expmap(base, tangents)
    assert np.all(np.abs(minkowski_inner(pts, pts) - 1 / -0.5) < 1e-9)
    mu = man.centroid(pts, np.ones(10))
    assert abs(minkowski_inner(mu, mu) - 1 / -0.5) < 1e-9
