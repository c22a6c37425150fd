"""Backend parity and primitive identities for the geometry kernels."""

import math

import numpy as np
import pytest

from proxflow._kernels import BACKEND, _pure

try:
    from proxflow._kernels import _core
except ImportError:
    _core = None

needs_core = pytest.mark.skipif(_core is None, reason="compiled core not built")


def unit(rng, n=3):
    v = rng.normal(size=n)
    return v / np.linalg.norm(v)


@needs_core
def test_backend_selected():
    assert BACKEND == "cython"


@needs_core
def test_sphere_parity(rng):
    for _ in range(200):
        x, y, z = unit(rng), unit(rng), unit(rng)
        ts = rng.uniform(0, 1, size=5)
        assert _core.sph_dist(x, y) == pytest.approx(_pure.sph_dist(x, y), abs=1e-15)
        np.testing.assert_allclose(
            _core.sph_geo(x, y, 0.3), _pure.sph_geo(x, y, 0.3), atol=1e-15
        )
        np.testing.assert_allclose(
            _core.sph_dist2_along(x, y, z, ts),
            _pure.sph_dist2_along(x, y, z, ts),
            atol=1e-14,
        )
        np.testing.assert_allclose(
            _core.sph_log(x, y), _pure.sph_log(x, y), atol=1e-14
        )


@needs_core
def test_euclidean_parity(rng):
    for _ in range(200):
        x, y, z = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3)
        ts = rng.uniform(0, 1, size=5)
        assert _core.euc_dist(x, y) == pytest.approx(_pure.euc_dist(x, y), abs=1e-15)
        np.testing.assert_allclose(
            _core.euc_geo(x, y, 0.7), _pure.euc_geo(x, y, 0.7), atol=1e-15
        )
        np.testing.assert_allclose(
            _core.euc_dist2_along(x, y, z, ts),
            _pure.euc_dist2_along(x, y, z, ts),
            atol=1e-13,
        )


@needs_core
def test_tree_parity(rng):
    for _ in range(500):
        e1, e2, ez = rng.integers(0, 3, size=3)
        o1, o2, oz = rng.uniform(0, 2, size=3)
        ts = rng.uniform(0, 1, size=4)
        assert _core.tree_dist(e1, o1, e2, o2) == _pure.tree_dist(e1, o1, e2, o2)
        assert _core.tree_geo(e1, o1, e2, o2, 0.4) == _pure.tree_geo(
            e1, o1, e2, o2, 0.4
        )
        np.testing.assert_allclose(
            _core.tree_dist2_along(e1, o1, e2, o2, ez, oz, ts),
            _pure.tree_dist2_along(e1, o1, e2, o2, ez, oz, ts),
            atol=1e-15,
        )


@needs_core
def test_trig_parity(rng):
    for _ in range(200):
        b, c = rng.uniform(0.1, 1.5, size=2)
        a = rng.uniform(abs(b - c) + 1e-3, min(b + c - 1e-3, math.pi))
        ts = rng.uniform(0, 1, size=5)
        assert _core.angle_from_sides(a, b, c) == pytest.approx(
            _pure.angle_from_sides(a, b, c), abs=1e-14
        )
        np.testing.assert_allclose(
            _core.sph_comparison_dist(b, c, a, ts),
            _pure.sph_comparison_dist(b, c, a, ts),
            atol=1e-14,
        )


def test_sph_dist_stability(rng):
    x = unit(rng)
    # tiny perturbations: atan2 form keeps full precision near zero
    y = x + 1e-9 * unit(rng)
    y = y / np.linalg.norm(y)
    d = _pure.sph_dist(x, y)
    assert 0 <= d < 1e-8
    assert d == pytest.approx(2 * math.asin(np.linalg.norm(x - y) / 2), rel=1e-6)


def test_slerp_endpoints_and_speed(rng):
    x, y = unit(rng), unit(rng)
    np.testing.assert_allclose(_pure.sph_geo(x, y, 0.0), x, atol=1e-15)
    np.testing.assert_allclose(_pure.sph_geo(x, y, 1.0), y, atol=1e-14)
    th = _pure.sph_dist(x, y)
    for t in (0.25, 0.5, 0.9):
        p = _pure.sph_geo(x, y, t)
        assert _pure.sph_dist(x, p) == pytest.approx(t * th, abs=1e-12)


def test_tree_geo_cases():
    # same edge, through hub, and from the hub
    assert _pure.tree_geo(0, 2.0, 0, 1.0, 0.5) == (0, 1.5)
    assert _pure.tree_geo(0, 2.0, 1, 2.0, 0.5) == (0, 0.0)
    assert _pure.tree_geo(0, 2.0, 1, 2.0, 0.75) == (1, 1.0)
    assert _pure.tree_geo(0, 0.0, 1, 2.0, 0.5) == (1, 1.0)
    assert _pure.tree_geo(1, 2.0, 0, 0.0, 0.5) == (1, 1.0)


def test_angle_from_sides_degenerate():
    with pytest.raises(ZeroDivisionError):
        _pure.angle_from_sides(1.0, 0.0, 1.0)
    # arccos conditioning bounds the achievable accuracy near angle 0
    assert _pure.angle_from_sides(0.0, 1.0, 1.0) == pytest.approx(0.0, abs=1e-7)
