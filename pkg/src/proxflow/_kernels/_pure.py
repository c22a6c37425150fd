"""NumPy reference implementation of the hot geometry kernels.

Every certification suite bottoms out in these primitives (great-circle
interpolation and distances, star-tree geodesics, spherical comparison
trigonometry), so they also exist as a compiled Cython module with
identical semantics; see `proxflow._kernels`.
"""

import math

import numpy as np

__all__ = [
    "sph_dist",
    "sph_geo",
    "sph_dist2_along",
    "sph_log",
    "euc_dist",
    "euc_geo",
    "euc_dist2_along",
    "tree_dist",
    "tree_geo",
    "tree_dist2_along",
    "angle_from_sides",
    "sph_comparison_dist",
]


def sph_dist(x, y):
    """Arc distance between unit vectors, stable near 0 and pi."""
    c = float(np.dot(x, y))
    s = float(np.linalg.norm(x - c * y))
    return math.atan2(s, c)


def sph_geo(x, y, t):
    """Point at parameter t on the unit-interval great-circle arc x -> y."""
    theta = sph_dist(x, y)
    if theta == 0.0:
        return np.array(x, dtype=float)
    st = math.sin(theta)
    p = (math.sin((1.0 - t) * theta) / st) * np.asarray(x) + (
        math.sin(t * theta) / st
    ) * np.asarray(y)
    return p / np.linalg.norm(p)


def sph_dist2_along(x, y, z, ts):
    """d^2(gamma(t), z) for gamma the arc x -> y, at each t in ts."""
    out = np.empty(len(ts))
    for i, t in enumerate(ts):
        d = sph_dist(sph_geo(x, y, t), z)
        out[i] = d * d
    return out


def sph_log(x, y):
    """Tangent vector at x pointing to y with length equal to the arc distance."""
    theta = sph_dist(x, y)
    v = np.asarray(y, dtype=float) - math.cos(theta) * np.asarray(x, dtype=float)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        return np.zeros_like(v)
    return (theta / n) * v


def euc_dist(x, y):
    return float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))


def euc_geo(x, y, t):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (1.0 - t) * x + t * y


def euc_dist2_along(x, y, z, ts):
    out = np.empty(len(ts))
    for i, t in enumerate(ts):
        p = euc_geo(x, y, t)
        out[i] = float(np.dot(p - z, p - z))
    return out


def tree_dist(e1, o1, e2, o2):
    """Path length on a star tree; points are (edge index, offset from hub)."""
    return abs(o1 - o2) if e1 == e2 else o1 + o2


def tree_geo(e1, o1, e2, o2, t):
    """Point at parameter t on the tree geodesic; returns (edge, offset)."""
    if e1 == e2 or o1 == 0.0 or o2 == 0.0:
        if e1 == e2:
            return e1, (1.0 - t) * o1 + t * o2
        if o1 == 0.0:
            return e2, t * o2
        return e1, (1.0 - t) * o1
    length = o1 + o2
    s = t * length
    if s <= o1:
        return e1, o1 - s
    return e2, s - o1


def tree_dist2_along(e1, o1, e2, o2, ez, oz, ts):
    out = np.empty(len(ts))
    for i, t in enumerate(ts):
        eg, og = tree_geo(e1, o1, e2, o2, t)
        d = tree_dist(eg, og, ez, oz)
        out[i] = d * d
    return out


def angle_from_sides(a, b, c):
    """Spherical-law-of-cosines angle opposite side a, adjacent sides b and c.

    The cosine is clamped to [-1, 1] before arccos so that degenerate
    triangles do not produce NaN.
    """
    sb, sc = math.sin(b), math.sin(c)
    if sb == 0.0 or sc == 0.0:
        raise ZeroDivisionError("degenerate side in angle computation")
    cos_a = (math.cos(a) - math.cos(b) * math.cos(c)) / (sb * sc)
    cos_a = min(1.0, max(-1.0, cos_a))
    return math.acos(cos_a)


def sph_comparison_dist(b, c, a, ts):
    """Distances on the comparison sphere from the apex to the far side.

    A comparison triangle on the unit 2-sphere has apex X with adjacent
    sides b = d(X,Y), c = d(X,Z) and far side a = d(Y,Z). Returns
    d(X, arc_{Y->Z}(t)) for each t in ts via spherical trigonometry.
    """
    beta = angle_from_sides(c, a, b)  # angle at Y
    out = np.empty(len(ts))
    cb, sb = math.cos(b), math.sin(b)
    for i, t in enumerate(ts):
        ta = t * a
        cosd = cb * math.cos(ta) + sb * math.sin(ta) * math.cos(beta)
        out[i] = math.acos(min(1.0, max(-1.0, cosd)))
    return out
