# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometry kernels; semantics match `proxflow._kernels._pure`."""

from libc.math cimport sin, cos, acos, atan2, sqrt, fabs

import numpy as np
cimport numpy as cnp

cnp.import_array()

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


cdef double _sph_dist_mv(const double[::1] x, const double[::1] y) nogil:
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double c = 0.0, s = 0.0, r
    for i in range(n):
        c += x[i] * y[i]
    for i in range(n):
        r = x[i] - c * y[i]
        s += r * r
    return atan2(sqrt(s), c)


def sph_dist(x, y):
    """Arc distance between unit vectors, stable near 0 and pi."""
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    return _sph_dist_mv(xv, yv)


cdef void _sph_geo_mv(const double[::1] x, const double[::1] y, double t, double theta,
                      double[::1] out) nogil:
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double st, wa, wb, nrm = 0.0
    if theta == 0.0:
        for i in range(n):
            out[i] = x[i]
        return
    st = sin(theta)
    wa = sin((1.0 - t) * theta) / st
    wb = sin(t * theta) / st
    for i in range(n):
        out[i] = wa * x[i] + wb * y[i]
        nrm += out[i] * out[i]
    nrm = sqrt(nrm)
    for i in range(n):
        out[i] /= nrm


def sph_geo(x, y, double t):
    """Point at parameter t on the unit-interval great-circle arc x -> y."""
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    _sph_geo_mv(xv, yv, t, _sph_dist_mv(xv, yv), ov)
    return out


def sph_dist2_along(x, y, z, ts):
    """d^2(gamma(t), z) for gamma the arc x -> y, at each t in ts."""
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(ts, dtype=np.float64)
    out = np.empty(tv.shape[0])
    cdef double[::1] ov = out
    buf = np.empty(xv.shape[0])
    cdef double[::1] bv = buf
    cdef double theta = _sph_dist_mv(xv, yv), d
    cdef Py_ssize_t i
    for i in range(tv.shape[0]):
        _sph_geo_mv(xv, yv, tv[i], theta, bv)
        d = _sph_dist_mv(bv, zv)
        ov[i] = d * d
    return out


def sph_log(x, y):
    """Tangent vector at x pointing to y with length equal to the arc distance."""
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef double theta = _sph_dist_mv(xv, yv)
    cdef double ct = cos(theta), nrm = 0.0
    cdef Py_ssize_t i, n = xv.shape[0]
    out = np.empty(n)
    cdef double[::1] ov = out
    for i in range(n):
        ov[i] = yv[i] - ct * xv[i]
        nrm += ov[i] * ov[i]
    nrm = sqrt(nrm)
    if nrm == 0.0:
        for i in range(n):
            ov[i] = 0.0
        return out
    for i in range(n):
        ov[i] *= theta / nrm
    return out


cdef double _euc_dist_mv(const double[::1] x, const double[::1] y) nogil:
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double s = 0.0, r
    for i in range(n):
        r = x[i] - y[i]
        s += r * r
    return sqrt(s)


def euc_dist(x, y):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    return _euc_dist_mv(xv, yv)


def euc_geo(x, y, double t):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t i, n = xv.shape[0]
    out = np.empty(n)
    cdef double[::1] ov = out
    for i in range(n):
        ov[i] = (1.0 - t) * xv[i] + t * yv[i]
    return out


def euc_dist2_along(x, y, z, ts):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(ts, dtype=np.float64)
    out = np.empty(tv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j, n = xv.shape[0]
    cdef double s, r, t
    for i in range(tv.shape[0]):
        t = tv[i]
        s = 0.0
        for j in range(n):
            r = (1.0 - t) * xv[j] + t * yv[j] - zv[j]
            s += r * r
        ov[i] = s
    return out


cdef double _tree_dist_c(long e1, double o1, long e2, double o2) nogil:
    if e1 == e2:
        return fabs(o1 - o2)
    return o1 + o2


def tree_dist(long e1, double o1, long e2, double o2):
    """Path length on a star tree; points are (edge index, offset from hub)."""
    return _tree_dist_c(e1, o1, e2, o2)


def tree_geo(long e1, double o1, long e2, double o2, double t):
    """Point at parameter t on the tree geodesic; returns (edge, offset)."""
    cdef double length, s
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


def tree_dist2_along(long e1, double o1, long e2, double o2,
                     long ez, double oz, ts):
    cdef const double[::1] tv = np.ascontiguousarray(ts, dtype=np.float64)
    out = np.empty(tv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    cdef double length, s, og, d
    cdef long eg
    for i in range(tv.shape[0]):
        eg, og = tree_geo(e1, o1, e2, o2, tv[i])
        d = _tree_dist_c(eg, og, ez, oz)
        ov[i] = d * d
    return out


cdef double _angle_from_sides_c(double a, double b, double c) except -1.0:
    cdef double sb = sin(b), sc = sin(c), cos_a
    if sb == 0.0 or sc == 0.0:
        raise ZeroDivisionError("degenerate side in angle computation")
    cos_a = (cos(a) - cos(b) * cos(c)) / (sb * sc)
    if cos_a > 1.0:
        cos_a = 1.0
    elif cos_a < -1.0:
        cos_a = -1.0
    return acos(cos_a)


def angle_from_sides(double a, double b, double c):
    """Spherical-law-of-cosines angle opposite side a, adjacent sides b and c.

    The cosine is clamped to [-1, 1] before arccos so that degenerate
    triangles do not produce NaN.
    """
    return _angle_from_sides_c(a, b, c)


def sph_comparison_dist(double b, double c, double a, ts):
    """Distances on the comparison sphere from the apex to the far side.

    A comparison triangle on the unit 2-sphere has apex X with adjacent
    sides b = d(X,Y), c = d(X,Z) and far side a = d(Y,Z). Returns
    d(X, arc_{Y->Z}(t)) for each t in ts via spherical trigonometry.
    """
    cdef double beta = _angle_from_sides_c(c, a, b)
    cdef const double[::1] tv = np.ascontiguousarray(ts, dtype=np.float64)
    out = np.empty(tv.shape[0])
    cdef double[::1] ov = out
    cdef double cb = cos(b), sb = sin(b), cbeta = cos(beta), ta, cosd
    cdef Py_ssize_t i
    for i in range(tv.shape[0]):
        ta = tv[i] * a
        cosd = cb * cos(ta) + sb * sin(ta) * cbeta
        if cosd > 1.0:
            cosd = 1.0
        elif cosd < -1.0:
            cosd = -1.0
        ov[i] = acos(cosd)
    return out
