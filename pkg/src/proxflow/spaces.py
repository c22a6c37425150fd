"""Geodesic model spaces: round unit sphere, Euclidean space, metric star tree.

Each space exposes exact distances, unit-interval geodesics, comparison
angles, the first variation of squared distances, and the convexity
modulus of the squared distance on balls. Module-level operations add
the empirical commutativity and thin-triangle checks used by the
certification suites.

Points and spaces are immutable values; every operation here is a pure
function, safe to call concurrently without synchronization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .errors import (
    ComparisonRangeError,
    DegenerateGeodesicError,
    SpaceMismatchError,
    UsageError,
)

POINT_TOL = 1e-12
ANTIPODAL_MARGIN = 1e-9

#: Default step schedule for one-sided difference quotients (commutativity
#: and related limits): 1e-3 * 2^-j, j = 0..6.
DEFAULT_LIMIT_STEPS = tuple(1e-3 * 0.5**j for j in range(7))


@dataclass(frozen=True, eq=False)
class Point:
    """A point of a model space; combine only with points of the same space."""

    space_tag: str
    coords: object  # ndarray for sphere/euclidean, (edge, offset) for trees

    def __repr__(self):
        return f"Point({self.space_tag}, {self.coords})"


@dataclass(frozen=True)
class SpaceDescriptor:
    kind: str
    dimension: Optional[int]
    leg_lengths: Optional[tuple]
    diameter_bound: float
    uniqueness_radius: float
    case_tag: str  # "CAT1_local" or "GLOBAL_K"
    global_K: Optional[float]


def _richardson(values):
    """Extrapolate a sequence of quotients at steps h, h/2, h/4, ... to h=0."""
    v = [float(x) for x in values]
    level = 1
    while len(v) > 1:
        f = 2.0**level
        v = [(f * v[i + 1] - v[i]) / (f - 1.0) for i in range(len(v) - 1)]
        level += 1
    return v[0]


@dataclass(frozen=True)
class CommutativityReport:
    lhs_limit: float
    rhs_limit: float
    gap: float
    tolerance: float
    passed: bool
    steps: tuple


class Space:
    """Base class for the model geodesic spaces."""

    tag: str
    kind: str
    diameter_bound: float
    uniqueness_radius: float
    case_tag: str

    # -- point plumbing ---------------------------------------------------

    def _wrap(self, coords) -> Point:
        return Point(self.tag, coords)

    def check_point(self, p: Point):
        if not isinstance(p, Point) or p.space_tag != self.tag:
            raise SpaceMismatchError(
                f"point {p!r} does not belong to space {self.tag!r}"
            )

    def coords_array(self, p: Point) -> np.ndarray:
        raise NotImplementedError

    def point_from_array(self, arr) -> Point:
        raise NotImplementedError

    @property
    def coord_size(self) -> int:
        raise NotImplementedError

    def descriptor(self) -> SpaceDescriptor:
        raise NotImplementedError

    # -- metric geometry ---------------------------------------------------

    def distance(self, x: Point, y: Point) -> float:
        self.check_point(x)
        self.check_point(y)
        return self._dist(x, y)

    def geodesic_point(self, x: Point, y: Point, t: float) -> Point:
        """Point at parameter t in [0, 1] on the minimal geodesic x -> y."""
        self.check_point(x)
        self.check_point(y)
        self._check_unique(x, y)
        return self._geo(x, y, float(t))

    def dist2_along(self, x: Point, y: Point, z: Point, ts) -> np.ndarray:
        """Squared distances d^2(gamma(t), z) along the geodesic x -> y."""
        self.check_point(x)
        self.check_point(y)
        self.check_point(z)
        self._check_unique(x, y)
        return self._d2along(x, y, z, np.asarray(ts, dtype=float))

    def angle(self, x: Point, y: Point, z: Point) -> float:
        """Angle at x between the geodesics toward y and toward z."""
        raise NotImplementedError

    def convexity_constant(self, R: float) -> float:
        """Modulus K(R) such that d^2(x, .) is K-convex on every ball B(x, R)."""
        raise NotImplementedError

    def _check_unique(self, x, y):
        d = self._dist(x, y)
        if d >= self.uniqueness_radius - ANTIPODAL_MARGIN:
            raise DegenerateGeodesicError(
                f"no unique minimal geodesic at distance {d!r} "
                f"(uniqueness radius {self.uniqueness_radius!r})"
            )

    # -- sampling -----------------------------------------------------------

    def random_point(self, rng) -> Point:
        raise NotImplementedError

    def random_point_in_ball(self, center: Point, radius: float, rng) -> Point:
        self.check_point(center)
        y = self.random_point(rng)
        d = self._dist(center, y)
        r = radius * math.sqrt(rng.uniform())
        if d <= POINT_TOL:
            return center
        return self._geo(center, y, min(1.0, r / d))

    def shell_points(self, x: Point, r: float, rng, count: int, toward=()):
        """Sample points at distance about r from x, plus hinted directions."""
        out = []
        for h in toward:
            d = self._dist(x, h)
            if d > POINT_TOL:
                out.append(self._geo(x, h, min(1.0, r / d)))
        tries = 0
        while len(out) < count and tries < 20 * count:
            tries += 1
            y = self.random_point(rng)
            d = self._dist(x, y)
            if d >= r:
                out.append(self._geo(x, y, r / d))
        return out


class Euclidean(Space):
    """Flat R^n with the usual metric; squared distance is exactly 2-convex."""

    kind = "euclidean"
    case_tag = "GLOBAL_K"

    def __init__(self, dimension: int, sampling_scale: float = 1.0):
        if dimension < 1:
            raise UsageError("dimension must be >= 1")
        self.dimension = int(dimension)
        self.tag = f"euclidean{self.dimension}"
        self.diameter_bound = math.inf
        self.uniqueness_radius = math.inf
        self.sampling_scale = float(sampling_scale)

    def point(self, coords) -> Point:
        arr = np.asarray(coords, dtype=float)
        if arr.shape != (self.dimension,):
            raise UsageError(f"expected {self.dimension} coordinates, got {arr.shape}")
        arr = arr.copy()
        arr.flags.writeable = False
        return self._wrap(arr)

    @property
    def coord_size(self):
        return self.dimension

    def coords_array(self, p):
        return np.asarray(p.coords, dtype=float)

    def point_from_array(self, arr):
        return self.point(arr)

    def descriptor(self):
        return SpaceDescriptor(
            self.kind, self.dimension, None, self.diameter_bound,
            self.uniqueness_radius, self.case_tag, 2.0,
        )

    def _dist(self, x, y):
        return K.euc_dist(x.coords, y.coords)

    def _geo(self, x, y, t):
        return self._wrap(K.euc_geo(x.coords, y.coords, t))

    def _d2along(self, x, y, z, ts):
        return K.euc_dist2_along(x.coords, y.coords, z.coords, ts)

    def angle(self, x, y, z):
        u = np.asarray(y.coords) - np.asarray(x.coords)
        v = np.asarray(z.coords) - np.asarray(x.coords)
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu <= POINT_TOL or nv <= POINT_TOL:
            raise DegenerateGeodesicError("angle undefined at zero distance")
        c = float(np.dot(u, v) / (nu * nv))
        return math.acos(min(1.0, max(-1.0, c)))

    def convexity_constant(self, R):
        if R <= 0:
            raise UsageError("radius must be positive")
        return 2.0

    def random_point(self, rng):
        return self.point(rng.normal(scale=self.sampling_scale, size=self.dimension))


#: Convexity modulus of the squared distance on spherical balls B(x, R),
#: tabulated at the certified radii. The entries equal the closed-form
#: candidate 2R/tan(R); the second-difference scan in the test suite
#: validates them from above to within 1e-3.
SPHERE_MODULUS_TABLE = {
    round(math.pi / 6, 12): 1.8137993642342178,
    round(math.pi / 4, 12): 1.5707963267948966,
    round(math.pi / 3, 12): 1.2091995761561452,
    round(math.pi / 2, 12): 0.0,
    round(2 * math.pi / 3, 12): -2.4183991523122903,
}


class Sphere(Space):
    """Round unit sphere S^n, points stored as unit vectors in R^(n+1)."""

    kind = "sphere"
    case_tag = "CAT1_local"

    def __init__(self, dimension: int):
        if dimension < 1:
            raise UsageError("dimension must be >= 1")
        self.dimension = int(dimension)
        self.tag = f"sphere{self.dimension}"
        self.diameter_bound = math.pi
        self.uniqueness_radius = math.pi

    def point(self, coords) -> Point:
        arr = np.asarray(coords, dtype=float)
        if arr.shape != (self.dimension + 1,):
            raise UsageError(
                f"expected {self.dimension + 1} coordinates, got {arr.shape}"
            )
        n = float(np.linalg.norm(arr))
        if abs(n - 1.0) > 1e-9:
            raise UsageError(f"sphere coordinates must be a unit vector, |x| = {n!r}")
        arr = arr / n
        arr.flags.writeable = False
        return self._wrap(arr)

    @property
    def coord_size(self):
        return self.dimension + 1

    def coords_array(self, p):
        return np.asarray(p.coords, dtype=float)

    def point_from_array(self, arr):
        arr = np.asarray(arr, dtype=float)
        arr = arr / np.linalg.norm(arr)
        arr.flags.writeable = False
        return self._wrap(arr)

    def descriptor(self):
        return SpaceDescriptor(
            self.kind, self.dimension, None, self.diameter_bound,
            self.uniqueness_radius, self.case_tag, None,
        )

    def _dist(self, x, y):
        return K.sph_dist(x.coords, y.coords)

    def _geo(self, x, y, t):
        return self._wrap(K.sph_geo(x.coords, y.coords, t))

    def _d2along(self, x, y, z, ts):
        return K.sph_dist2_along(x.coords, y.coords, z.coords, ts)

    def log(self, x: Point, y: Point) -> np.ndarray:
        """Initial velocity at x of the unit-interval geodesic to y."""
        self.check_point(x)
        self.check_point(y)
        self._check_unique(x, y)
        return K.sph_log(x.coords, y.coords)

    def exp(self, x: Point, direction, r: float) -> Point:
        """Point at arc distance r from x along the unit tangent direction."""
        self.check_point(x)
        u = np.asarray(direction, dtype=float)
        p = math.cos(r) * np.asarray(x.coords) + math.sin(r) * u
        return self.point_from_array(p)

    def tangent_direction(self, x: Point, rng) -> np.ndarray:
        v = rng.normal(size=self.dimension + 1)
        v = v - np.dot(v, x.coords) * np.asarray(x.coords)
        n = np.linalg.norm(v)
        while n < 1e-12:
            v = rng.normal(size=self.dimension + 1)
            v = v - np.dot(v, x.coords) * np.asarray(x.coords)
            n = np.linalg.norm(v)
        return v / n

    def angle(self, x, y, z):
        dy = self._dist(x, y)
        dz = self._dist(x, z)
        if dy <= POINT_TOL or dz <= POINT_TOL:
            raise DegenerateGeodesicError("angle undefined at zero distance")
        self._check_unique(x, y)
        self._check_unique(x, z)
        u = K.sph_log(x.coords, y.coords) / dy
        v = K.sph_log(x.coords, z.coords) / dz
        c = float(np.dot(u, v))
        return math.acos(min(1.0, max(-1.0, c)))

    def convexity_constant(self, R):
        if not 0 < R < math.pi:
            raise UsageError("sphere modulus defined for radii in (0, pi)")
        key = round(R, 12)
        if key in SPHERE_MODULUS_TABLE:
            return SPHERE_MODULUS_TABLE[key]
        return 2.0 * R / math.tan(R)

    def random_point(self, rng):
        v = rng.normal(size=self.dimension + 1)
        return self.point_from_array(v)

    def random_point_in_ball(self, center, radius, rng):
        self.check_point(center)
        r = radius * math.sqrt(rng.uniform())
        u = self.tangent_direction(center, rng)
        return self.exp(center, u, r)


class StarTree(Space):
    """Metric star tree: a hub with legs of given lengths, CAT(0) and branching.

    A point is (edge index, offset from the hub); offset 0 is the hub on
    every edge. Geodesics concatenate through the hub.
    """

    kind = "startree"
    case_tag = "GLOBAL_K"

    def __init__(self, leg_lengths: Sequence[float]):
        legs = tuple(float(v) for v in leg_lengths)
        if len(legs) < 3:
            raise UsageError("a star tree needs at least 3 legs")
        if any(v <= 0 for v in legs):
            raise UsageError("leg lengths must be positive")
        self.leg_lengths = legs
        self.tag = "startree:" + ",".join(repr(v) for v in legs)
        longest = sorted(legs)[-2:]
        self.diameter_bound = float(sum(longest))
        self.uniqueness_radius = math.inf

    def point(self, edge: int, offset: float = None) -> Point:
        if offset is None:
            edge, offset = edge  # accept a single (edge, offset) pair
        edge = int(edge)
        offset = float(offset)
        if not 0 <= edge < len(self.leg_lengths):
            raise UsageError(f"edge index {edge} out of range")
        if not 0.0 <= offset <= self.leg_lengths[edge] + POINT_TOL:
            raise UsageError(
                f"offset {offset!r} outside edge of length {self.leg_lengths[edge]!r}"
            )
        return self._wrap((edge, min(offset, self.leg_lengths[edge])))

    def hub(self) -> Point:
        return self._wrap((0, 0.0))

    @property
    def coord_size(self):
        return 2

    def coords_array(self, p):
        return np.array([float(p.coords[0]), p.coords[1]], dtype=float)

    def point_from_array(self, arr):
        return self.point(int(round(arr[0])), float(arr[1]))

    def descriptor(self):
        return SpaceDescriptor(
            self.kind, None, self.leg_lengths, self.diameter_bound,
            self.uniqueness_radius, self.case_tag, 2.0,
        )

    def _dist(self, x, y):
        return K.tree_dist(x.coords[0], x.coords[1], y.coords[0], y.coords[1])

    def _geo(self, x, y, t):
        e, o = K.tree_geo(x.coords[0], x.coords[1], y.coords[0], y.coords[1], t)
        return self._wrap((int(e), float(o)))

    def _d2along(self, x, y, z, ts):
        return K.tree_dist2_along(
            x.coords[0], x.coords[1], y.coords[0], y.coords[1],
            z.coords[0], z.coords[1], ts,
        )

    def _direction(self, x, y):
        """Direction label of the geodesic x -> y: edge plus leafward flag."""
        (ex, ox), (ey, oy) = x.coords, y.coords
        if ox == 0.0:  # at the hub: direction is the target's edge
            return (ey, True)
        if ey == ex and oy > ox:
            return (ex, True)
        return (ex, False)  # toward the hub (and possibly beyond)

    def angle(self, x, y, z):
        if self._dist(x, y) <= POINT_TOL or self._dist(x, z) <= POINT_TOL:
            raise DegenerateGeodesicError("angle undefined at zero distance")
        return 0.0 if self._direction(x, y) == self._direction(x, z) else math.pi

    def convexity_constant(self, R):
        if R <= 0:
            raise UsageError("radius must be positive")
        return 2.0

    def random_point(self, rng):
        e = int(rng.integers(len(self.leg_lengths)))
        return self.point(e, float(rng.uniform(0.0, self.leg_lengths[e])))

    def shell_points(self, x, r, rng, count, toward=()):
        # All directions from a tree point are enumerable exactly.
        del rng, count
        (e, o) = x.coords
        out = []
        if o > 0.0:
            if o + r <= self.leg_lengths[e]:
                out.append(self.point(e, o + r))
            if r <= o:
                out.append(self.point(e, o - r))
            else:
                for e2 in range(len(self.leg_lengths)):
                    if e2 != e and r - o <= self.leg_lengths[e2]:
                        out.append(self.point(e2, r - o))
        else:
            for e2 in range(len(self.leg_lengths)):
                if r <= self.leg_lengths[e2]:
                    out.append(self.point(e2, r))
        for h in toward:
            d = self._dist(x, h)
            if d > POINT_TOL:
                out.append(self._geo(x, h, min(1.0, r / d)))
        return out


# ---------------------------------------------------------------------------
# module-level operations


def distance(space: Space, x: Point, y: Point) -> float:
    return space.distance(x, y)


def geodesic_point(space: Space, x: Point, y: Point, t: float) -> Point:
    return space.geodesic_point(x, y, t)


def convexity_constant(space: Space, R: float) -> float:
    return space.convexity_constant(R)


def comparison_angle(space: Space, apex: Point, y: Point, z: Point) -> float:
    """Angle at the apex of the spherical comparison triangle of (apex, y, z)."""
    b = space.distance(apex, y)
    c = space.distance(apex, z)
    a = space.distance(y, z)
    if b <= POINT_TOL or c <= POINT_TOL:
        raise DegenerateGeodesicError("comparison angle needs positive sides at apex")
    if a + b + c >= 2 * math.pi:
        raise ComparisonRangeError(
            f"perimeter {a + b + c!r} >= 2*pi admits no spherical comparison triangle"
        )
    return K.angle_from_sides(a, b, c)


def first_variation(space: Space, x: Point, y: Point, z: Point) -> float:
    """Derivative at s=0 of s -> d^2(gamma(s), z) for gamma the geodesic x -> y.

    Computed analytically as -2 d(x,y) d(x,z) cos(angle at x).
    """
    dy = space.distance(x, y)
    dz = space.distance(x, z)
    if dy <= POINT_TOL or dz <= POINT_TOL:
        raise DegenerateGeodesicError("first variation needs positive distances")
    if dy >= space.uniqueness_radius or dz >= space.uniqueness_radius:
        raise DegenerateGeodesicError("first variation needs unique geodesics")
    return -2.0 * dy * dz * math.cos(space.angle(x, y, z))


def check_commutativity(
    space: Space,
    x: Point,
    y: Point,
    z: Point,
    steps=None,
    tol: float = 1e-6,
) -> CommutativityReport:
    """Compare the two mixed one-sided derivatives of squared distances at x.

    Both difference quotients are extrapolated to step 0 over the given
    step schedule; the report carries the extrapolated limits and their gap.
    """
    steps = tuple(steps) if steps is not None else DEFAULT_LIMIT_STEPS
    dxy = space.distance(x, y)
    dxz = space.distance(x, z)
    if dxy <= POINT_TOL or dxz <= POINT_TOL:
        raise DegenerateGeodesicError("commutativity check needs positive distances")
    hs = np.asarray(steps, dtype=float)
    d2y = dxy * dxy
    d2z = dxz * dxz
    lhs_qs = (space.dist2_along(x, y, z, hs) - d2z) / hs
    rhs_qs = (space.dist2_along(x, z, y, hs) - d2y) / hs
    lhs = _richardson(lhs_qs)
    rhs = _richardson(rhs_qs)
    gap = abs(lhs - rhs)
    return CommutativityReport(lhs, rhs, gap, tol, gap <= tol, steps)


def check_cat1_triangle(
    space: Space, x: Point, y: Point, z: Point, samples: int = 100
) -> bool:
    """True when d(x, gamma(t)) stays below the comparison-sphere distance."""
    b = space.distance(x, y)
    c = space.distance(x, z)
    a = space.distance(y, z)
    if a + b + c >= 2 * math.pi:
        raise ComparisonRangeError(
            f"perimeter {a + b + c!r} >= 2*pi admits no spherical comparison triangle"
        )
    ts = np.linspace(0.0, 1.0, samples)
    actual = np.sqrt(space.dist2_along(y, z, x, ts))
    if a <= POINT_TOL:
        model = np.full_like(ts, 0.5 * (b + c))
    elif b <= POINT_TOL:
        model = ts * a
    elif c <= POINT_TOL:
        model = (1.0 - ts) * a
    else:
        model = K.sph_comparison_dist(b, c, a, ts)
    return bool(np.all(actual <= model + 1e-9))


def space_from_config(cfg: dict) -> Space:
    """Build a model space from a plain config mapping.

    Expected keys: kind = sphere | euclidean | startree, plus `dimension`
    (sphere, euclidean) or `legs` (startree).
    """
    kind = cfg.get("kind")
    if kind == "sphere":
        return Sphere(int(cfg["dimension"]))
    if kind == "euclidean":
        return Euclidean(int(cfg["dimension"]))
    if kind == "startree":
        return StarTree([float(v) for v in cfg["legs"]])
    raise UsageError(f"unknown space kind {kind!r}")
