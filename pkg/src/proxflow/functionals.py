"""Semi-convex potentials, their proximal maps and envelope values, and slopes.

A `Functional` evaluates to an extended real (math.inf outside its
domain), declares its geodesic semi-convexity modulus, and may provide a
closed-form proximal map. When no closed form exists, `prox` falls back
to a per-space inner solver: line searches toward candidate anchors plus
coordinate descent on Euclidean spaces, bounded scalar minimization on
every edge of a star tree, and projected gradient descent with geodesic
polish on spheres.

Functionals are immutable after construction; prox and slope calls are
pure and reentrant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import HorizonError, SolverError, UsageError
from .spaces import Point, Space, Sphere, StarTree

INNER_ITER_CAP = 10_000

#: Default radius schedule for slope estimation: 1e-2 * 2^-j, j = 0..5.
DEFAULT_SLOPE_RADII = tuple(1e-2 * 0.5**j for j in range(6))


@dataclass(frozen=True)
class Ball:
    """A metric ball; used to confine sampling and certify moduli on spheres."""

    center: Point
    radius: float


@dataclass(frozen=True)
class ProxResult:
    minimizer: Point
    value: float  # envelope value phi(z*) + d^2(x, z*) / (2 tau)
    displacement: float
    minimizer_value: float  # phi(z*)
    stats: dict


@dataclass(frozen=True)
class SlopeReport:
    value: float
    radii: tuple
    sups: tuple


def _working_modulus(space: Space, region: Optional[Ball]) -> float:
    """Squared-distance convexity modulus valid on the working region."""
    if space.case_tag == "GLOBAL_K":
        return 2.0
    if region is None:
        raise UsageError("sphere functionals need a working ball to certify moduli")
    return space.convexity_constant(min(2.0 * region.radius, math.pi - 1e-9))


def _default_tau_star(space, lam, lower_bound, region):
    if lam >= 0 or lower_bound is not None:
        return math.inf
    K = _working_modulus(space, region)
    if K <= 0:
        raise UsageError(
            "cannot certify a coercivity horizon with lam < 0 and K <= 0"
        )
    return -K / (2.0 * lam)


class Functional:
    """Extended-real potential with a declared semi-convexity modulus."""

    def __init__(
        self,
        space: Space,
        lam: float,
        tau_star: Optional[float] = None,
        lipschitz_bound: Optional[float] = None,
        lower_bound: Optional[float] = None,
        region: Optional[Ball] = None,
    ):
        self.space = space
        self.lam = float(lam)
        self.lipschitz_bound = lipschitz_bound
        self.lower_bound = lower_bound
        self.region = region
        if region is not None:
            space.check_point(region.center)
        self.tau_star = (
            float(tau_star)
            if tau_star is not None
            else _default_tau_star(space, self.lam, lower_bound, region)
        )

    def value(self, x: Point) -> float:
        raise NotImplementedError

    __call__ = value

    def in_domain(self, x: Point) -> bool:
        return math.isfinite(self.value(x))

    def closed_form_prox(self, x: Point, tau: float):
        return None

    def anchors(self) -> tuple:
        return ()

    def sample_domain_point(self, rng) -> Point:
        for _ in range(1000):
            if self.region is not None:
                p = self.space.random_point_in_ball(
                    self.region.center, self.region.radius, rng
                )
            else:
                p = self.space.random_point(rng)
            if self.in_domain(p):
                return p
        raise UsageError("could not sample a domain point")


class HalfSqDist(Functional):
    """phi(x) = (weight/2) d^2(anchor, x), the model quadratic potential."""

    def __init__(self, space, anchor: Point, weight: float = 1.0, region=None):
        if weight <= 0:
            raise UsageError("weight must be positive")
        space.check_point(anchor)
        self.anchor = anchor
        self.weight = float(weight)
        if isinstance(space, Sphere):
            if region is None:
                raise UsageError("sphere quadratics need a working ball")
            reach = space.distance(anchor, region.center) + region.radius
            if reach >= math.pi:
                raise UsageError("working ball reaches the antipode of the anchor")
            lam = self.weight * space.convexity_constant(reach) / 2.0
            lip = self.weight * reach
        else:
            lam = self.weight
            lip = (
                self.weight
                * (space.distance(anchor, region.center) + region.radius)
                if region is not None
                else None
            )
        super().__init__(
            space, lam, lipschitz_bound=lip, lower_bound=0.0, region=region
        )

    def value(self, x):
        d = self.space.distance(self.anchor, x)
        return 0.5 * self.weight * d * d

    __call__ = value

    def closed_form_prox(self, x, tau):
        d = self.space.distance(x, self.anchor)
        if d == 0.0:
            return x
        t = self.weight * tau / (1.0 + self.weight * tau)
        return self.space.geodesic_point(x, self.anchor, t)

    def anchors(self):
        return (self.anchor,)


class DistTo(Functional):
    """phi(x) = weight * d(anchor, x); 1-Lipschitz per unit weight, convex."""

    def __init__(self, space, anchor: Point, weight: float = 1.0, region=None):
        if weight <= 0:
            raise UsageError("weight must be positive")
        space.check_point(anchor)
        self.anchor = anchor
        self.weight = float(weight)
        if isinstance(space, Sphere):
            if region is None:
                raise UsageError("sphere distance potentials need a working ball")
            reach = space.distance(anchor, region.center) + region.radius
            if reach > math.pi / 2 + 1e-12:
                raise UsageError(
                    "distance potential is convex only within pi/2 of the anchor"
                )
        super().__init__(
            space,
            0.0,
            lipschitz_bound=self.weight,
            lower_bound=0.0,
            region=region,
        )

    def value(self, x):
        return self.weight * self.space.distance(self.anchor, x)

    __call__ = value

    def closed_form_prox(self, x, tau):
        d = self.space.distance(x, self.anchor)
        if d == 0.0:
            return x
        s = min(self.weight * tau, d)
        return self.space.geodesic_point(x, self.anchor, s / d)

    def anchors(self):
        return (self.anchor,)


class Combination(Functional):
    """Nonnegative combination sum_i coef_i * f_i; moduli add with the weights."""

    def __init__(self, parts: Sequence[tuple], region=None):
        parts = tuple((float(c), f) for c, f in parts)
        if not parts:
            raise UsageError("empty combination")
        if any(c < 0 for c, _ in parts):
            raise UsageError("combination coefficients must be nonnegative")
        space = parts[0][1].space
        if any(f.space.tag != space.tag for _, f in parts):
            raise UsageError("combination parts live on different spaces")
        self.parts = parts
        lam = sum(c * f.lam for c, f in parts)
        lbs = [f.lower_bound for _, f in parts]
        lower = (
            sum(c * lb for (c, _), lb in zip(parts, lbs))
            if all(lb is not None for lb in lbs)
            else None
        )
        lips = [f.lipschitz_bound for _, f in parts]
        lip = (
            sum(c * v for (c, _), v in zip(parts, lips))
            if all(v is not None for v in lips)
            else None
        )
        if region is None:
            region = next((f.region for _, f in parts if f.region is not None), None)
        super().__init__(
            space, lam, lipschitz_bound=lip, lower_bound=lower, region=region
        )

    def value(self, x):
        return sum(c * f.value(x) for c, f in self.parts)

    __call__ = value

    def closed_form_prox(self, x, tau):
        # Weighted quadratics on Euclidean space solve in one linear step.
        if self.space.kind != "euclidean" or not all(
            isinstance(f, HalfSqDist) for _, f in self.parts
        ):
            return None
        w = sum(c * f.weight for c, f in self.parts)
        pbar = sum(
            c * f.weight * np.asarray(f.anchor.coords) for c, f in self.parts
        )
        z = (np.asarray(x.coords) + tau * pbar) / (1.0 + tau * w)
        return self.space.point(z)

    def anchors(self):
        out = []
        for _, f in self.parts:
            out.extend(f.anchors())
        return tuple(out)


class CustomFunctional(Functional):
    """User-supplied evaluator with a declared modulus.

    The declared lambda is certified empirically via
    `check_lambda_convexity`; the library never infers it.
    """

    def __init__(
        self,
        space,
        evaluator: Callable[[Point], float],
        lam: float,
        domain_predicate: Optional[Callable[[Point], bool]] = None,
        closed_form: Optional[Callable] = None,
        anchor_points: Sequence[Point] = (),
        **kwargs,
    ):
        self._evaluator = evaluator
        self._domain = domain_predicate
        self._closed_form = closed_form
        self._anchors = tuple(anchor_points)
        super().__init__(space, lam, **kwargs)

    def value(self, x):
        if self._domain is not None and not self._domain(x):
            return math.inf
        return float(self._evaluator(x))

    __call__ = value

    def in_domain(self, x):
        if self._domain is not None:
            return bool(self._domain(x))
        return math.isfinite(self.value(x))

    def closed_form_prox(self, x, tau):
        if self._closed_form is None:
            return None
        return self._closed_form(x, tau)

    def anchors(self):
        return self._anchors


# ---------------------------------------------------------------------------
# inner solvers


def _line_polish(g, space, z, target, lo=-0.5, hi=1.5):
    """Minimize g along the geodesic through z and target, extended a bit."""
    d = space.distance(z, target)
    if d <= 1e-15:
        return z, g(z)
    if not math.isfinite(space.uniqueness_radius):
        span = (max(lo, 0.0), hi) if space.kind == "startree" else (lo, hi)
    else:
        span = (0.0, min(hi, (space.uniqueness_radius - 1e-6) / d))
    res = minimize_scalar(
        lambda s: g(space.geodesic_point(z, target, s)),
        bounds=span,
        method="bounded",
        options={"xatol": 1e-12},
    )
    zs = space.geodesic_point(z, target, float(res.x))
    return zs, float(res.fun)


def _generic_prox_euclidean(f, space, x, tau):
    coords = np.asarray(x.coords, dtype=float)
    dim = coords.shape[0]

    def g_arr(arr):
        return f.value(space.point(arr)) + float(np.dot(arr - coords, arr - coords)) / (
            2.0 * tau
        )

    hints = [x] + list(f.anchors())
    spread = max(
        [1.0] + [space.distance(x, h) for h in hints[1:]]
    )
    best_arr, best_val = coords.copy(), g_arr(coords)
    evals = 0
    for start in hints:
        z = np.asarray(start.coords, dtype=float).copy()
        val = g_arr(z)
        for _ in range(200):
            improved = False
            # line searches toward every candidate anchor
            for h in hints:
                ha = np.asarray(h.coords, dtype=float)
                direction = ha - z
                if np.linalg.norm(direction) <= 1e-15:
                    continue
                res = minimize_scalar(
                    lambda s: g_arr(z + s * direction),
                    bounds=(-0.5, 1.5),
                    method="bounded",
                    options={"xatol": 1e-13},
                )
                evals += res.nfev
                if res.fun < val - 1e-15:
                    z = z + float(res.x) * direction
                    val = float(res.fun)
                    improved = True
            # coordinate sweep
            for i in range(dim):
                base = z.copy()

                def g1(s, i=i, base=base):
                    trial = base.copy()
                    trial[i] = s
                    return g_arr(trial)

                res = minimize_scalar(
                    g1,
                    bounds=(z[i] - 4.0 * spread, z[i] + 4.0 * spread),
                    method="bounded",
                    options={"xatol": 1e-13},
                )
                evals += res.nfev
                if res.fun < val - 1e-15:
                    z[i] = float(res.x)
                    val = float(res.fun)
                    improved = True
            if not improved or evals > INNER_ITER_CAP:
                break
        if val < best_val:
            best_arr, best_val = z, val
    if evals > INNER_ITER_CAP:
        raise SolverError(
            "euclidean prox solver hit the iteration cap",
            {"method": "coordinate-descent", "evals": evals},
        )
    return space.point(best_arr), {"method": "coordinate-descent", "evals": evals}


def _generic_prox_tree(f, space: StarTree, x, tau):
    def g(p):
        d = space.distance(x, p)
        return f.value(p) + d * d / (2.0 * tau)

    best, best_val = space.hub(), g(space.hub())
    evals = 1
    for e, length in enumerate(space.leg_lengths):
        res = minimize_scalar(
            lambda o, e=e: g(space.point(e, o)),
            bounds=(0.0, length),
            method="bounded",
            options={"xatol": 1e-12},
        )
        evals += res.nfev
        if res.fun < best_val:
            best, best_val = space.point(e, float(res.x)), float(res.fun)
    return best, {"method": "per-edge-scalar", "evals": evals}


def _generic_prox_sphere(f, space: Sphere, x, tau):
    def g(p):
        d = space.distance(x, p)
        return f.value(p) + d * d / (2.0 * tau)

    z, val = x, g(x)
    for h in f.anchors():
        cand, cval = _line_polish(g, space, x, h, lo=0.0, hi=1.0)
        if cval < val:
            z, val = cand, cval
    evals = 0
    step = 1.0
    n = space.dimension + 1
    h_fd = 1e-6
    for _ in range(INNER_ITER_CAP):
        zc = np.asarray(z.coords)
        grad = np.zeros(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            u = e - np.dot(e, zc) * zc
            nu = np.linalg.norm(u)
            if nu < 1e-12:
                continue
            u /= nu
            gp = g(space.exp(z, u, h_fd))
            gm = g(space.exp(z, u, -h_fd))
            evals += 2
            grad += ((gp - gm) / (2.0 * h_fd)) * u
        gn = float(np.linalg.norm(grad))
        if gn < 1e-9:
            break
        moved = False
        while step > 1e-14:
            cand = space.exp(z, -grad / gn, min(step * gn, 1.0))
            cval = g(cand)
            evals += 1
            if cval < val - 1e-15:
                z, val = cand, cval
                step *= 1.3
                moved = True
                break
            step *= 0.5
        if not moved or evals > INNER_ITER_CAP:
            break
    # geodesic polish toward the anchors and the base point
    for _ in range(3):
        for target in list(f.anchors()) + [x]:
            z, val = _line_polish(g, space, z, target, lo=-0.25, hi=1.0)
    return z, {"method": "projected-gradient", "evals": evals}


def prox(f: Functional, space: Space, x: Point, tau: float) -> ProxResult:
    """A minimizer of z -> phi(z) + d^2(x, z) / (2 tau), with certificates.

    Raises HorizonError for steps at or beyond the coercivity horizon and
    SolverError when the inner solver cannot certify the minimizer.
    """
    if space.tag != f.space.tag:
        raise UsageError("functional belongs to a different space")
    space.check_point(x)
    if not tau > 0:
        raise UsageError("tau must be positive")
    if tau >= f.tau_star:
        raise HorizonError(
            f"tau = {tau!r} is not below the coercivity horizon {f.tau_star!r}"
        )
    z = f.closed_form_prox(x, tau)
    if z is not None:
        stats = {"method": "closed-form"}
    elif space.kind == "euclidean":
        z, stats = _generic_prox_euclidean(f, space, x, tau)
    elif space.kind == "startree":
        z, stats = _generic_prox_tree(f, space, x, tau)
    elif space.kind == "sphere":
        z, stats = _generic_prox_sphere(f, space, x, tau)
    else:  # pragma: no cover
        raise UsageError(f"no inner solver for space kind {space.kind!r}")
    fz = f.value(z)
    disp = space.distance(x, z)
    value = fz + disp * disp / (2.0 * tau)
    fx = f.value(x)
    if math.isfinite(fx):
        slack = 1e-9 * (1.0 + abs(fx))
        if value > fx + slack or fz > fx + slack:
            raise SolverError(
                f"prox did not descend: envelope {value!r} vs phi(x) {fx!r}", stats
            )
        if disp * disp > 2.0 * tau * (fx - fz) + slack:
            raise SolverError("prox displacement bound violated", stats)
    return ProxResult(z, value, disp, fz, stats)


def moreau_yosida(f: Functional, space: Space, x: Point, tau: float) -> float:
    """Envelope value inf_z { phi(z) + d^2(x, z) / (2 tau) }."""
    return prox(f, space, x, tau).value


def local_slope(
    f: Functional,
    space: Space,
    x: Point,
    radii=None,
    samples: int = 48,
    rng=None,
) -> SlopeReport:
    """Descending slope estimate: extrapolated sup of descent quotients.

    For each radius r the sup of max(phi(x) - phi(y), 0) / d(x, y) is taken
    over sampled points at distance about r; the per-radius sups are then
    extrapolated linearly to r = 0.
    """
    if not f.in_domain(x):
        raise UsageError("slope is defined on the domain only")
    radii = tuple(radii) if radii is not None else DEFAULT_SLOPE_RADII
    rng = rng if rng is not None else np.random.default_rng(0)
    fx = f.value(x)
    sups = []
    for r in radii:
        pts = space.shell_points(x, r, rng, samples, toward=f.anchors())
        if not pts:
            raise UsageError(f"no sample points at radius {r!r}")
        best = 0.0
        for y in pts:
            d = space.distance(x, y)
            if d <= 1e-15:
                continue
            fy = f.value(y)
            if math.isfinite(fy):
                best = max(best, max(fx - fy, 0.0) / d)
        sups.append(best)
    rs = np.asarray(radii)
    ss = np.asarray(sups)
    A = np.vstack([np.ones_like(rs), rs]).T
    coef, *_ = np.linalg.lstsq(A, ss, rcond=None)
    return SlopeReport(max(float(coef[0]), 0.0), radii, tuple(sups))


def check_lambda_convexity(
    f: Functional, space: Space, sample_triples: int = 300, seed: int = 0
) -> float:
    """Largest empirical modulus mu for which the mu-convexity inequality holds.

    Samples geodesics between domain points (confined to the functional's
    working region when one is declared) and minimizes the second-difference
    quotient over an interior t-grid.
    """
    rng = np.random.default_rng(seed)
    tgrid = np.linspace(0.125, 0.875, 7)
    mu = math.inf
    found = 0
    attempts = 0
    while found < sample_triples:
        attempts += 1
        if attempts > 50 * sample_triples:
            raise UsageError("sampling starved: domain too small for geodesics")
        x = f.sample_domain_point(rng)
        y = f.sample_domain_point(rng)
        d = space.distance(x, y)
        if d * d < 1e-8 or d >= space.uniqueness_radius - 1e-9:
            continue
        found += 1
        fx, fy = f.value(x), f.value(y)
        for t in tgrid:
            g = space.geodesic_point(x, y, float(t))
            fg = f.value(g)
            if not math.isfinite(fg):
                continue
            defect = (1.0 - t) * fx + t * fy - fg
            mu = min(mu, 2.0 * defect / ((1.0 - t) * t * d * d))
    return float(mu)


def functional_from_config(space: Space, cfg: dict) -> Functional:
    """Build a potential from a plain config mapping.

    Kinds: half_sqdist, dist (anchor + optional weight), sum (parts with
    coefficients). Custom evaluators cannot be described in a text config
    and must be constructed in code.
    """
    kind = cfg.get("kind")
    region = None
    if cfg.get("region") is not None:
        rc = cfg["region"]
        region = Ball(_point_from_config(space, rc["center"]), float(rc["radius"]))
    if kind == "half_sqdist":
        return HalfSqDist(
            space,
            _point_from_config(space, cfg["anchor"]),
            weight=float(cfg.get("weight", 1.0)),
            region=region,
        )
    if kind == "dist":
        return DistTo(
            space,
            _point_from_config(space, cfg["anchor"]),
            weight=float(cfg.get("weight", 1.0)),
            region=region,
        )
    if kind == "sum":
        parts = [
            (float(p.get("coef", 1.0)), functional_from_config(space, p))
            for p in cfg["parts"]
        ]
        return Combination(parts, region=region)
    raise UsageError(f"unknown functional kind {kind!r}")


def _point_from_config(space: Space, coords) -> Point:
    if isinstance(space, StarTree):
        return space.point(int(coords[0]), float(coords[1]))
    return space.point(coords)
