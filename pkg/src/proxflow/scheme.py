"""The recursive proximal scheme and its certification machinery.

Covers time partitions, discrete solutions, the three interpolants
(step, linear-in-squares, linear-in-energy) with their residual R and
deviation D, a-priori estimates, the discrete evolution variational
inequality, two-solution comparison, mesh-refinement convergence, and
the mesh-level error bound against the limit curve.

A discrete solution is immutable once built; distinct trajectories and
distinct meshes are independent and may be computed concurrently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConvergenceFailure, SolverError, UsageError
from .functionals import Functional, prox
from .spaces import Point, Space

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(5)


@dataclass(frozen=True)
class Partition:
    """Strictly increasing time grid starting at 0."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 2 or t[0] != 0.0:
            raise UsageError("partition must start at 0 and contain a step")
        if not np.all(np.diff(t) > 0):
            raise UsageError("partition times must be strictly increasing")
        object.__setattr__(self, "times", t)

    @property
    def taus(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def mesh(self) -> float:
        return float(np.max(self.taus))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @staticmethod
    def uniform(T: float, n_steps: int) -> "Partition":
        return Partition(np.linspace(0.0, float(T), int(n_steps) + 1))

    @staticmethod
    def with_mesh(T: float, mesh: float) -> "Partition":
        return Partition.uniform(T, max(1, math.ceil(T / mesh - 1e-12)))

    def halved(self) -> "Partition":
        t = self.times
        mids = 0.5 * (t[:-1] + t[1:])
        return Partition(np.sort(np.concatenate([t, mids])))

    def step_index(self, t: float) -> int:
        """k such that t lies in (t^{k-1}, t^k]; 0 maps to the initial node."""
        if t < 0 or t > self.times[-1] + 1e-12:
            raise UsageError(f"time {t!r} outside partition range")
        if t <= 0.0:
            return 0
        return int(np.searchsorted(self.times, t - 1e-15, side="left"))


class DiscreteSolution:
    """Proximal trajectory x^0, x^1, ... with its energies and displacements."""

    def __init__(self, space, functional, partition, coords, energies, disps):
        self.space = space
        self.functional = functional
        self.partition = partition
        self.coords = np.asarray(coords, dtype=float)
        self.energies = np.asarray(energies, dtype=float)
        self.displacements = np.asarray(disps, dtype=float)

    @property
    def n_steps(self):
        return self.partition.n_steps

    def point(self, k: int) -> Point:
        return self.space.point_from_array(self.coords[k])

    @property
    def x0(self) -> Point:
        return self.point(0)

    def x_bar(self, t: float) -> Point:
        """Right-continuous step interpolant."""
        return self.point(self.partition.step_index(t))

    def d2_grid(self, y: Point) -> np.ndarray:
        self.space.check_point(y)
        return np.array(
            [self.space.distance(self.point(k), y) ** 2
             for k in range(len(self.coords))]
        )

    def phi_bar(self, t: float) -> float:
        k = self.partition.step_index(t)
        if k == 0:
            return float(self.energies[0])
        t0, t1 = self.partition.times[k - 1], self.partition.times[k]
        w = (t - t0) / (t1 - t0)
        return float((1 - w) * self.energies[k - 1] + w * self.energies[k])

    def residual_R(self, t: float, K: float) -> float:
        """Residual of the discrete evolution variational inequality."""
        k = self.partition.step_index(t)
        if k == 0:
            return 0.0
        tk = self.partition.times[k]
        tau = self.partition.taus[k - 1]
        drop = self.energies[k - 1] - self.energies[k]
        return ((tk - t) / tau + max(0.0, -K) / 2.0) * drop

    def deviation_D(self, t: float) -> float:
        k = self.partition.step_index(t)
        if k == 0:
            return 0.0
        tk = self.partition.times[k]
        tau = self.partition.taus[k - 1]
        return (tk - t) / tau * self.displacements[k - 1]

    def integral_R_step(self, k: int, K: float) -> float:
        """Exact one-step integral of the residual R."""
        Kp = min(0.0, K)
        tau = self.partition.taus[k - 1]
        return (0.5 - Kp / 2.0) * tau * (self.energies[k - 1] - self.energies[k])

    def integral_D2_step(self, k: int) -> float:
        """Exact one-step integral of the squared deviation D."""
        tau = self.partition.taus[k - 1]
        return tau * self.displacements[k - 1] ** 2 / 3.0

    # -- serialization ------------------------------------------------------

    def to_rows(self):
        rows = []
        for k, t in enumerate(self.partition.times):
            disp = self.displacements[k - 1] if k > 0 else 0.0
            rows.append((float(t), *map(float, self.coords[k]),
                         float(self.energies[k]), float(disp)))
        return rows

    def write_columnar(self, path):
        cols = " ".join(f"c{i}" for i in range(self.coords.shape[1]))
        with open(path, "w") as fh:
            fh.write(f"# proxflow.solution/1 space={self.space.tag}\n")
            fh.write(f"# t {cols} phi disp\n")
            for row in self.to_rows():
                fh.write(" ".join(repr(v) for v in row) + "\n")

    def to_dict(self):
        return {
            "schema": "proxflow.solution/1",
            "space": self.space.tag,
            "times": [float(v) for v in self.partition.times],
            "coords": [[float(v) for v in row] for row in self.coords],
            "energies": [float(v) for v in self.energies],
            "displacements": [float(v) for v in self.displacements],
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)


class InterpolantBundle:
    """The interpolants of one discrete solution against a fixed test point."""

    def __init__(self, sol: DiscreteSolution, y: Point, K: float):
        sol.space.check_point(y)
        self.sol = sol
        self.y = y
        self.K = float(K)
        self._g2 = sol.d2_grid(y)

    def x_bar(self, t):
        return self.sol.x_bar(t)

    def d_bar2(self, t: float) -> float:
        k = self.sol.partition.step_index(t)
        if k == 0:
            return float(self._g2[0])
        t0, t1 = self.sol.partition.times[k - 1], self.sol.partition.times[k]
        w = (t - t0) / (t1 - t0)
        return float((1 - w) * self._g2[k - 1] + w * self._g2[k])

    def d_bar(self, t: float) -> float:
        return math.sqrt(max(self.d_bar2(t), 0.0))

    def ddt_d_bar2(self, t: float) -> float:
        """Piecewise-constant derivative of the squared interpolant (a.e.)."""
        k = max(self.sol.partition.step_index(t), 1)
        return float((self._g2[k] - self._g2[k - 1]) / self.sol.partition.taus[k - 1])

    def phi_bar(self, t: float) -> float:
        return self.sol.phi_bar(t)

    def residual_R(self, t: float) -> float:
        return self.sol.residual_R(t, self.K)

    def deviation_D(self, t: float) -> float:
        return self.sol.deviation_D(t)


def run_scheme(
    f: Functional, space: Space, x0: Point, partition: Partition
) -> DiscreteSolution:
    """Run the recursive proximal scheme over the partition.

    Each step is a prox call; solver failures propagate annotated with the
    step index. Energies are recorded per node and are non-increasing.
    """
    space.check_point(x0)
    if not f.in_domain(x0):
        raise UsageError("initial point must lie in the domain")
    if partition.mesh >= f.tau_star:
        raise UsageError(
            f"mesh {partition.mesh!r} must stay below the horizon {f.tau_star!r}"
        )
    n = partition.n_steps
    coords = np.empty((n + 1, space.coord_size))
    energies = np.empty(n + 1)
    disps = np.empty(n)
    coords[0] = space.coords_array(x0)
    energies[0] = f.value(x0)
    x = x0
    for k, tau in enumerate(partition.taus, start=1):
        try:
            res = prox(f, space, x, float(tau))
        except SolverError as err:
            raise SolverError(f"prox failed at step {k}: {err}", err.stats) from err
        x = res.minimizer
        coords[k] = space.coords_array(x)
        energies[k] = res.minimizer_value
        disps[k - 1] = res.displacement
    return DiscreteSolution(space, f, partition, coords, energies, disps)


def discrete_evi_residual(
    sol: DiscreteSolution, y: Point, t: float, lam: float, K: float
) -> float:
    """Signed defect of the one-step evolution variational inequality at t.

    Returns LHS - RHS where
    LHS = (1/2) d/dt dbar^2(t; y) + (lam/2) d^2(xbar(t), y) + phibar(t) - phi(y)
    and RHS is the residual R; nonpositive values certify the inequality.
    """
    bundle = InterpolantBundle(sol, y, K)
    xk = sol.x_bar(t)
    d = sol.space.distance(xk, y)
    fy = sol.functional.value(y)
    lhs = (
        0.5 * bundle.ddt_d_bar2(t)
        + 0.5 * lam * d * d
        + bundle.phi_bar(t)
        - fy
    )
    return lhs - bundle.residual_R(t)


@dataclass(frozen=True)
class AprioriBounds:
    x_star: Point
    Q: float
    T: float
    C: float
    worst_sum_slack: float
    worst_chain_slack: float
    ok: bool


def apriori_check(
    sol: DiscreteSolution, x_star: Point, T: Optional[float] = None
) -> AprioriBounds:
    """Verify the summed-displacement inequality and the distance chain.

    The constant C is recorded empirically as the maximum of the bounded
    quantities; the chain d^2(x0, x^k) <= (sum of displacements)^2 <=
    (sum d^2/tau) t^k <= 2 C t^k is then verified with that C.
    """
    times = sol.partition.times
    if T is None:
        T = float(times[-1])
    n = int(np.searchsorted(times, T + 1e-12) - 1)
    if n < 1:
        raise UsageError("horizon excludes every step")
    taus = sol.partition.taus[:n]
    disps = sol.displacements[:n]
    drops = sol.energies[0] - sol.energies[1 : n + 1]
    halfsums = np.cumsum(disps**2 / (2.0 * taus))
    worst_sum = float(np.max(halfsums - drops))
    d2_star = np.array(
        [sol.space.distance(sol.point(k), x_star) ** 2 for k in range(n + 1)]
    )
    C = float(max(np.max(d2_star), np.max(drops), 0.0))
    x0 = sol.point(0)
    d2_x0 = np.array(
        [sol.space.distance(sol.point(k), x0) ** 2 for k in range(1, n + 1)]
    )
    lengths = np.cumsum(disps) ** 2
    cauchy = np.cumsum(disps**2 / taus) * times[1 : n + 1]
    worst_chain = float(
        max(
            np.max(d2_x0 - lengths),
            np.max(lengths - cauchy),
            np.max(cauchy - 2.0 * C * times[1 : n + 1]),
        )
    )
    Q = float(max(sol.energies[0], sol.space.distance(x0, x_star) ** 2))
    scale = 1.0 + abs(float(sol.energies[0])) + C
    ok = worst_sum <= 1e-9 * scale and worst_chain <= 1e-9 * scale
    return AprioriBounds(x_star, Q, T, C, worst_sum, worst_chain, ok)


def interpolate(sol: DiscreteSolution, y: Point, K: float) -> InterpolantBundle:
    """Bundle the step, squared-distance and energy interpolants against y."""
    return InterpolantBundle(sol, y, K)


def _weighted_integral(fn, times, lo, hi):
    """Integral of fn over [lo, hi] by per-cell 5-point Gauss quadrature."""
    grid = times[(times > lo) & (times < hi)]
    cuts = np.concatenate([[lo], grid, [hi]])
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        if half <= 0:
            continue
        total += half * sum(
            w * fn(mid + half * xi) for xi, w in zip(_GAUSS_NODES, _GAUSS_WEIGHTS)
        )
    return total


@dataclass
class ComparisonReport:
    times: np.ndarray
    curve: np.ndarray
    bounds: np.ndarray
    lam: float
    lam_clamped: bool
    worst_margin: float
    ok: bool


def compare_solutions(
    solA: DiscreteSolution,
    solB: DiscreteSolution,
    K: float,
    lam: Optional[float] = None,
) -> ComparisonReport:
    """Doubly-interpolated distance between two runs against its decay bound.

    Positive moduli are clamped to zero (the bound is stated for lam <= 0)
    and the clamping is flagged in the report.
    """
    if solA.space.tag != solB.space.tag:
        raise UsageError("solutions live on different spaces")
    space = solA.space
    declared = solA.functional.lam if lam is None else lam
    clamped = declared > 0.0
    lam = min(declared, 0.0)
    T = min(solA.partition.horizon, solB.partition.horizon)
    union = np.unique(np.concatenate([solA.partition.times, solB.partition.times]))
    union = union[union <= T + 1e-12]
    mids = 0.5 * (union[:-1] + union[1:])
    ts = np.sort(np.concatenate([union[union > 0], mids]))

    d2AB = {}

    def pair_d2(k, l):
        if (k, l) not in d2AB:
            d2AB[(k, l)] = space.distance(solA.point(k), solB.point(l)) ** 2
        return d2AB[(k, l)]

    def dts2(t):
        k = max(solA.partition.step_index(t), 1)
        l = max(solB.partition.step_index(t), 1)
        a0, a1 = solA.partition.times[k - 1], solA.partition.times[k]
        b0, b1 = solB.partition.times[l - 1], solB.partition.times[l]
        al = (t - a0) / (a1 - a0)
        be = (t - b0) / (b1 - b0)
        return (
            (1 - al) * (1 - be) * pair_d2(k - 1, l - 1)
            + al * (1 - be) * pair_d2(k, l - 1)
            + (1 - al) * be * pair_d2(k - 1, l)
            + al * be * pair_d2(k, l)
        )

    def integrand1(s):
        return math.exp(2.0 * lam * s) * (
            2.0 * (solA.residual_R(s, K) + solB.residual_R(s, K))
            - lam * (solA.deviation_D(s) ** 2 + solB.deviation_D(s) ** 2)
        )

    def integrand2(s):
        return math.exp(lam * s) * (solA.deviation_D(s) + solB.deviation_D(s))

    d2_init = pair_d2(0, 0)
    curve = np.empty(len(ts))
    bounds = np.empty(len(ts))
    prev_t, acc1, acc2 = 0.0, 0.0, 0.0
    for i, t in enumerate(ts):
        acc1 += _weighted_integral(integrand1, union, prev_t, t)
        acc2 += _weighted_integral(integrand2, union, prev_t, t)
        prev_t = t
        curve[i] = math.sqrt(max(dts2(t), 0.0))
        bounds[i] = math.exp(-lam * t) * (
            math.sqrt(max(d2_init + acc1, 0.0)) - 2.0 * lam * acc2
        )
    worst = float(np.max(curve - bounds))
    scale = 1.0 + d2_init + float(np.max(bounds))
    return ComparisonReport(ts, curve, bounds, lam, clamped, worst,
                            worst <= 1e-9 * scale)


class FlowCurve:
    """Mesh-refined limit curve sampled on the finest grid, with metadata."""

    def __init__(self, space, functional, times, coords, energies,
                 mesh_ladder, gaps):
        self.space = space
        self.functional = functional
        self.times = np.asarray(times, dtype=float)
        self.coords = np.asarray(coords, dtype=float)
        self.energies = np.asarray(energies, dtype=float)
        self.mesh_ladder = tuple(mesh_ladder)
        self.gaps = tuple(gaps)
        self.cauchy_gap = float(gaps[-1]) if gaps else math.inf

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.times)))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def point(self, i: int) -> Point:
        return self.space.point_from_array(self.coords[i])

    @property
    def x0(self) -> Point:
        return self.point(0)

    def at(self, t: float) -> Point:
        """Geodesic interpolation between the neighboring grid points."""
        if t <= self.times[0]:
            return self.point(0)
        if t >= self.times[-1]:
            return self.point(len(self.times) - 1)
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        t0, t1 = self.times[i], self.times[i + 1]
        w = (t - t0) / (t1 - t0)
        if w == 0.0:
            return self.point(i)
        return self.space.geodesic_point(self.point(i), self.point(i + 1), w)

    def energy_at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.energies))

    def speeds(self) -> np.ndarray:
        """Metric speed estimates: central differences, one-sided at the ends."""
        n = len(self.times)
        out = np.empty(n)
        pts = [self.point(i) for i in range(n)]
        for i in range(n):
            lo, hi = max(0, i - 1), min(n - 1, i + 1)
            dt = self.times[hi] - self.times[lo]
            out[i] = self.space.distance(pts[lo], pts[hi]) / dt
        return out

    def to_dict(self):
        return {
            "schema": "proxflow.flow/1",
            "space": self.space.tag,
            "times": [float(v) for v in self.times],
            "coords": [[float(v) for v in row] for row in self.coords],
            "energies": [float(v) for v in self.energies],
            "mesh_ladder": [float(v) for v in self.mesh_ladder],
            "gaps": [float(v) for v in self.gaps],
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)

    def write_columnar(self, path):
        cols = " ".join(f"c{i}" for i in range(self.coords.shape[1]))
        speeds = self.speeds()
        with open(path, "w") as fh:
            fh.write(f"# proxflow.flow/1 space={self.space.tag}\n")
            fh.write(f"# t {cols} phi speed\n")
            for i, t in enumerate(self.times):
                row = (float(t), *map(float, self.coords[i]),
                       float(self.energies[i]), float(speeds[i]))
                fh.write(" ".join(repr(v) for v in row) + "\n")


def _sup_gap(space, coarse: DiscreteSolution, fine: DiscreteSolution) -> float:
    """Sup over the fine grid of the distance between the step interpolants."""
    tf = fine.partition.times
    idx = np.searchsorted(coarse.partition.times, tf - 1e-15, side="left")
    idx = np.clip(idx, 0, coarse.n_steps)
    worst = 0.0
    for i, k in enumerate(idx):
        d = space.distance(coarse.point(int(k)), fine.point(i))
        if d > worst:
            worst = d
    return worst


def converge_flow(
    f: Functional,
    space: Space,
    x0: Point,
    T: float,
    mesh_sequence: Sequence[float],
) -> FlowCurve:
    """Run uniform schemes along a decreasing mesh ladder, check Cauchy gaps.

    The initial point is held fixed across meshes. Raises
    ConvergenceFailure when a successive sup-distance gap grows instead of
    shrinking; otherwise returns the finest run with the gap metadata.
    """
    meshes = [float(m) for m in mesh_sequence]
    if len(meshes) < 2 or any(b >= a for a, b in zip(meshes, meshes[1:])):
        raise UsageError("mesh sequence must be strictly decreasing, length >= 2")
    runs = []
    gaps = []
    for mesh in meshes:
        runs.append(run_scheme(f, space, x0, Partition.with_mesh(T, mesh)))
        if len(runs) > 1:
            gaps.append(_sup_gap(space, runs[-2], runs[-1]))
    for a, b in zip(gaps, gaps[1:]):
        if b > 1.1 * a + 1e-14:
            raise ConvergenceFailure(
                f"sup-distance gaps do not decrease: {gaps}",
                {"meshes": meshes, "gaps": gaps},
            )
    finest = runs[-1]
    return FlowCurve(
        space, f, finest.partition.times, finest.coords, finest.energies,
        meshes, gaps,
    )


@dataclass
class ErrorBoundReport:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    lam: float
    lam_clamped: bool
    worst_margin: float
    ok: bool


def error_bound_check(
    sol: DiscreteSolution, flow: FlowCurve, K: float, lam: Optional[float] = None
) -> ErrorBoundReport:
    """Check the mesh-level error bound of the squared-distance interpolant.

    The limit curve is stood in for by the finest available flow; its own
    Cauchy gap plus one mesh of interpolation slack is added to the budget.
    Positive moduli are clamped to zero and flagged.
    """
    declared = sol.functional.lam if lam is None else lam
    clamped = declared > 0.0
    lam = min(declared, 0.0)
    Kp = min(0.0, K)
    mesh = sol.partition.mesh
    factor = (
        math.sqrt(1.0 - Kp - 2.0 * lam / 3.0 * mesh)
        + math.sqrt(-4.0 * lam / 3.0 * mesh)
    ) ** 2 * mesh
    grid = sol.partition.times
    ts = np.sort(np.concatenate([grid[1:], 0.5 * (grid[:-1] + grid[1:])]))
    ts = ts[ts <= flow.horizon + 1e-12]
    budget = 3.0 * flow.cauchy_gap + flow.mesh
    lhs = np.empty(len(ts))
    rhs = np.empty(len(ts))
    for i, t in enumerate(ts):
        xi = flow.at(float(t))
        k = max(sol.partition.step_index(float(t)), 1)
        t0, t1 = sol.partition.times[k - 1], sol.partition.times[k]
        w = (t - t0) / (t1 - t0)
        d0 = sol.space.distance(sol.point(k - 1), xi)
        d1 = sol.space.distance(sol.point(k), xi)
        val = (1 - w) * d0 * d0 + w * d1 * d1
        lhs[i] = val
        drop = sol.energies[0] - sol.energies[k]  # energy at the step interpolant
        base = math.exp(-2.0 * lam * t) * factor * max(drop, 0.0)
        rhs[i] = base + 2.0 * math.sqrt(max(val, 0.0)) * budget + budget**2 + 1e-12
    worst = float(np.max(lhs - rhs))
    return ErrorBoundReport(ts, lhs, rhs, lam, clamped, worst, worst <= 0.0)
