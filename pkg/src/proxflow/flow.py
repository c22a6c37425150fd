"""The gradient-flow operator and its certification checks.

`flow` refines the proximal scheme through an automatic mesh ladder until
successive curves are Cauchy within tolerance. The checks in this module
certify, up to explicit error budgets, the semigroup property, the
exponential contraction estimate (continuous and discrete), the evolution
variational inequality and its integrated form, the energy dissipation
identity, the slope characterization of stationary points, slope decay,
and the ball-chained construction on spheres.

Every flow-level assertion carries a budget a * (Cauchy gap) + b * (grid
step) with defaults a = 3, b = 1; the statements are exact only for the
limit object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConvergenceFailure, UsageError
from .functionals import Functional, local_slope
from .scheme import (
    DiscreteSolution,
    FlowCurve,
    Partition,
    _sup_gap,
    run_scheme,
)
from .spaces import Point, Space, Sphere

GAP_FACTOR = 3.0
STEP_FACTOR = 1.0

#: Default ladder for one-sided quotients in the EVI check: 1e-2 * 2^-j.
DEFAULT_EPS_LADDER = tuple(1e-2 * 0.5**j for j in range(6))


def budget(*curves: FlowCurve) -> float:
    """Distance-level error budget for assertions against limit curves."""
    return sum(GAP_FACTOR * c.cauchy_gap + STEP_FACTOR * c.mesh for c in curves)


def flow(
    f: Functional,
    space: Space,
    x0: Point,
    T: float,
    tolerance: float = 1e-3,
    initial_mesh: Optional[float] = None,
    max_levels: int = 24,
) -> FlowCurve:
    """Mesh-refine the proximal scheme until the Cauchy gap meets tolerance."""
    space.check_point(x0)
    if initial_mesh is None:
        initial_mesh = T / 10.0
        if math.isfinite(f.tau_star):
            initial_mesh = min(initial_mesh, f.tau_star / 8.0)
    meshes = [initial_mesh]
    prev = run_scheme(f, space, x0, Partition.with_mesh(T, initial_mesh))
    gaps = []
    for level in range(1, max_levels + 1):
        mesh = initial_mesh * 0.5**level
        cur = run_scheme(f, space, x0, Partition.with_mesh(T, mesh))
        meshes.append(mesh)
        gaps.append(_sup_gap(space, prev, cur))
        if gaps[-1] <= tolerance:
            return FlowCurve(
                space, f, cur.partition.times, cur.coords, cur.energies,
                meshes, gaps,
            )
        if len(gaps) >= 2 and gaps[-1] > 1.1 * gaps[-2] + 1e-14:
            raise ConvergenceFailure(
                f"gap increased along the ladder: {gaps}",
                {"meshes": meshes, "gaps": gaps},
            )
        prev = cur
    raise ConvergenceFailure(
        f"ladder exhausted at gap {gaps[-1]!r} > tolerance {tolerance!r}",
        {"meshes": meshes, "gaps": gaps},
    )


@dataclass
class SemigroupReport:
    pairs: list
    worst_defect: float
    tolerance: float
    ok: bool


def semigroup_check(
    f: Functional,
    space: Space,
    x0: Point,
    T: float,
    n_grid: int = 5,
    tolerance: float = 1e-3,
) -> SemigroupReport:
    """Compare restarted flows with the direct flow on an (s, t) grid."""
    xi = flow(f, space, x0, T, tolerance)
    svals = np.linspace(T / (2 * n_grid), T / 2, n_grid)
    pairs = []
    worst = 0.0
    tol = 0.0
    for s in svals:
        mid = xi.at(float(s))
        eta = flow(f, space, mid, T / 2, tolerance)
        for t in svals:
            d = space.distance(eta.at(float(t)), xi.at(float(s + t)))
            pairs.append((float(s), float(t), d))
            worst = max(worst, d)
        tol = max(tol, budget(xi, eta))
    return SemigroupReport(pairs, worst, tol, worst <= tol)


@dataclass
class ContractionReport:
    x0: Point
    y0: Point
    times: np.ndarray
    ratios: np.ndarray
    lam: float
    lam_tau: float
    lam_tau_plus: float
    lam_tau_minus: float
    Kprime: float
    gap_budget: float
    ok: bool


def contraction_check(
    f: Functional,
    space: Space,
    x0: Point,
    y0: Point,
    T: float,
    tolerance: float = 1e-3,
    K: Optional[float] = None,
    initial_mesh: Optional[float] = None,
) -> ContractionReport:
    """Ratio of flow distances to the exponential contraction envelope.

    Both flows are refined along a shared ladder so their grids coincide;
    the ratio tolerance is budgeted from both Cauchy gaps. Identical
    starts pass by convention with zero ratio.
    """
    lam = f.lam
    d0 = space.distance(x0, y0)
    if initial_mesh is None:
        initial_mesh = T / 10.0
        if math.isfinite(f.tau_star):
            initial_mesh = min(initial_mesh, f.tau_star / 8.0)
    # shared mesh ladder so both trajectories live on identical partitions
    meshes = [initial_mesh]
    part = Partition.with_mesh(T, initial_mesh)
    prevx = run_scheme(f, space, x0, part)
    prevy = run_scheme(f, space, y0, part)
    gaps_x, gaps_y = [], []
    solx, soly = prevx, prevy
    for level in range(1, 25):
        mesh = initial_mesh * 0.5**level
        part = Partition.with_mesh(T, mesh)
        solx = run_scheme(f, space, x0, part)
        soly = run_scheme(f, space, y0, part)
        meshes.append(mesh)
        gaps_x.append(_sup_gap(space, prevx, solx))
        gaps_y.append(_sup_gap(space, prevy, soly))
        if max(gaps_x[-1], gaps_y[-1]) <= tolerance:
            break
        prevx, prevy = solx, soly
    else:
        raise ConvergenceFailure(
            "contraction ladder exhausted",
            {"meshes": meshes, "gaps": (gaps_x, gaps_y)},
        )
    xi = FlowCurve(space, f, solx.partition.times, solx.coords, solx.energies,
                   meshes, gaps_x)
    zeta = FlowCurve(space, f, soly.partition.times, soly.coords, soly.energies,
                     meshes, gaps_y)
    times = xi.times[1:]
    dists = np.array(
        [space.distance(xi.point(i), zeta.point(i)) for i in range(1, len(xi.times))]
    )
    mesh = xi.mesh
    lam_tau = math.log1p(lam * mesh) / mesh if lam * mesh > -1.0 else -math.inf
    report_gap = budget(xi, zeta)
    if d0 <= 1e-15:
        ratios = np.zeros_like(dists)
        ok = bool(np.all(dists <= report_gap))
    else:
        envelope = np.exp(-lam * times) * d0
        ratios = dists / envelope
        ok = bool(np.all(ratios <= 1.0 + report_gap / envelope))
    return ContractionReport(
        x0, y0, times, ratios, lam, lam_tau, max(lam_tau, 0.0), min(lam_tau, 0.0),
        min(0.0, K) if K is not None else 0.0, report_gap, ok,
    )


@dataclass
class DiscreteContractionReport:
    exact_worst: float
    exact_ok: bool
    fitted_c: float
    lam_tau: float
    ok: bool


def discrete_contraction_check(
    f: Functional,
    space: Space,
    x0: Point,
    y0: Point,
    partition: Partition,
    K: float,
) -> DiscreteContractionReport:
    """Per-step contraction inequality for two runs on one partition.

    The exact intermediate inequality (no unspecified constants) is
    asserted; the mesh-level exponential display has its extra term fitted
    as c * sqrt(mesh) and c is reported, not asserted.
    """
    lam = f.lam
    mesh = partition.mesh
    if lam < 0 and lam * mesh <= -1.0:
        raise UsageError("need lam * mesh > -1")
    if math.isfinite(f.tau_star) and mesh >= f.tau_star / 8.0:
        raise UsageError("mesh must stay below an eighth of the horizon")
    solx = run_scheme(f, space, x0, partition)
    soly = run_scheme(f, space, y0, partition)
    Kp = min(0.0, K)
    n = partition.n_steps
    taus = partition.taus
    worst = -math.inf
    scale = 1.0
    for k in range(1, n + 1):
        tau = taus[k - 1]
        dkk = space.distance(solx.point(k), soly.point(k))
        dk_prev = space.distance(solx.point(k), soly.point(k - 1))
        dprev = space.distance(solx.point(k - 1), soly.point(k - 1))
        drop_x = solx.energies[k - 1] - solx.energies[k]
        drop_y = soly.energies[k - 1] - soly.energies[k]
        lhs = (1.0 + lam * tau) * dkk * dkk + lam * tau * dk_prev * dk_prev
        rhs = dprev * dprev + 2.0 * tau * drop_y - Kp * tau * (drop_x + drop_y)
        worst = max(worst, lhs - rhs)
        scale = max(scale, abs(rhs))
    exact_ok = worst <= 1e-8 * scale
    lam_tau = math.log1p(lam * mesh) / mesh
    lam_plus, lam_minus = max(lam_tau, 0.0), min(lam_tau, 0.0)
    d0 = space.distance(x0, y0)
    fitted = 0.0
    for k in range(1, n + 1):
        t = partition.times[k]
        lhs = math.exp(2.0 * (lam_tau * t + lam_minus * mesh)) * (
            space.distance(solx.point(k), soly.point(k)) ** 2
        )
        rhs = (
            d0 * d0
            + 2.0 * math.exp(2.0 * lam_plus * t) * mesh
            * (soly.energies[0] - soly.energies[k])
            - Kp * math.exp(2.0 * lam_plus * t) * mesh
            * (solx.energies[0] - solx.energies[k]
               + soly.energies[0] - soly.energies[k])
        )
        fitted = max(fitted, (lhs - rhs) / math.sqrt(mesh))
    return DiscreteContractionReport(worst, exact_ok, fitted, lam_tau, exact_ok)


@dataclass
class EviReport:
    times: list
    residuals: list
    tolerances: list
    skipped: int
    ok: bool


def evi_check(
    flow_curve: FlowCurve,
    f: Functional,
    y: Point,
    times: Sequence[float],
    eps_ladder=None,
    base_tol: float = 1e-6,
) -> EviReport:
    """Forward difference quotients of d^2(xi(.), y), extrapolated to 0.

    residual(t) = limit quotient + (lam/2) d^2(xi(t), y) + phi(xi(t)) - phi(y);
    certification requires residual <= tolerance with the flow's budget.
    Samples whose quotient ladder leaves the horizon are skipped, not failed.
    """
    space = flow_curve.space
    lam = f.lam
    h = flow_curve.mesh
    ladder = tuple(eps_ladder) if eps_ladder is not None else DEFAULT_EPS_LADDER
    fy = f.value(y)
    out_t, out_r, out_tol = [], [], []
    skipped = 0
    grid = flow_curve.times
    for t in times:
        i = int(round(t / h))
        if i <= 0 or i >= len(grid) - 1:
            skipped += 1
            continue
        t_snap = grid[i]
        steps = sorted({max(1, int(round(e / h))) for e in ladder}, reverse=True)
        if i + steps[0] > len(grid) - 1:
            steps = [s for s in steps if i + s <= len(grid) - 1]
        if len(steps) < 2:
            skipped += 1
            continue
        d2_t = space.distance(flow_curve.point(i), y) ** 2
        eps = np.array([s * h for s in steps])
        quot = np.array(
            [
                (space.distance(flow_curve.point(i + s), y) ** 2 - d2_t)
                / (2.0 * s * h)
                for s in steps
            ]
        )
        A = np.vstack([np.ones_like(eps), eps]).T
        coef, *_ = np.linalg.lstsq(A, quot, rcond=None)
        d = math.sqrt(d2_t)
        residual = float(coef[0]) + 0.5 * lam * d2_t + flow_curve.energies[i] - fy
        tol = base_tol + budget(flow_curve) * (1.0 + 2.0 * d)
        out_t.append(float(t_snap))
        out_r.append(residual)
        out_tol.append(tol)
    ok = all(r <= tol for r, tol in zip(out_r, out_tol))
    return EviReport(out_t, out_r, out_tol, skipped, ok)


@dataclass
class IntegratedEviReport:
    lhs: float
    rhs_integral: float
    rhs_endpoint: float
    tolerance: float
    ok: bool


def integrated_evi_check(
    flow_curve: FlowCurve, f: Functional, y: Point, T: float
) -> IntegratedEviReport:
    """Exponentially weighted integral form of the EVI, via trapezoid rule.

    Checks d^2(xi(T), y) against both the integral bound and its endpoint
    consequence with the factor (1 - e^{-lam T}) / lam (T at lam = 0).
    """
    space = flow_curve.space
    lam = f.lam
    mask = flow_curve.times <= T + 1e-12
    ts = flow_curve.times[mask]
    fy = f.value(y)
    vals = np.array(
        [math.exp(lam * t) * (fy - e)
         for t, e in zip(ts, flow_curve.energies[mask])]
    )
    integral = float(np.trapezoid(vals, ts))
    xT = flow_curve.at(T)
    d0 = space.distance(flow_curve.x0, y)
    dT = space.distance(xT, y)
    lhs = dT * dT
    rhs1 = math.exp(-lam * T) * d0 * d0 + 2.0 * math.exp(-lam * T) * integral
    if lam == 0.0:
        factor = T
    else:
        factor = (1.0 - math.exp(-lam * T)) / lam
    rhs2 = (
        math.exp(-lam * T) * d0 * d0
        - 2.0 * factor * (flow_curve.energy_at(T) - fy)
    )
    dmax = max(d0, dT, 1.0)
    tol = budget(flow_curve) * (1.0 + 2.0 * dmax) * (1.0 + T * math.exp(abs(lam) * T))
    ok = lhs <= rhs1 + tol and lhs <= rhs2 + tol
    return IntegratedEviReport(lhs, rhs1, rhs2, tol, ok)


@dataclass
class DissipationReport:
    residual: float
    energy_drop: float
    integral: float
    ok: bool
    tolerance: float


def dissipation_check(
    flow_curve: FlowCurve,
    f: Functional,
    S: float,
    T: float,
    max_slope_nodes: Optional[int] = None,
    slope_samples: int = 16,
    rng=None,
    tolerance: Optional[float] = None,
) -> DissipationReport:
    """Defect of the energy identity: drop equals half the action integral.

    Speeds come from central differences on the flow grid; slopes from the
    sampled-sup estimator at a subsample of nodes; the integral uses the
    trapezoid rule on that subsample. The node count refines with the grid
    so the quadrature error vanishes along a mesh ladder.
    """
    if not 0 < S < T <= flow_curve.horizon + 1e-12:
        raise UsageError("need 0 < S < T within the flow horizon")
    space = flow_curve.space
    idx = np.where((flow_curve.times >= S - 1e-12) & (flow_curve.times <= T + 1e-12))[0]
    if max_slope_nodes is None:
        max_slope_nodes = max(48, min(len(idx), 512))
    stride = max(1, len(idx) // max_slope_nodes)
    nodes = list(idx[::stride])
    if nodes[-1] != idx[-1]:
        nodes.append(idx[-1])
    speeds_all = flow_curve.speeds()
    ts, vals = [], []
    for i in nodes:
        x = flow_curve.point(int(i))
        slope = local_slope(f, space, x, samples=slope_samples, rng=rng).value
        ts.append(flow_curve.times[i])
        vals.append(0.5 * (speeds_all[i] ** 2 + slope**2))
    integral = float(np.trapezoid(np.asarray(vals), np.asarray(ts)))
    drop = float(flow_curve.energy_at(S) - flow_curve.energy_at(T))
    residual = abs(drop - integral)
    if tolerance is None:
        scale = 1.0 + abs(drop)
        tolerance = (budget(flow_curve) + (ts[1] - ts[0] if len(ts) > 1 else 0.0)) * scale
    return DissipationReport(residual, drop, integral, residual <= tolerance,
                             tolerance)


@dataclass
class StationaryReport:
    slope: float
    moved: float
    quotient_sups: tuple
    slope_is_zero: bool
    flow_is_fixed: bool
    quotient_bounded: bool
    ok: bool


def stationary_check(
    f: Functional,
    space: Space,
    x: Point,
    T: float,
    slope_tol: float = 1e-4,
    flow_tolerance: float = 1e-4,
    rng=None,
) -> StationaryReport:
    """Agreement of the zero-slope and fixed-flow characterizations at x.

    Also evaluates the descent quotient sup (phi(x) - phi(y)) / d^2(x, y)
    over shrinking shells; boundedness must match the slope predicate.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    srep = local_slope(f, space, x, rng=rng)
    slope = srep.value
    fc = flow(f, space, x, T, flow_tolerance)
    moved = max(
        space.distance(fc.point(i), x) for i in range(len(fc.times))
    )
    move_tol = budget(fc) + slope_tol * T
    radii = srep.radii
    fx = f.value(x)
    qs = []
    for r in radii:
        best = -math.inf
        for y in space.shell_points(x, r, rng, 32, toward=f.anchors()):
            d = space.distance(x, y)
            if d > 1e-15:
                fy = f.value(y)
                if math.isfinite(fy):
                    best = max(best, (fx - fy) / (d * d))
        qs.append(best)
    growing = (
        qs[-1] > 0
        and qs[-1] >= 1.8 * max(qs[-2], 0.0)
        and qs[-1] * radii[-1] > slope_tol
    )
    bounded = not growing
    p_slope = slope <= slope_tol
    p_flow = moved <= move_tol
    ok = (p_slope == p_flow) and (bounded == p_slope)
    return StationaryReport(slope, moved, tuple(qs), p_slope, p_flow, bounded, ok)


@dataclass
class SlopeDecayReport:
    slope_S: float
    slope_T: float
    endpoint_margin: float
    integrated_margin: float
    trend: float
    lam: float
    lam_clamped: bool
    ok: bool


def slope_decay_check(
    flow_curve: FlowCurve,
    f: Functional,
    S: float,
    T: float,
    n_nodes: int = 16,
    rng=None,
    tolerance: float = 1e-3,
) -> SlopeDecayReport:
    """Slope growth bound along the flow plus the integrated variant.

    Positive moduli are clamped to zero (the bound is stated for lam <= 0)
    and flagged. The trend field reports slope(T) / max(slope(S), tol).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    lam_declared = f.lam
    clamped = lam_declared > 0
    lam = min(lam_declared, 0.0)
    space = flow_curve.space
    ts = np.linspace(S, T, n_nodes)
    slopes = np.array(
        [local_slope(f, space, flow_curve.at(float(t)), rng=rng).value for t in ts]
    )
    drop = flow_curve.energy_at(S) - flow_curve.energy_at(T)
    endpoint_rhs = -math.sqrt(2.0) * lam * math.sqrt(T - S) * math.sqrt(max(drop, 0.0))
    endpoint_margin = slopes[-1] - slopes[0] - endpoint_rhs
    integral = float(np.trapezoid(slopes, ts))
    integrated_margin = slopes[-1] - slopes[0] + math.sqrt(2.0) * lam * integral
    scale = 1.0 + float(np.max(slopes))
    tol = tolerance * scale + budget(flow_curve)
    trend = float(slopes[-1] / max(slopes[0], tolerance))
    ok = endpoint_margin <= tol and integrated_margin <= tol
    return SlopeDecayReport(
        float(slopes[0]), float(slopes[-1]), float(endpoint_margin),
        float(integrated_margin), trend, lam, clamped, ok,
    )


@dataclass(frozen=True)
class FlowLeg:
    t_start: float
    t_end: float
    center: Point
    C_empirical: float


def flow_ball_chained(
    f: Functional,
    space: Sphere,
    x0: Point,
    T: float,
    tolerance: float = 1e-3,
    ball_radius: float = math.pi / 6,
) -> FlowCurve:
    """Construct the flow piecewise in balls of the given radius.

    Each leg runs until the trajectory first reaches the ball boundary,
    then the construction restarts at the exit point. The returned curve
    carries a `legs` attribute with per-leg horizons and the empirical
    a-priori constant used for the minimum-duration guarantee.
    """
    if not isinstance(space, Sphere):
        raise UsageError("ball-chained construction is for spheres")
    legs = []
    times = [0.0]
    coords = [space.coords_array(x0)]
    energies = [f.value(x0)]
    mesh_ladder = []
    leg_final_gaps = []
    t_used = 0.0
    center = x0
    while t_used < T - 1e-12:
        leg = flow(f, space, center, T - t_used, tolerance)
        cut = len(leg.times) - 1
        for i in range(1, len(leg.times)):
            if space.distance(center, leg.point(i)) >= ball_radius:
                cut = i
                break
        drops = leg.energies[0] - leg.energies[: cut + 1]
        d2c = np.array(
            [space.distance(leg.point(i), center) ** 2 for i in range(cut + 1)]
        )
        C_emp = float(max(np.max(d2c), np.max(drops), 1e-12))
        legs.append(
            FlowLeg(t_used, t_used + float(leg.times[cut]), center, C_emp)
        )
        times.extend((t_used + leg.times[1 : cut + 1]).tolist())
        coords.extend(leg.coords[1 : cut + 1])
        energies.extend(leg.energies[1 : cut + 1].tolist())
        mesh_ladder.extend(leg.mesh_ladder)
        leg_final_gaps.append(leg.cauchy_gap)
        t_used = legs[-1].t_end
        center = leg.point(cut)
        if cut == len(leg.times) - 1:
            break
    out = FlowCurve(space, f, np.asarray(times), np.asarray(coords),
                    np.asarray(energies), mesh_ladder, leg_final_gaps)
    out.cauchy_gap = float(sum(leg_final_gaps))
    out.legs = legs
    return out
