"""Scenario harness: config parsing, certification suites, reports.

A scenario is one YAML file naming a model space, one or two potentials,
an initial point, a horizon and a mesh ladder, plus the list of suites to
run. Each suite certifies one mathematical statement and returns a
pass/fail record with its worst residual and tolerance. Reports are
byte-deterministic for a fixed config and seed: timing is printed to the
console only and never serialized.
"""

from __future__ import annotations

import json
import math
import os
import time
import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import yaml
import jsonschema

from . import spaces as spmod
from . import splitting as tkmod
from .flow import (
    budget,
    contraction_check,
    discrete_contraction_check,
    dissipation_check,
    evi_check,
    flow,
    flow_ball_chained,
    integrated_evi_check,
    semigroup_check,
    slope_decay_check,
    stationary_check,
)
from .errors import ConfigError, ConvergenceFailure, SolverError, UsageError
from .functionals import (
    Ball,
    check_lambda_convexity,
    functional_from_config,
    _point_from_config,
)
from .keycheck import key_estimate_check
from .scheme import (
    FlowCurve,
    Partition,
    _sup_gap,
    apriori_check,
    converge_flow,
    discrete_evi_residual,
    error_bound_check,
    run_scheme,
)

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["schema", "id", "seed", "space", "initial_point", "horizon",
                 "mesh_ladder", "suites"],
    "properties": {
        "schema": {"const": "proxflow.scenario/1"},
        "id": {"type": "string", "minLength": 1},
        "seed": {"type": "integer"},
        "space": {"type": "object", "required": ["kind"]},
        "functional": {"type": "object", "required": ["kind"]},
        "functionals": {"type": "array", "minItems": 2, "maxItems": 2},
        "initial_point": {"type": "array"},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "mesh_ladder": {"type": "array", "minItems": 2,
                        "items": {"type": "number", "exclusiveMinimum": 0}},
        "suites": {"type": "array", "items": {"type": "string"}},
        "tolerances": {"type": "object"},
        "samples": {"type": "object"},
        "oracle": {"type": "string"},
        "bounding_ball": {"type": "object"},
    },
    "additionalProperties": False,
}


@dataclass
class CheckResult:
    name: str
    statement: str
    status: str  # pass | fail | skip
    worst: float
    tolerance: float
    details: dict = field(default_factory=dict)
    runtime: float = 0.0  # console only, never serialized

    def to_dict(self):
        return {
            "name": self.name,
            "statement": self.statement,
            "status": self.status,
            "worst_residual": self.worst,
            "tolerance": self.tolerance,
            "details": self.details,
        }


class ScenarioContext:
    """Constructed spaces, potentials and helpers for one scenario run."""

    def __init__(self, cfg: dict, tol_scale: float = 1.0):
        self.cfg = cfg
        self.tol_scale = float(tol_scale)
        self.space = spmod.space_from_config(cfg["space"])
        self.seed = int(cfg["seed"])
        if "functionals" in cfg:
            self.f1 = functional_from_config(self.space, cfg["functionals"][0])
            self.f2 = functional_from_config(self.space, cfg["functionals"][1])
            self.functional = None
        else:
            self.functional = functional_from_config(self.space, cfg["functional"])
            self.f1 = self.f2 = None
        self.x0 = _point_from_config(self.space, cfg["initial_point"])
        self.T = float(cfg["horizon"])
        self.mesh_ladder = [float(v) for v in cfg["mesh_ladder"]]
        self.samples = dict(cfg.get("samples", {}))
        self.tolerances = dict(cfg.get("tolerances", {}))
        self.bounding_ball = None
        if cfg.get("bounding_ball"):
            bb = cfg["bounding_ball"]
            self.bounding_ball = Ball(
                _point_from_config(self.space, bb["center"]), float(bb["radius"])
            )
        self.oracle = self._build_oracle(cfg.get("oracle"))

    def rng(self, suite: str):
        return np.random.default_rng([self.seed, zlib.crc32(suite.encode())])

    def n(self, key: str, default: int) -> int:
        return int(self.samples.get(key, default))

    def tol(self, suite: str, default: float) -> float:
        return float(self.tolerances.get(suite, default)) * self.tol_scale

    @property
    def region(self) -> Optional[Ball]:
        f = self.functional or self.f1
        return f.region if f is not None else None

    @property
    def working_K(self) -> float:
        """Squared-distance modulus used by interpolants and residuals."""
        if self.space.case_tag == "GLOBAL_K":
            return 2.0
        return self.space.convexity_constant(
            min(2.0 * self.region.radius, math.pi - 1e-9)
        )

    @property
    def working_R(self) -> Optional[float]:
        if self.space.case_tag == "GLOBAL_K":
            return None
        return min(2.0 * self.region.radius, math.pi - 1e-9)

    def sample_point(self, rng) -> spmod.Point:
        if self.region is not None:
            return self.space.random_point_in_ball(
                self.region.center, self.region.radius, rng
            )
        return self.space.random_point(rng)

    def _build_oracle(self, name) -> Optional[Callable[[float], spmod.Point]]:
        if name is None:
            return None
        f, space, x0 = self.functional, self.space, self.x0
        if name == "exp_quadratic":
            p = np.asarray(f.anchor.coords, dtype=float)
            v0 = np.asarray(x0.coords, dtype=float) - p
            w = f.weight

            return lambda t: space.point(p + math.exp(-w * t) * v0)
        if name == "sphere_radial":
            r0 = space.distance(f.anchor, x0)
            w = f.weight

            def oracle(t):
                if r0 == 0.0:
                    return x0
                return space.geodesic_point(f.anchor, x0, math.exp(-w * t))

            return oracle
        if name == "shrink_to_anchor":
            d0 = space.distance(x0, f.anchor)
            w = f.weight

            def oracle(t):
                if d0 == 0.0:
                    return x0
                return space.geodesic_point(x0, f.anchor, min(w * t, d0) / d0)

            return oracle
        raise ConfigError(f"unknown oracle {name!r}", path="oracle")


# ---------------------------------------------------------------------------
# suites

SUITES: dict = {}


def suite(name, statement, description, module):
    def wrap(fn):
        SUITES[name] = {
            "fn": fn,
            "statement": statement,
            "description": description,
            "module": module,
        }
        return fn

    return wrap


def _passfail(ok):
    return "pass" if ok else "fail"


@suite("commutativity", "mixed first variations of squared distances commute",
       "extrapolated one-sided quotients along both geodesic legs agree",
       "spaces")
def _suite_commutativity(ctx: ScenarioContext) -> CheckResult:
    rng = ctx.rng("commutativity")
    n = ctx.n("commutativity", 1000)
    tol = ctx.tol("commutativity", 1e-6)
    space = ctx.space
    worst = 0.0
    done = 0
    while done < n:
        x = space.random_point(rng)
        y = space.random_point(rng)
        z = space.random_point(rng)
        dxy, dxz = space.distance(x, y), space.distance(x, z)
        if min(dxy, dxz) < 1e-2:
            continue
        if max(dxy, dxz) >= space.uniqueness_radius - 0.2:
            continue
        if space.kind == "startree":
            # keep the difference stencil clear of the hub kink
            off = x.coords[1]
            if 0.0 < off < 5e-3 * max(dxy, dxz):
                continue
        rep = spmod.check_commutativity(space, x, y, z, tol=tol)
        worst = max(worst, rep.gap)
        done += 1
    return CheckResult("commutativity", SUITES["commutativity"]["statement"],
                       _passfail(worst <= tol), worst, tol, {"samples": n})


@suite("cat1", "triangles are thinner than their spherical comparisons",
       "pointwise comparison of geodesics against comparison triangles",
       "spaces")
def _suite_cat1(ctx: ScenarioContext) -> CheckResult:
    rng = ctx.rng("cat1")
    n = ctx.n("cat1", 300)
    space = ctx.space
    bad = 0
    done = 0
    while done < n:
        x, y, z = (space.random_point(rng) for _ in range(3))
        a = space.distance(y, z)
        per = space.distance(x, y) + space.distance(x, z) + a
        if per >= 2 * math.pi - 1e-6 or a >= space.uniqueness_radius - 1e-6:
            continue
        done += 1
        if not spmod.check_cat1_triangle(space, x, y, z, samples=100):
            bad += 1
    return CheckResult("cat1", SUITES["cat1"]["statement"],
                       _passfail(bad == 0), float(bad), 0.0, {"samples": n})


@suite("convexity_modulus", "squared-distance convexity table on balls",
       "second-difference scan of d^2 along sampled in-ball geodesics",
       "spaces")
def _suite_convexity_modulus(ctx: ScenarioContext) -> CheckResult:
    rng = ctx.rng("convexity_modulus")
    space = ctx.space
    if space.kind != "sphere":
        mu = _second_difference_modulus(space, None, 1.0, rng,
                                        ctx.n("convexity_geodesics", 200))
        worst = 2.0 - mu
        return CheckResult(
            "convexity_modulus", SUITES["convexity_modulus"]["statement"],
            _passfail(worst <= 1e-9), worst, 1e-9, {"modulus": mu},
        )
    worst = -math.inf
    details = {}
    for R in (math.pi / 6, math.pi / 4, math.pi / 3, math.pi / 2, 2 * math.pi / 3):
        mu = _second_difference_modulus(
            space, space.random_point(rng), R, rng, ctx.n("convexity_geodesics", 200)
        )
        KR = space.convexity_constant(R)
        details[f"R={R:.6f}"] = {"table": KR, "empirical": mu}
        worst = max(worst, KR - mu)
    return CheckResult(
        "convexity_modulus", SUITES["convexity_modulus"]["statement"],
        _passfail(worst <= 1e-6), worst, 1e-6, details,
    )


def _second_difference_modulus(space, center, R, rng, n_geodesics):
    """Infimum of second-difference quotients of d^2(center, .) on B(center, R)."""
    if center is None:
        center = space.random_point(rng)
    ts = np.linspace(0.1, 0.9, 9)
    mu = math.inf
    done = 0
    while done < n_geodesics:
        a = space.random_point_in_ball(center, R, rng)
        b = space.random_point_in_ball(center, R, rng)
        L = space.distance(a, b)
        if L < 1e-3 or L >= space.uniqueness_radius - 1e-9:
            continue
        mids = space.dist2_along(a, b, center, ts)
        if space.kind == "sphere" and np.sqrt(np.max(mids)) >= R:
            continue  # geodesic exits the ball
        done += 1
        fa = space.distance(a, center) ** 2
        fb = space.distance(b, center) ** 2
        for t, fm in zip(ts, mids):
            defect = (1 - t) * fa + t * fb - fm
            mu = min(mu, 2.0 * defect / ((1 - t) * t * L * L))
    if space.kind == "sphere":
        # targeted probes: short geodesics perpendicular to the radius near
        # the boundary, where the modulus is attained
        for shrink in (1e-2, 1e-3, 1e-4):
            r0 = R * (1.0 - shrink) if R < math.pi / 2 else R - shrink
            x = center
            u = space.tangent_direction(x, rng)
            a0 = space.exp(x, u, r0)
            v = space.tangent_direction(a0, rng)
            v = v - np.dot(v, space.log(a0, x)) * space.log(a0, x) / max(
                np.dot(space.log(a0, x), space.log(a0, x)), 1e-30
            )
            nv = np.linalg.norm(v)
            if nv < 1e-9:
                continue
            v /= nv
            ell = 1e-2
            a = space.exp(a0, v, -ell)
            b = space.exp(a0, v, ell)
            if max(space.distance(center, a), space.distance(center, b)) >= R:
                continue
            L = space.distance(a, b)
            fa = space.distance(a, center) ** 2
            fb = space.distance(b, center) ** 2
            fm = space.dist2_along(a, b, center, np.array([0.5]))[0]
            defect = 0.5 * fa + 0.5 * fb - fm
            mu = min(mu, 8.0 * defect / (L * L))
    return float(mu)


@suite("lambda_convexity", "declared semi-convexity modulus holds on geodesics",
       "largest empirical modulus over sampled geodesic triples",
       "functionals")
def _suite_lambda_convexity(ctx: ScenarioContext) -> CheckResult:
    fs = [ctx.functional] if ctx.functional is not None else [ctx.f1, ctx.f2]
    worst = -math.inf
    details = {}
    for i, f in enumerate(fs):
        mu = check_lambda_convexity(f, ctx.space, ctx.n("lambda_triples", 300),
                                    seed=ctx.seed + i)
        details[f"f{i + 1}"] = {"declared": f.lam, "empirical": mu}
        worst = max(worst, f.lam - mu)
    return CheckResult("lambda_convexity", SUITES["lambda_convexity"]["statement"],
                       _passfail(worst <= 1e-7), worst, 1e-7, details)


@suite("key_estimate", "one-step proximal key inequality",
       "residual of the key inequality over random (x, tau, y) samples",
       "scheme")
def _suite_key_estimate(ctx: ScenarioContext) -> CheckResult:
    rng = ctx.rng("key_estimate")
    n = ctx.n("key_estimate", 1000)
    tol = ctx.tol("key_estimate", 1e-8)
    f, space = ctx.functional, ctx.space
    tau_hi = min(0.5, f.tau_star / 8.0 if math.isfinite(f.tau_star) else 0.5)
    worst = -math.inf
    skipped = 0
    done = 0
    while done < n:
        x = ctx.sample_point(rng)
        y = ctx.sample_point(rng)
        tau = float(rng.uniform(0.01, tau_hi))
        rep = key_estimate_check(f, space, x, tau, y)
        if rep.skipped is not None:
            skipped += 1
            if skipped > 10 * n:
                raise UsageError("key estimate sampling starved by preconditions")
            continue
        done += 1
        worst = max(worst, rep.residual)
    return CheckResult("key_estimate", SUITES["key_estimate"]["statement"],
                       _passfail(worst <= tol), worst, tol,
                       {"samples": n, "skipped": skipped})


@suite("apriori", "a-priori summed-displacement and distance-chain bounds",
       "exact inequalities on every generated discrete solution",
       "scheme")
def _suite_apriori(ctx: ScenarioContext) -> CheckResult:
    f, space = ctx.functional, ctx.space
    x_star = f.anchors()[0] if f.anchors() else ctx.x0
    worst = -math.inf
    for mesh in ctx.mesh_ladder:
        sol = run_scheme(f, space, ctx.x0, Partition.with_mesh(ctx.T, mesh))
        rep = apriori_check(sol, x_star)
        worst = max(worst, rep.worst_sum_slack, rep.worst_chain_slack)
    tol = ctx.tol("apriori", 1e-9)
    return CheckResult("apriori", SUITES["apriori"]["statement"],
                       _passfail(worst <= tol), worst, tol,
                       {"meshes": len(ctx.mesh_ladder)})


@suite("discrete_evi", "discrete evolution variational inequality",
       "interpolant residual at interior times against admissible test points",
       "scheme")
def _suite_discrete_evi(ctx: ScenarioContext) -> CheckResult:
    rng = ctx.rng("discrete_evi")
    f, space = ctx.functional, ctx.space
    n_times = ctx.n("evi_times", 50)
    n_ys = ctx.n("evi_test_points", 20)
    tol = ctx.tol("discrete_evi", 1e-8)
    mesh = ctx.mesh_ladder[min(2, len(ctx.mesh_ladder) - 1)]
    sol = run_scheme(f, space, ctx.x0, Partition.with_mesh(ctx.T, mesh))
    K = ctx.working_K
    R = ctx.working_R
    worst = -math.inf
    skipped = 0
    ys = [ctx.sample_point(rng) for _ in range(n_ys)]
    grid = sol.partition.times
    for _ in range(n_times):
        k = int(rng.integers(1, sol.n_steps + 1))
        t = float(rng.uniform(grid[k - 1] + 1e-9, grid[k] - 1e-9))
        for y in ys:
            if R is not None:
                xk = sol.point(k)
                if space.distance(xk, y) >= R - sol.displacements[k - 1]:
                    skipped += 1
                    continue
            worst = max(worst, discrete_evi_residual(sol, y, t, f.lam, K))
    return CheckResult("discrete_evi", SUITES["discrete_evi"]["statement"],
                       _passfail(worst <= tol), worst, tol,
                       {"times": n_times, "test_points": n_ys, "skipped": skipped})


@suite("convergence", "the scheme converges with order at least one half",
       "sup distance to the analytic flow along the mesh ladder",
       "scheme")
def _suite_convergence(ctx: ScenarioContext) -> CheckResult:
    if ctx.oracle is None:
        return CheckResult("convergence", SUITES["convergence"]["statement"],
                           "skip", math.nan, math.nan,
                           {"reason": "no oracle declared"})
    f, space = ctx.functional, ctx.space
    rows = []
    for mesh in ctx.mesh_ladder:
        sol = run_scheme(f, space, ctx.x0, Partition.with_mesh(ctx.T, mesh))
        worst = 0.0
        for k in range(1, sol.n_steps + 1):
            xk = sol.point(k)
            for t in (sol.partition.times[k - 1], sol.partition.times[k]):
                worst = max(worst, space.distance(xk, ctx.oracle(float(t))))
        rows.append((mesh, worst))
    sups = [r[1] for r in rows]
    mono = all(b < a for a, b in zip(sups, sups[1:]))
    logm = np.log([r[0] for r in rows])
    logs = np.log(np.maximum(sups, 1e-300))
    A = np.vstack([np.ones_like(logm), logm]).T
    coef, *_ = np.linalg.lstsq(A, logs, rcond=None)
    order = float(coef[1])
    ok = mono and order >= 0.5
    return CheckResult("convergence", SUITES["convergence"]["statement"],
                       _passfail(ok), -order, -0.5,
                       {"table": [[m, s] for m, s in rows],
                        "fitted_order": order, "monotone": mono})


@suite("error_bound", "mesh-level error bound against the limit curve",
       "squared-distance interpolant versus its decay bound at all grid times",
       "scheme")
def _suite_error_bound(ctx: ScenarioContext) -> CheckResult:
    f, space = ctx.functional, ctx.space
    fc = converge_flow(f, space, ctx.x0, ctx.T, ctx.mesh_ladder)
    K = ctx.working_K
    worst = -math.inf
    clamped = False
    for mesh in ctx.mesh_ladder[:-1]:
        sol = run_scheme(f, space, ctx.x0, Partition.with_mesh(ctx.T, mesh))
        rep = error_bound_check(sol, fc, K)
        clamped = clamped or rep.lam_clamped
        worst = max(worst, rep.worst_margin)
    return CheckResult("error_bound", SUITES["error_bound"]["statement"],
                       _passfail(worst <= 0.0), worst, 0.0,
                       {"lam_clamped": clamped})


@suite("contraction", "exponential contraction of the flow map",
       "flow distance ratios against the contraction envelope for random pairs",
       "flow")
def _suite_contraction(ctx: ScenarioContext) -> CheckResult:
    rng = ctx.rng("contraction")
    f, space = ctx.functional, ctx.space
    pairs = ctx.n("contraction_pairs", 10)
    tol_flow = ctx.tol("contraction_flow", 1e-3)
    worst_ratio = 0.0
    ok = True
    for _ in range(pairs):
        x0 = ctx.sample_point(rng)
        y0 = ctx.sample_point(rng)
        rep = contraction_check(f, space, x0, y0, min(ctx.T, 1.0),
                                        tolerance=tol_flow, K=ctx.working_K)
        ok = ok and rep.ok
        if len(rep.ratios):
            worst_ratio = max(worst_ratio, float(np.max(rep.ratios)))
    return CheckResult("contraction", SUITES["contraction"]["statement"],
                       _passfail(ok), worst_ratio, 1.0,
                       {"pairs": pairs, "note": "tolerance budgeted per pair"})


@suite("discrete_contraction", "per-step contraction inequality",
       "exact intermediate inequality plus fitted mesh-level constant",
       "flow")
def _suite_discrete_contraction(ctx: ScenarioContext) -> CheckResult:
    rng = ctx.rng("discrete_contraction")
    f, space = ctx.functional, ctx.space
    mesh = ctx.mesh_ladder[min(1, len(ctx.mesh_ladder) - 1)]
    part = Partition.with_mesh(ctx.T, mesh)
    worst = -math.inf
    fitted = 0.0
    for _ in range(ctx.n("contraction_pairs", 5)):
        x0 = ctx.sample_point(rng)
        y0 = ctx.sample_point(rng)
        rep = discrete_contraction_check(f, space, x0, y0, part,
                                                 ctx.working_K)
        worst = max(worst, rep.exact_worst)
        fitted = max(fitted, rep.fitted_c)
    tol = ctx.tol("discrete_contraction", 1e-8)
    return CheckResult("discrete_contraction",
                       SUITES["discrete_contraction"]["statement"],
                       _passfail(worst <= tol), worst, tol,
                       {"fitted_sqrt_mesh_constant": fitted})


@suite("semigroup", "flow semigroup property",
       "restarted flows agree with the direct flow on an (s, t) grid",
       "flow")
def _suite_semigroup(ctx: ScenarioContext) -> CheckResult:
    rep = semigroup_check(ctx.functional, ctx.space, ctx.x0, ctx.T,
                                  tolerance=ctx.tol("semigroup_flow", 1e-3))
    return CheckResult("semigroup", SUITES["semigroup"]["statement"],
                       _passfail(rep.ok), rep.worst_defect, rep.tolerance,
                       {"grid": len(rep.pairs)})


@suite("evi", "evolution variational inequality along the flow",
       "extrapolated forward quotients against admissible test points",
       "flow")
def _suite_evi(ctx: ScenarioContext) -> CheckResult:
    rng = ctx.rng("evi")
    f, space = ctx.functional, ctx.space
    fc = flow(f, space, ctx.x0, ctx.T,
                      tolerance=ctx.tol("evi_flow", 2e-4))
    n = ctx.n("evi_samples", 100)
    worst = -math.inf
    worst_tol = 0.0
    skipped = 0
    for _ in range(n):
        t = float(rng.uniform(0.05 * ctx.T, 0.7 * ctx.T))
        y = ctx.sample_point(rng)
        rep = evi_check(fc, f, y, [t])
        if not rep.times:
            skipped += 1
            continue
        worst = max(worst, rep.residuals[0] - rep.tolerances[0])
        worst_tol = max(worst_tol, rep.tolerances[0])
    return CheckResult("evi", SUITES["evi"]["statement"],
                       _passfail(worst <= 0.0), worst, worst_tol,
                       {"samples": n, "skipped": skipped,
                        "note": "residual minus per-sample tolerance"})


@suite("integrated_evi", "integrated evolution variational inequality",
       "exponentially weighted integral form against sampled test points",
       "flow")
def _suite_integrated_evi(ctx: ScenarioContext) -> CheckResult:
    rng = ctx.rng("integrated_evi")
    f, space = ctx.functional, ctx.space
    fc = flow(f, space, ctx.x0, ctx.T,
                      tolerance=ctx.tol("evi_flow", 2e-4))
    worst = -math.inf
    for _ in range(ctx.n("integrated_evi_samples", 10)):
        y = ctx.sample_point(rng)
        rep = integrated_evi_check(fc, f, y, ctx.T)
        worst = max(worst, rep.lhs - rep.rhs_integral - rep.tolerance,
                    rep.lhs - rep.rhs_endpoint - rep.tolerance)
    return CheckResult("integrated_evi", SUITES["integrated_evi"]["statement"],
                       _passfail(worst <= 0.0), worst, 0.0, {})


@suite("dissipation", "energy dissipation identity",
       "energy drop versus the action integral, refined along the ladder",
       "flow")
def _suite_dissipation(ctx: ScenarioContext) -> CheckResult:
    f, space = ctx.functional, ctx.space
    rng = ctx.rng("dissipation")
    S, T = 0.2 * ctx.T, 0.9 * ctx.T
    sols = [run_scheme(f, space, ctx.x0, Partition.with_mesh(ctx.T, m))
            for m in ctx.mesh_ladder]
    rows = []
    prev = None
    for mesh, sol in zip(ctx.mesh_ladder, sols):
        gap = _sup_gap(space, prev, sol) if prev is not None else math.inf
        fc = FlowCurve(space, f, sol.partition.times, sol.coords, sol.energies,
                       [mesh], [gap] if prev is not None else [])
        rep = dissipation_check(fc, f, S, T, rng=rng)
        rows.append((mesh, rep.residual))
        prev = sol
    res = [r[1] for r in rows]
    logm = np.log([r[0] for r in rows])
    logs = np.log(np.maximum(res, 1e-300))
    A = np.vstack([np.ones_like(logm), logm]).T
    coef, *_ = np.linalg.lstsq(A, logs, rcond=None)
    order = float(coef[1])
    shrinks = res[-1] <= res[0] * 0.5 + 1e-9
    return CheckResult("dissipation", SUITES["dissipation"]["statement"],
                       _passfail(shrinks), res[-1], res[0] * 0.5 + 1e-9,
                       {"table": [[m, r] for m, r in rows],
                        "fitted_order": order})


@suite("stationary", "zero slope characterizes fixed points of the flow",
       "slope, flow motion and descent-quotient predicates must agree",
       "flow")
def _suite_stationary(ctx: ScenarioContext) -> CheckResult:
    rng = ctx.rng("stationary")
    f, space = ctx.functional, ctx.space
    n = ctx.n("stationary_points", 50)
    anchors = list(f.anchors())
    pts = list(anchors)
    while len(pts) < n:
        p = ctx.sample_point(rng)
        # keep sampled points clearly away from the minimizers so the
        # stationary/moving classification is unambiguous
        if all(space.distance(p, a) >= 0.05 for a in anchors):
            pts.append(p)
    bad = 0
    for p in pts[:n]:
        rep = stationary_check(
            f, space, p, min(ctx.T, 0.4),
            slope_tol=ctx.tol("stationary_slope", 1e-3),
            flow_tolerance=ctx.tol("stationary_flow", 5e-4), rng=rng,
        )
        if not rep.ok:
            bad += 1
    return CheckResult("stationary", SUITES["stationary"]["statement"],
                       _passfail(bad == 0), float(bad), 0.0, {"points": n})


@suite("slope_decay", "slope decay bound along the flow",
       "endpoint and integrated slope growth bounds",
       "flow")
def _suite_slope_decay(ctx: ScenarioContext) -> CheckResult:
    f, space = ctx.functional, ctx.space
    fc = flow(f, space, ctx.x0, ctx.T,
                      tolerance=ctx.tol("evi_flow", 2e-4))
    rep = slope_decay_check(fc, f, 0.1 * ctx.T, 0.9 * ctx.T,
                                    rng=ctx.rng("slope_decay"))
    worst = max(rep.endpoint_margin, rep.integrated_margin)
    return CheckResult("slope_decay", SUITES["slope_decay"]["statement"],
                       _passfail(rep.ok), worst, 0.0,
                       {"trend": rep.trend, "lam_clamped": rep.lam_clamped})


@suite("ball_chained", "piecewise construction in small balls matches the flow",
       "restarted construction with the minimum leg-duration guarantee",
       "flow")
def _suite_ball_chained(ctx: ScenarioContext) -> CheckResult:
    f, space = ctx.functional, ctx.space
    tol_flow = ctx.tol("ball_chained_flow", 5e-4)
    chained = flow_ball_chained(f, space, ctx.x0, ctx.T, tol_flow)
    direct = flow(f, space, ctx.x0, ctx.T, tol_flow)
    bud = budget(chained, direct)
    worst = 0.0
    for i in range(len(chained.times)):
        d = space.distance(chained.point(i), direct.at(float(chained.times[i])))
        worst = max(worst, d)
    C = max(leg.C_empirical for leg in chained.legs)
    min_leg = (math.pi / 6) ** 2 / (2.0 * C)
    durations = [leg.t_end - leg.t_start for leg in chained.legs[:-1]]
    legs_ok = all(d >= min_leg for d in durations)
    ok = worst <= bud and legs_ok
    return CheckResult("ball_chained", SUITES["ball_chained"]["statement"],
                       _passfail(ok), worst, bud,
                       {"legs": len(chained.legs), "min_leg_bound": min_leg,
                        "durations": durations})


@suite("tk_convergence", "alternating splitting converges to the sum flow",
       "sup distance between splitting interpolants and the reference flow",
       "splitting")
def _suite_tk_convergence(ctx: ScenarioContext) -> CheckResult:
    rep = tkmod.tk_convergence(ctx.f1, ctx.f2, ctx.space, ctx.x0, ctx.T,
                               ctx.mesh_ladder, bounding_ball=ctx.bounding_ball)
    tol = ctx.tol("tk_convergence", 1e-3)
    at_floor = math.isnan(rep.fitted_order)
    ok = rep.ok and rep.sup_errors[-1] <= tol and (
        at_floor or rep.fitted_order >= 0.5
    )
    return CheckResult("tk_convergence", SUITES["tk_convergence"]["statement"],
                       _passfail(ok), rep.sup_errors[-1], tol,
                       {"table": [[m, s] for m, s in
                                  zip(rep.meshes, rep.sup_errors)],
                        "fitted_order": None if at_floor else rep.fitted_order})


@suite("delta_budget", "Lipschitz pairs respect the 2 L^2 T defect budget",
       "summed delta ledger against the a-priori Lipschitz bound",
       "splitting")
def _suite_delta_budget(ctx: ScenarioContext) -> CheckResult:
    L1, L2 = ctx.f1.lipschitz_bound, ctx.f2.lipschitz_bound
    if L1 is None or L2 is None:
        return CheckResult("delta_budget", SUITES["delta_budget"]["statement"],
                           "skip", math.nan, math.nan,
                           {"reason": "no Lipschitz bounds declared"})
    worst = -math.inf
    for mesh in ctx.mesh_ladder:
        scheme = tkmod.run_split(ctx.f1, ctx.f2, ctx.space, ctx.x0,
                                 Partition.with_mesh(ctx.T, mesh),
                                 bounding_ball=ctx.bounding_ball)
        rep = tkmod.delta_budget(scheme, L1, L2, ctx.T)
        worst = max(worst, rep.total_delta - rep.bound, rep.worst_half_step)
    return CheckResult("delta_budget", SUITES["delta_budget"]["statement"],
                       _passfail(worst <= 1e-9), worst, 1e-9, {})


@suite("split_bounds", "splitting energy and displacement bounds",
       "delta-driven bounds on energies and pairwise displacements",
       "splitting")
def _suite_split_bounds(ctx: ScenarioContext) -> CheckResult:
    worst = -math.inf
    for mesh in ctx.mesh_ladder[:3]:
        scheme = tkmod.run_split(ctx.f1, ctx.f2, ctx.space, ctx.x0,
                                 Partition.with_mesh(ctx.T, mesh),
                                 bounding_ball=ctx.bounding_ball)
        rep = tkmod.bound_check(scheme, ctx.T)
        worst = max(worst, rep.energy_margin, rep.displacement_margin)
    return CheckResult("split_bounds", SUITES["split_bounds"]["statement"],
                       _passfail(worst <= 1e-9), worst, 1e-9, {})


@suite("split_key_estimate", "exact one-step splitting inequality",
       "per-step residual against sampled test points",
       "splitting")
def _suite_split_key_estimate(ctx: ScenarioContext) -> CheckResult:
    rng = ctx.rng("split_key_estimate")
    n_ws = ctx.n("split_test_points", 20)
    tol = ctx.tol("split_key_estimate", 1e-8)
    mesh = ctx.mesh_ladder[min(1, len(ctx.mesh_ladder) - 1)]
    scheme = tkmod.run_split(ctx.f1, ctx.f2, ctx.space, ctx.x0,
                             Partition.with_mesh(ctx.T, mesh),
                             bounding_ball=ctx.bounding_ball)
    ws = [ctx.sample_point(rng) for _ in range(n_ws)]
    worst = -math.inf
    scale = 1.0
    for k in range(1, scheme.n_steps + 1):
        for w in ws:
            r = tkmod.split_key_estimate_check(scheme, w, k, ctx.working_K)
            worst = max(worst, r)
    return CheckResult("split_key_estimate",
                       SUITES["split_key_estimate"]["statement"],
                       _passfail(worst <= tol * scale), worst, tol,
                       {"steps": scheme.n_steps, "test_points": n_ws})


# ---------------------------------------------------------------------------
# running scenarios


def load_scenario(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot read scenario config: {err}", path=path)
    try:
        jsonschema.validate(cfg, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config field {where}: {err.message}", path=path)
    if ("functional" in cfg) == ("functionals" in cfg):
        raise ConfigError("exactly one of functional/functionals is required",
                          path=path)
    return cfg


def run_scenario(
    path: str,
    out_dir: Optional[str] = None,
    seed: Optional[int] = None,
    tol_scale: float = 1.0,
) -> tuple:
    """Execute a scenario config; returns (report dict, exit code)."""
    cfg = load_scenario(path)
    if seed is not None:
        cfg = dict(cfg, seed=int(seed))
    ctx = ScenarioContext(cfg, tol_scale=tol_scale)
    checks = []
    for name in cfg["suites"]:
        if name not in SUITES:
            raise ConfigError(f"unknown suite {name!r}", path=path)
        start = time.perf_counter()
        try:
            result = SUITES[name]["fn"](ctx)
        except (SolverError, ConvergenceFailure, UsageError) as err:
            result = CheckResult(name, SUITES[name]["statement"], "fail",
                                 math.nan, math.nan, {"error": str(err)})
        result.runtime = time.perf_counter() - start
        checks.append(result)
    report = {
        "schema": "proxflow.report/1",
        "scenario": cfg["id"],
        "seed": ctx.seed,
        "checks": [c.to_dict() for c in checks],
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _atomic_write(
            os.path.join(out_dir, f"{cfg['id']}.report.json"),
            json.dumps(report, sort_keys=True, indent=2) + "\n",
        )
        for c in checks:
            table = c.details.get("table")
            if table:
                lines = [f"# {cfg['id']} {c.name}", "# mesh sup_error"]
                lines += [f"{m!r} {s!r}" for m, s in table]
                _atomic_write(
                    os.path.join(out_dir, f"{cfg['id']}.{c.name}.table.txt"),
                    "\n".join(lines) + "\n",
                )
    failed = any(c.status == "fail" for c in checks)
    return report, (1 if failed else 0)


def _atomic_write(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def format_report(report: dict) -> str:
    lines = [f"scenario {report['scenario']} (seed {report['seed']})"]
    lines.append(f"{'check':24} {'statement':58} {'status':6} "
                 f"{'worst residual':>14} {'tolerance':>12}")
    for c in report["checks"]:
        lines.append(
            f"{c['name']:24} {c['statement']:58} {c['status']:6} "
            f"{c['worst_residual']:14.3e} {c['tolerance']:12.3e}"
        )
    return "\n".join(lines)


def list_suites(module: Optional[str] = None) -> str:
    names = [n for n, s in SUITES.items() if module is None or s["module"] == module]
    if not names:
        return f"warning: no suites match module filter {module!r}"
    width = max(len(n) for n in names)
    lines = []
    for n in names:
        s = SUITES[n]
        lines.append(f"{n:{width}}  [{s['module']}] {s['statement']}")
        lines.append(f"{'':{width}}  {s['description']}")
    return "\n".join(lines)
