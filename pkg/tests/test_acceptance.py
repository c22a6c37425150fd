"""Acceptance gate: every stated criterion at its stated tolerance.

Each test certifies one numbered criterion and prints one pass/fail line
(visible with pytest -s). Tolerances are pinned here, not configured.
"""

import math

import numpy as np
import pytest

import proxflow as pf
from proxflow.flow import budget
from proxflow.scheme import _sup_gap

PI = math.pi


def emit(num, name, ok, detail=""):
    line = f"[criterion {num:02d}] {name}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    assert ok, line


class Setup:
    def __init__(self, name, space, f, x0, T, sample, working_R=None):
        self.name = name
        self.space = space
        self.f = f
        self.x0 = x0
        self.T = T
        self.sample = sample
        self.working_R = working_R  # ball for local moduli, None when global

    @property
    def working_K(self):
        if self.working_R is None:
            return 2.0
        return self.space.convexity_constant(self.working_R)


@pytest.fixture(scope="module")
def setups():
    out = {}

    plane = pf.Euclidean(2)
    origin = plane.point([0.0, 0.0])
    ball = pf.Ball(origin, 2.5)
    out["euclidean-quadratic"] = Setup(
        "euclidean-quadratic", plane, pf.HalfSqDist(plane, origin, region=ball),
        plane.point([1.0, 0.5]), 1.0,
        lambda rng: plane.random_point_in_ball(origin, 2.5, rng),
    )
    out["euclidean-distance"] = Setup(
        "euclidean-distance", plane, pf.DistTo(plane, origin, region=ball),
        plane.point([1.0, 0.0]), 1.0,
        lambda rng: plane.random_point_in_ball(origin, 2.5, rng),
    )

    tree = pf.StarTree([2.0, 3.0, 2.5])
    hub = tree.point(0, 0.0)
    out["tree-distance"] = Setup(
        "tree-distance", tree, pf.DistTo(tree, hub), tree.point(1, 2.0), 1.5,
        lambda rng: tree.random_point(rng),
    )

    sphere = pf.Sphere(2)
    pole = sphere.point([0.0, 0.0, 1.0])
    f_sq = pf.HalfSqDist(sphere, pole, region=pf.Ball(pole, PI / 3))
    x0 = sphere.geodesic_point(pole, sphere.point([1.0, 0.0, 0.0]), 1.0 / (PI / 2))
    out["sphere-quadratic"] = Setup(
        "sphere-quadratic", sphere, f_sq, x0, 1.0,
        lambda rng: sphere.random_point_in_ball(pole, PI / 3, rng),
        working_R=2 * PI / 3,
    )
    return out


MESH_LADDER = [0.1 * 0.5**j for j in range(6)]


def test_criterion_01_key_estimate(setups):
    worst_all = -math.inf
    for s in setups.values():
        rng = np.random.default_rng(101)
        tau_hi = 0.5
        done = 0
        worst = -math.inf
        while done < 1000:
            x = s.sample(rng)
            y = s.sample(rng)
            tau = float(rng.uniform(0.01, tau_hi))
            rep = pf.key_estimate_check(s.f, s.space, x, tau, y)
            if rep.skipped is not None:
                continue
            done += 1
            worst = max(worst, rep.residual)
        assert worst <= 1e-8, (s.name, worst)
        worst_all = max(worst_all, worst)
    emit(1, "key estimate on 4 space/potential pairs, 1000 samples each",
         worst_all <= 1e-8, f"worst residual {worst_all:.3e} <= 1e-8")


def test_criterion_02_commutativity():
    spaces = [pf.Euclidean(2), pf.Sphere(2), pf.StarTree([2.0, 3.0, 2.5])]
    worst_all = 0.0
    for space in spaces:
        rng = np.random.default_rng(202)
        done = 0
        worst = 0.0
        while done < 1000:
            x, y, z = (space.random_point(rng) for _ in range(3))
            dxy, dxz = space.distance(x, y), space.distance(x, z)
            if min(dxy, dxz) < 1e-2 or max(dxy, dxz) >= space.uniqueness_radius - 0.2:
                continue
            if space.kind == "startree" and 0.0 < x.coords[1] < 5e-3 * max(dxy, dxz):
                continue
            rep = pf.check_commutativity(space, x, y, z)
            worst = max(worst, rep.gap)
            done += 1
        assert worst <= 1e-6, (space.kind, worst)
        worst_all = max(worst_all, worst)
    emit(2, "commutativity gap after extrapolation, 1000 triples per space",
         worst_all <= 1e-6, f"worst gap {worst_all:.3e} <= 1e-6")


def test_criterion_03_apriori(setups):
    worst = -math.inf
    n_sols = 0
    for s in setups.values():
        x_star = s.f.anchors()[0]
        for mesh in MESH_LADDER:
            sol = pf.run_scheme(s.f, s.space, s.x0,
                                pf.Partition.with_mesh(s.T, mesh))
            rep = pf.apriori_check(sol, x_star)
            worst = max(worst, rep.worst_sum_slack, rep.worst_chain_slack)
            n_sols += 1
    emit(3, "a-priori inequalities on every generated discrete solution",
         worst <= 1e-9, f"worst slack {worst:.3e} <= 1e-9 over {n_sols} solutions")


def test_criterion_04_discrete_evi(setups):
    worst_all = -math.inf
    for s in setups.values():
        rng = np.random.default_rng(404)
        sol = pf.run_scheme(s.f, s.space, s.x0, pf.Partition.with_mesh(s.T, 0.025))
        K = s.working_K
        ys = []
        while len(ys) < 20:
            ys.append(s.sample(rng))
        worst = -math.inf
        grid = sol.partition.times
        for _ in range(50):
            k = int(rng.integers(1, sol.n_steps + 1))
            t = float(rng.uniform(grid[k - 1] + 1e-9, grid[k] - 1e-9))
            for y in ys:
                if s.working_R is not None:
                    if s.space.distance(sol.point(k), y) >= (
                        s.working_R - sol.displacements[k - 1]
                    ):
                        continue
                worst = max(worst,
                            pf.discrete_evi_residual(sol, y, t, s.f.lam, K))
        assert worst <= 1e-8, (s.name, worst)
        worst_all = max(worst_all, worst)
    emit(4, "discrete EVI residual at 50 interior times x 20 test points",
         worst_all <= 1e-8, f"worst residual {worst_all:.3e} <= 1e-8")


def test_criterion_05_scheme_convergence(setups):
    results = {}
    for name, oracle in (
        ("euclidean-quadratic",
         lambda s, t: s.space.point(
             np.asarray(s.x0.coords) * math.exp(-t))),
        ("sphere-quadratic",
         lambda s, t: s.space.geodesic_point(
             s.f.anchor, s.x0, math.exp(-t))),
    ):
        s = setups[name]
        sups = []
        for mesh in MESH_LADDER:
            sol = pf.run_scheme(s.f, s.space, s.x0,
                                pf.Partition.with_mesh(1.0, mesh))
            worst = 0.0
            for k in range(1, sol.n_steps + 1):
                for t in (sol.partition.times[k - 1], sol.partition.times[k]):
                    d = s.space.distance(sol.point(k), oracle(s, float(t)))
                    worst = max(worst, d)
            sups.append(worst)
        mono = all(b < a for a, b in zip(sups, sups[1:]))
        order = float(np.polyfit(np.log(MESH_LADDER), np.log(sups), 1)[0])
        results[name] = (mono, order)
        assert mono, (name, sups)
        assert order >= 0.5, (name, order)
    assert results["euclidean-quadratic"][1] >= 0.9
    emit(5, "scheme converges monotonically with fitted order >= 1/2",
         True, ", ".join(f"{k}: order {v[1]:.2f}" for k, v in results.items()))


def test_criterion_06_error_bound(setups):
    flagged = []
    for s in setups.values():
        fc = pf.converge_flow(s.f, s.space, s.x0, s.T, MESH_LADDER)
        for mesh in MESH_LADDER[:-1]:
            sol = pf.run_scheme(s.f, s.space, s.x0,
                                pf.Partition.with_mesh(s.T, mesh))
            rep = pf.error_bound_check(sol, fc, s.working_K)
            assert rep.ok, (s.name, mesh, rep.worst_margin)
            if rep.lam_clamped:
                flagged.append(s.name)
    flagged = sorted(set(flagged))
    emit(6, "mesh-level error bound at all grid times",
         flagged == ["euclidean-quadratic", "sphere-quadratic"],
         f"positive moduli clamped and flagged for {flagged}")


def test_criterion_07_contraction(setups):
    # (a) ten random pairs per scenario with the 3 * (Cauchy gap) budget
    for name in ("euclidean-quadratic", "sphere-quadratic"):
        s = setups[name]
        rng = np.random.default_rng(707)
        lam = s.f.lam
        for _ in range(10):
            x0, y0 = s.sample(rng), s.sample(rng)
            d0 = s.space.distance(x0, y0)
            meshes = [4e-3, 2e-3, 1e-3]
            fa = pf.converge_flow(s.f, s.space, x0, s.T, meshes)
            fb = pf.converge_flow(s.f, s.space, y0, s.T, meshes)
            gap = fa.cauchy_gap + fb.cauchy_gap
            if d0 <= 1e-12:
                continue
            for i in range(1, len(fa.times)):
                t = fa.times[i]
                env = math.exp(-lam * t) * d0
                ratio = s.space.distance(fa.point(i), fb.point(i)) / env
                assert ratio <= 1.0 + 3.0 * gap / env, (name, t, ratio)
    # (b) the Euclidean quadratic reaches the envelope within 1e-6
    s = setups["euclidean-quadratic"]
    x0, y0 = s.space.point([1.0, 0.5]), s.space.point([-0.4, 0.2])
    meshes = [8e-6, 4e-6, 2e-6]
    fa = pf.converge_flow(s.f, s.space, x0, 0.5, meshes)
    fb = pf.converge_flow(s.f, s.space, y0, 0.5, meshes)
    d0 = s.space.distance(x0, y0)
    diff = fa.coords - fb.coords
    dists = np.sqrt(np.sum(diff * diff, axis=1))
    env = np.exp(-fa.times[1:]) * d0
    dev = float(np.max(np.abs(dists[1:] / env - 1.0)))
    emit(7, "contraction ratio within budget; quadratic ratio = 1 +- 1e-6",
         dev <= 1e-6, f"quadratic |ratio - 1| <= {dev:.3e}")


def test_criterion_08_evi_and_dissipation(setups):
    # EVI residuals on 100 admissible samples per scenario
    for s in setups.values():
        rng = np.random.default_rng(808)
        fc = pf.flow(s.f, s.space, s.x0, s.T, tolerance=2e-4)
        done = 0
        while done < 100:
            t = float(rng.uniform(0.05 * s.T, 0.7 * s.T))
            y = s.sample(rng)
            rep = pf.evi_check(fc, s.f, y, [t])
            if not rep.times:
                continue
            done += 1
            assert rep.ok, (s.name, t, rep.residuals, rep.tolerances)
    # dissipation residual shrinks along the mesh ladder, order recorded
    orders = {}
    for name in ("euclidean-quadratic", "tree-distance"):
        s = setups[name]
        rng = np.random.default_rng(809)
        residuals = []
        meshes = MESH_LADDER[:5]
        prev = None
        for mesh in meshes:
            sol = pf.run_scheme(s.f, s.space, s.x0,
                                pf.Partition.with_mesh(s.T, mesh))
            gap = _sup_gap(s.space, prev, sol) if prev is not None else math.inf
            fc = pf.FlowCurve(s.space, s.f, sol.partition.times, sol.coords,
                              sol.energies, [mesh], [gap] if prev else [])
            rep = pf.dissipation_check(fc, s.f, 0.2 * s.T, 0.9 * s.T, rng=rng)
            residuals.append(rep.residual)
            prev = sol
        assert residuals[-1] <= 0.5 * residuals[0] + 1e-12, (name, residuals)
        if residuals[-1] <= 1e-12:
            orders[name] = "exact at floor"
        else:
            orders[name] = "order %.2f" % float(
                np.polyfit(np.log(meshes), np.log(residuals), 1)[0]
            )
    emit(8, "EVI on 100 samples per scenario; dissipation residual -> 0",
         True, ", ".join(f"{k}: {v}" for k, v in orders.items()))


def test_criterion_09_stationary(setups):
    for s in setups.values():
        rng = np.random.default_rng(909)
        anchors = list(s.f.anchors())
        pts = list(anchors)
        while len(pts) < 50:
            p = s.sample(rng)
            if all(s.space.distance(p, a) >= 0.05 for a in anchors):
                pts.append(p)
        for p in pts:
            rep = pf.stationary_check(s.f, s.space, p, 0.4, slope_tol=1e-3,
                                      flow_tolerance=5e-4, rng=rng)
            assert rep.ok, (s.name, p, rep)
    emit(9, "stationary-point predicates agree on 50 points per scenario",
         True, "slope, flow and quotient predicates agree on all samples")


def test_criterion_10_trotter_kato():
    plane = pf.Euclidean(2)
    ball = pf.Ball(plane.point([0.25, 0.0]), 4.0)
    f1 = pf.HalfSqDist(plane, plane.point([0.0, 0.0]), region=ball)
    f2 = pf.HalfSqDist(plane, plane.point([0.5, 0.0]), region=ball)
    z0 = plane.point([0.5, 0.75])
    rep = pf.tk_convergence(f1, f2, plane, z0, 1.0, MESH_LADDER,
                            bounding_ball=ball)
    assert rep.ok
    assert rep.sup_errors[-1] <= 1e-3, rep.sup_errors
    # the reference flow approaches the analytic limit m + e^{-2t} (z0 - m)
    m = np.array([0.25, 0.0])
    expected = m + math.exp(-2.0) * (np.asarray(z0.coords) - m)
    got = np.asarray(rep.reference.at(1.0).coords)
    assert np.linalg.norm(got - expected) <= 5e-4

    tree = pf.StarTree([2.0, 2.0, 2.0])
    g1 = pf.DistTo(tree, tree.point(0, 2.0))
    g2 = pf.DistTo(tree, tree.point(1, 2.0))
    worst_total = 0.0
    for mesh in MESH_LADDER:
        scheme = pf.run_split(g1, g2, tree, tree.point(2, 1.5),
                              pf.Partition.with_mesh(1.0, mesh))
        drep = pf.delta_budget(scheme, 1.0, 1.0, 1.0)
        assert drep.ok
        assert drep.total_delta <= 2.0 * 1.0**2 * 1.0
        worst_total = max(worst_total, drep.total_delta)
    emit(10, "splitting converges below 1e-3; Lipschitz delta budget holds",
         True, f"final sup {rep.sup_errors[-1]:.3e}, "
               f"tree budget {worst_total:.3e} <= 2")


def test_criterion_11_split_key_estimate():
    plane = pf.Euclidean(2)
    ball = pf.Ball(plane.point([0.25, 0.0]), 4.0)
    scenarios = []
    f1 = pf.HalfSqDist(plane, plane.point([0.0, 0.0]), region=ball)
    f2 = pf.HalfSqDist(plane, plane.point([0.5, 0.0]), region=ball)
    scenarios.append(("two-quadratics", plane, f1, f2, plane.point([0.5, 0.75]),
                      ball, lambda rng: plane.random_point_in_ball(
                          ball.center, 2.0, rng)))
    tree = pf.StarTree([2.0, 2.0, 2.0])
    g1 = pf.DistTo(tree, tree.point(0, 2.0))
    g2 = pf.DistTo(tree, tree.point(1, 2.0))
    scenarios.append(("tree-lipschitz", tree, g1, g2, tree.point(2, 1.5),
                      None, lambda rng: tree.random_point(rng)))
    worst_all = -math.inf
    for name, space, fa, fb, z0, bb, sample in scenarios:
        rng = np.random.default_rng(1111)
        scheme = pf.run_split(fa, fb, space, z0,
                              pf.Partition.with_mesh(1.0, 0.05),
                              bounding_ball=bb)
        ws = [sample(rng) for _ in range(20)]
        worst = -math.inf
        for k in range(1, scheme.n_steps + 1):
            for w in ws:
                worst = max(worst,
                            pf.split_key_estimate_check(scheme, w, k, K=2.0))
        assert worst <= 1e-8, (name, worst)
        worst_all = max(worst_all, worst)
    emit(11, "exact splitting inequality on all steps x 20 test points",
         worst_all <= 1e-8, f"worst residual {worst_all:.3e} <= 1e-8")


def test_criterion_12_ball_chained():
    sphere = pf.Sphere(2)
    pole = sphere.point([0.0, 0.0, 1.0])
    f = pf.HalfSqDist(sphere, pole, region=pf.Ball(pole, 1.35))
    x0 = sphere.geodesic_point(pole, sphere.point([1.0, 0.0, 0.0]),
                               (2 * PI / 5) / (PI / 2))
    chained = pf.flow_ball_chained(f, sphere, x0, 1.0, tolerance=5e-4)
    direct = pf.flow(f, sphere, x0, 1.0, tolerance=5e-4)
    tol = budget(chained, direct)
    worst = max(
        sphere.distance(chained.point(i), direct.at(float(t)))
        for i, t in enumerate(chained.times)
    )
    assert worst <= tol, (worst, tol)
    assert len(chained.legs) >= 2
    C = max(leg.C_empirical for leg in chained.legs)
    min_dur = (PI / 6) ** 2 / (2.0 * C)
    durations = [leg.t_end - leg.t_start for leg in chained.legs[:-1]]
    assert all(d >= min_dur for d in durations), (durations, min_dur)
    emit(12, "ball-chained flow agrees with the direct flow; legs long enough",
         True, f"gap {worst:.3e} <= {tol:.3e}, "
               f"{len(chained.legs)} legs, min duration bound {min_dur:.3f}")
