"""Discrete solutions, interpolants, a priori bounds, comparison, convergence."""

import json
import math

import numpy as np
import pytest

import proxflow as pf
from proxflow.errors import UsageError


def quad(space, anchor_coords=(0.0,)):
    return pf.HalfSqDist(space, space.point(list(anchor_coords)))


class TestPartition:
    def test_uniform(self):
        part = pf.Partition.uniform(1.0, 4)
        np.testing.assert_allclose(part.times, [0, 0.25, 0.5, 0.75, 1.0])
        assert part.mesh == 0.25
        assert part.n_steps == 4

    def test_with_mesh_rounds_up(self):
        part = pf.Partition.with_mesh(1.0, 0.3)
        assert part.n_steps == 4
        assert part.mesh <= 0.3 + 1e-12

    def test_halved(self):
        part = pf.Partition.uniform(1.0, 2).halved()
        np.testing.assert_allclose(part.times, [0, 0.25, 0.5, 0.75, 1.0])

    def test_step_index(self):
        part = pf.Partition.uniform(1.0, 4)
        assert part.step_index(0.0) == 0
        assert part.step_index(0.25) == 1
        assert part.step_index(0.250001) == 2
        assert part.step_index(1.0) == 4
        with pytest.raises(UsageError):
            part.step_index(1.5)

    def test_validation(self):
        with pytest.raises(UsageError):
            pf.Partition(np.array([0.0, 0.5, 0.5]))
        with pytest.raises(UsageError):
            pf.Partition(np.array([0.1, 0.5]))


class TestRunScheme:
    def test_quadratic_closed_form_iterates(self, line):
        f = quad(line)
        sol = pf.run_scheme(f, line, line.point([1.0]), pf.Partition.uniform(0.3, 3))
        assert sol.coords[3, 0] == pytest.approx(1 / 1.1**3, abs=1e-12)
        assert np.all(np.diff(sol.energies) <= 1e-12)

    def test_distance_hits_and_stays(self, line):
        f = pf.DistTo(line, line.point([0.0]))
        sol = pf.run_scheme(f, line, line.point([1.0]), pf.Partition.uniform(1.6, 4))
        np.testing.assert_allclose(sol.coords[:, 0], [1.0, 0.6, 0.2, 0.0, 0.0],
                                   atol=1e-12)

    def test_sphere_single_step_arc(self, sphere):
        anchor = sphere.point([0, 0, 1])
        f = pf.HalfSqDist(sphere, anchor, region=pf.Ball(anchor, math.pi / 3))
        x0 = sphere.geodesic_point(anchor, sphere.point([1, 0, 0]),
                                   1.0 / (math.pi / 2))
        sol = pf.run_scheme(f, sphere, x0, pf.Partition.uniform(0.5, 1))
        d = sphere.distance(sol.point(1), anchor)
        assert d == pytest.approx(1 / 1.5, abs=1e-10)

    def test_per_step_descent_inequality(self, plane, rng):
        f = quad(plane, (0.0, 0.0))
        sol = pf.run_scheme(f, plane, plane.point(rng.normal(size=2)),
                            pf.Partition.uniform(1.0, 17))
        taus = sol.partition.taus
        drops = sol.energies[:-1] - sol.energies[1:]
        assert np.all(sol.displacements**2 <= 2 * taus * drops + 1e-9)

    def test_domain_and_mesh_preconditions(self, plane):
        p = plane.point([0, 0])
        f = pf.CustomFunctional(
            plane, lambda x: -0.5 * plane.distance(p, x) ** 2, lam=-1.0
        )
        with pytest.raises(UsageError):
            pf.run_scheme(f, plane, plane.point([1, 1]),
                          pf.Partition.uniform(4.0, 2))


class TestApriori:
    def test_quadratic_run(self, line):
        f = quad(line)
        sol = pf.run_scheme(f, line, line.point([1.0]), pf.Partition.uniform(0.3, 3))
        rep = pf.apriori_check(sol, line.point([0.0]))
        assert rep.ok
        assert rep.worst_sum_slack <= 1e-9

    def test_stationary_start_all_zero(self, line):
        f = quad(line)
        sol = pf.run_scheme(f, line, line.point([0.0]), pf.Partition.uniform(0.5, 5))
        rep = pf.apriori_check(sol, line.point([0.0]))
        assert rep.ok
        assert np.all(sol.displacements == 0)

    def test_distance_run_arithmetic(self, line):
        f = pf.DistTo(line, line.point([0.0]))
        sol = pf.run_scheme(f, line, line.point([1.0]), pf.Partition.uniform(1.2, 3))
        halfsum = float(np.sum(sol.displacements**2 / (2 * sol.partition.taus)))
        assert halfsum == pytest.approx(0.45, abs=1e-12)
        drop = sol.energies[0] - sol.energies[-1]
        assert drop == pytest.approx(1.0, abs=1e-12)
        assert pf.apriori_check(sol, line.point([0.0])).ok


class TestInterpolants:
    @pytest.fixture
    def sol(self, line):
        return pf.run_scheme(quad(line), line, line.point([1.0]),
                             pf.Partition.uniform(0.5, 5))

    def test_squared_interpolant_exact_at_grid(self, sol, line):
        y = line.point([0.25])
        bundle = pf.interpolate(sol, y, K=2.0)
        for k, t in enumerate(sol.partition.times):
            d = line.distance(sol.point(k), y)
            assert bundle.d_bar2(float(t)) == pytest.approx(d * d, abs=1e-14)

    def test_residual_formula_flat_K(self, sol):
        bundle = pf.interpolate(sol, sol.space.point([0.0]), K=2.0)
        t = 0.17
        k = sol.partition.step_index(t)
        tk = sol.partition.times[k]
        tau = sol.partition.taus[k - 1]
        drop = sol.energies[k - 1] - sol.energies[k]
        assert bundle.residual_R(t) == pytest.approx((tk - t) / tau * drop, rel=1e-12)
        # max(0, -K) vanishes for K = 2, appears for negative K
        bundle_neg = pf.interpolate(sol, sol.space.point([0.0]), K=-1.0)
        assert bundle_neg.residual_R(t) == pytest.approx(
            ((tk - t) / tau + 0.5) * drop, rel=1e-12
        )

    def test_step_integral_of_residual(self, sol):
        for K in (2.0, -1.0):
            Kp = min(0.0, K)
            for k in range(1, sol.n_steps + 1):
                tau = sol.partition.taus[k - 1]
                drop = sol.energies[k - 1] - sol.energies[k]
                assert sol.integral_R_step(k, K) == pytest.approx(
                    (0.5 - Kp / 2) * tau * drop, rel=1e-12
                )

    def test_deviation_vanishes_at_grid(self, sol):
        for t in sol.partition.times[1:]:
            assert sol.deviation_D(float(t)) == pytest.approx(0.0, abs=1e-14)

    def test_energy_interpolant_monotone(self, sol):
        ts = np.linspace(0, sol.partition.horizon, 101)
        vals = [sol.phi_bar(float(t)) for t in ts]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


class TestDiscreteEvi:
    def test_quadratic_midstep_nonpositive(self, line):
        f = quad(line)
        sol = pf.run_scheme(f, line, line.point([1.0]), pf.Partition.uniform(0.5, 5))
        y = line.point([0.0])
        for t in (0.05, 0.17, 0.33, 0.46):
            assert pf.discrete_evi_residual(sol, y, t, f.lam, 2.0) <= 1e-12

    def test_current_point_as_test_point(self, line):
        f = quad(line)
        sol = pf.run_scheme(f, line, line.point([1.0]), pf.Partition.uniform(0.5, 5))
        for k in (1, 3, 5):
            y = sol.point(k)
            t = float(sol.partition.times[k]) - 1e-3
            assert pf.discrete_evi_residual(sol, y, t, f.lam, 2.0) <= 1e-12

    def test_flat_step_at_minimizer(self, line):
        f = pf.DistTo(line, line.point([0.0]))  # lam = 0
        sol = pf.run_scheme(f, line, line.point([0.0]), pf.Partition.uniform(0.5, 2))
        y = line.point([0.0])
        r = pf.discrete_evi_residual(sol, y, 0.3, f.lam, 2.0)
        assert r == pytest.approx(0.0, abs=1e-14)


class TestCompareSolutions:
    def test_identical_runs(self, line):
        f = quad(line)
        sol = pf.run_scheme(f, line, line.point([1.0]), pf.Partition.uniform(1.0, 10))
        rep = pf.compare_solutions(sol, sol, K=2.0)
        assert rep.ok and rep.lam_clamped  # lam = 1 clamped to 0, flagged

    def test_two_meshes(self, line):
        f = quad(line)
        a = pf.run_scheme(f, line, line.point([1.0]), pf.Partition.with_mesh(1.0, 0.1))
        b = pf.run_scheme(f, line, line.point([1.0]), pf.Partition.with_mesh(1.0, 0.05))
        rep = pf.compare_solutions(a, b, K=2.0)
        assert rep.ok

    def test_refinement_by_halving(self, tree):
        f = pf.DistTo(tree, tree.point(0, 0.0))
        part = pf.Partition.uniform(1.5, 8)
        a = pf.run_scheme(f, tree, tree.point(1, 2.0), part)
        b = pf.run_scheme(f, tree, tree.point(1, 2.0), part.halved())
        rep = pf.compare_solutions(a, b, K=2.0)
        assert rep.ok and not rep.lam_clamped

    def test_bound_vanishes_at_sqrt_rate(self, line):
        f = quad(line)
        x0 = line.point([1.0])
        bounds = []
        meshes = [0.1 * 2**-j for j in range(5)]
        for m in meshes:
            a = pf.run_scheme(f, line, x0, pf.Partition.with_mesh(1.0, m))
            b = pf.run_scheme(f, line, x0, pf.Partition.with_mesh(1.0, m / 2))
            rep = pf.compare_solutions(a, b, K=2.0)
            bounds.append(rep.bounds[-1])
        coef = np.polyfit(np.log(meshes), np.log(bounds), 1)
        assert coef[0] >= 0.45
        assert bounds[-1] < bounds[0]


class TestConvergeFlow:
    def test_euclidean_quadratic_first_order(self, line):
        f = quad(line)
        x0 = line.point([1.0])
        meshes = [0.1 * 2**-j for j in range(5)]
        sups = []
        for m in meshes:
            sol = pf.run_scheme(f, line, x0, pf.Partition.with_mesh(1.0, m))
            worst = max(
                abs(sol.coords[k, 0] - math.exp(-t))
                for k in range(1, sol.n_steps + 1)
                for t in (sol.partition.times[k - 1], sol.partition.times[k])
            )
            sups.append(worst)
        order = np.polyfit(np.log(meshes), np.log(sups), 1)[0]
        assert all(b < a for a, b in zip(sups, sups[1:]))
        assert order >= 0.9

    def test_flow_curve_metadata(self, line):
        f = quad(line)
        fc = pf.converge_flow(f, line, line.point([1.0]), 1.0,
                              [0.1, 0.05, 0.025])
        assert fc.mesh_ladder == (0.1, 0.05, 0.025)
        assert len(fc.gaps) == 2
        assert fc.gaps[1] < fc.gaps[0]
        assert fc.cauchy_gap == fc.gaps[-1]

    def test_gap_decay_rate_at_least_half(self, line):
        f = quad(line)
        fc = pf.converge_flow(f, line, line.point([1.0]), 1.0,
                              [0.1 * 2**-j for j in range(5)])
        order = np.polyfit(np.log(fc.mesh_ladder[1:]), np.log(fc.gaps), 1)[0]
        assert order >= 0.5

    def test_sphere_radial_matches_ode(self, sphere):
        anchor = sphere.point([0, 0, 1])
        f = pf.HalfSqDist(sphere, anchor, region=pf.Ball(anchor, math.pi / 3))
        x0 = sphere.geodesic_point(anchor, sphere.point([1, 0, 0]),
                                   1.0 / (math.pi / 2))
        sups = []
        meshes = [0.05, 0.025, 0.0125]
        for m in meshes:
            sol = pf.run_scheme(f, sphere, x0, pf.Partition.with_mesh(1.0, m))
            worst = 0.0
            for k in range(1, sol.n_steps + 1):
                t = sol.partition.times[k]
                r = sphere.distance(sol.point(k), anchor)
                worst = max(worst, abs(r - math.exp(-t)))
            sups.append(worst)
        assert sups[-1] < sups[0]
        assert sups[-1] <= 20.0 * meshes[-1]

    def test_tree_distance_exact(self, tree):
        f = pf.DistTo(tree, tree.point(0, 0.0))
        fc = pf.converge_flow(f, tree, tree.point(1, 2.0), 3.0, [0.1, 0.05])
        for i, t in enumerate(fc.times):
            expected = max(2.0 - t, 0.0)
            assert fc.coords[i, 1] == pytest.approx(expected, abs=1e-12)

    def test_mesh_sequence_validation(self, line):
        f = quad(line)
        with pytest.raises(UsageError):
            pf.converge_flow(f, line, line.point([1.0]), 1.0, [0.1])
        with pytest.raises(UsageError):
            pf.converge_flow(f, line, line.point([1.0]), 1.0, [0.05, 0.1])


class TestErrorBound:
    def test_quadratic_lam_clamped(self, line):
        f = quad(line)
        fc = pf.converge_flow(f, line, line.point([1.0]), 1.0,
                              [0.1 * 2**-j for j in range(5)])
        sol = pf.run_scheme(f, line, line.point([1.0]),
                            pf.Partition.with_mesh(1.0, 0.1))
        rep = pf.error_bound_check(sol, fc, K=2.0)
        assert rep.ok and rep.lam_clamped

    def test_zero_lam_distance_potential(self, tree):
        f = pf.DistTo(tree, tree.point(0, 0.0))
        fc = pf.converge_flow(f, tree, tree.point(1, 2.0), 1.5,
                              [0.1 * 2**-j for j in range(4)])
        sol = pf.run_scheme(f, tree, tree.point(1, 2.0),
                            pf.Partition.with_mesh(1.5, 0.05))
        rep = pf.error_bound_check(sol, fc, K=2.0)
        assert rep.ok and not rep.lam_clamped

    def test_stationary_zero_both_sides(self, line):
        f = quad(line)
        fc = pf.converge_flow(f, line, line.point([0.0]), 1.0, [0.1, 0.05])
        sol = pf.run_scheme(f, line, line.point([0.0]),
                            pf.Partition.with_mesh(1.0, 0.1))
        rep = pf.error_bound_check(sol, fc, K=2.0)
        assert rep.ok
        assert float(np.max(rep.lhs)) == 0.0


class TestSerialization:
    def test_columnar_and_json(self, line, tmp_path):
        f = quad(line)
        sol = pf.run_scheme(f, line, line.point([1.0]), pf.Partition.uniform(0.4, 4))
        cpath = tmp_path / "sol.txt"
        jpath = tmp_path / "sol.json"
        sol.write_columnar(cpath)
        sol.write_json(jpath)
        lines = cpath.read_text().splitlines()
        assert lines[0].startswith("# proxflow.solution/1")
        assert len(lines) == 2 + 5  # header + rows
        data = json.loads(jpath.read_text())
        assert data["schema"] == "proxflow.solution/1"
        assert len(data["times"]) == 5
        # byte determinism of a repeated identical run
        sol2 = pf.run_scheme(f, line, line.point([1.0]), pf.Partition.uniform(0.4, 4))
        jpath2 = tmp_path / "sol2.json"
        sol2.write_json(jpath2)
        assert jpath.read_bytes() == jpath2.read_bytes()

    def test_flow_serialization(self, line, tmp_path):
        f = quad(line)
        fc = pf.converge_flow(f, line, line.point([1.0]), 0.5, [0.1, 0.05])
        fc.write_json(tmp_path / "flow.json")
        fc.write_columnar(tmp_path / "flow.txt")
        data = json.loads((tmp_path / "flow.json").read_text())
        assert data["schema"] == "proxflow.flow/1"
        assert data["mesh_ladder"] == [0.1, 0.05]
