"""Scenario harness and CLI: configs, determinism, reports, exit codes."""

import json

import pytest
import yaml

from proxflow.cli import main
from proxflow.errors import ConfigError
from proxflow.harness import SUITES, list_suites, load_scenario, run_scenario

MINI = {
    "schema": "proxflow.scenario/1",
    "id": "mini",
    "seed": 3,
    "space": {"kind": "euclidean", "dimension": 2},
    "functional": {
        "kind": "half_sqdist",
        "anchor": [0.0, 0.0],
        "region": {"center": [0.0, 0.0], "radius": 2.0},
    },
    "initial_point": [1.0, 0.5],
    "horizon": 0.5,
    "mesh_ladder": [0.1, 0.05, 0.025],
    "oracle": "exp_quadratic",
    "samples": {
        "commutativity": 30,
        "key_estimate": 40,
        "cat1": 15,
        "lambda_triples": 30,
        "evi_times": 5,
        "evi_test_points": 4,
        "evi_samples": 6,
        "stationary_points": 4,
        "contraction_pairs": 2,
        "integrated_evi_samples": 2,
        "convexity_geodesics": 30,
    },
    "suites": ["commutativity", "key_estimate", "apriori", "discrete_evi",
               "convergence", "contraction", "evi", "stationary"],
}


@pytest.fixture
def mini_config(tmp_path):
    path = tmp_path / "mini.yaml"
    path.write_text(yaml.safe_dump(MINI))
    return path


class TestConfig:
    def test_missing_field(self, tmp_path):
        bad = dict(MINI)
        del bad["horizon"]
        p = tmp_path / "bad.yaml"
        p.write_text(yaml.safe_dump(bad))
        with pytest.raises(ConfigError) as err:
            load_scenario(str(p))
        assert "horizon" in str(err.value)

    def test_bad_field_reports_path(self, tmp_path):
        bad = dict(MINI, horizon=-1.0)
        p = tmp_path / "bad.yaml"
        p.write_text(yaml.safe_dump(bad))
        with pytest.raises(ConfigError) as err:
            load_scenario(str(p))
        assert "horizon" in str(err.value)

    def test_unknown_suite(self, tmp_path):
        bad = dict(MINI, suites=["no_such_suite"])
        p = tmp_path / "bad.yaml"
        p.write_text(yaml.safe_dump(bad))
        with pytest.raises(ConfigError):
            run_scenario(str(p))

    def test_functional_exclusivity(self, tmp_path):
        bad = dict(MINI)
        bad["functionals"] = [bad["functional"], bad["functional"]]
        p = tmp_path / "bad.yaml"
        p.write_text(yaml.safe_dump(bad))
        with pytest.raises(ConfigError):
            load_scenario(str(p))

    def test_unparseable(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("{: not yaml :")
        with pytest.raises(ConfigError):
            load_scenario(str(p))


class TestRunScenario:
    def test_mini_passes(self, mini_config, tmp_path):
        report, code = run_scenario(str(mini_config), out_dir=str(tmp_path / "out"))
        assert code == 0
        assert all(c["status"] == "pass" for c in report["checks"])
        out = tmp_path / "out" / "mini.report.json"
        assert out.exists()
        data = json.loads(out.read_text())
        assert data["schema"] == "proxflow.report/1"
        # the convergence suite writes a mesh/error table
        assert (tmp_path / "out" / "mini.convergence.table.txt").exists()

    def test_byte_determinism(self, mini_config, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        run_scenario(str(mini_config), out_dir=str(d1))
        run_scenario(str(mini_config), out_dir=str(d2))
        assert (d1 / "mini.report.json").read_bytes() == (
            d2 / "mini.report.json"
        ).read_bytes()

    def test_seed_override_changes_samples(self, mini_config, tmp_path):
        r1, _ = run_scenario(str(mini_config))
        r2, _ = run_scenario(str(mini_config), seed=99)
        assert r1["seed"] != r2["seed"]

    def test_statement_labels_present(self, mini_config):
        report, _ = run_scenario(str(mini_config))
        for c in report["checks"]:
            assert c["statement"] == SUITES[c["name"]]["statement"]
            assert c["statement"]


class TestListSuites:
    def test_catalog_contains_core_suites(self):
        text = list_suites()
        for name in ("key_estimate", "discrete_evi", "contraction", "evi",
                     "dissipation", "stationary", "tk_convergence"):
            assert name in text

    def test_module_filter(self):
        text = list_suites("splitting")
        assert "tk_convergence" in text
        assert "commutativity" not in text

    def test_unknown_filter_warns(self):
        assert "warning" in list_suites("nonexistent")


class TestCli:
    def test_list(self, capsys):
        assert main(["list"]) == 0
        assert "key_estimate" in capsys.readouterr().out

    def test_list_module_filter(self, capsys):
        assert main(["list", "--module", "flow"]) == 0
        out = capsys.readouterr().out
        assert "contraction" in out and "tk_convergence" not in out

    def test_run_and_exit_code(self, mini_config, tmp_path, capsys):
        code = main(["run", str(mini_config), "--out", str(tmp_path / "o")])
        assert code == 0
        assert "mini" in capsys.readouterr().out
        assert (tmp_path / "o" / "mini.report.json").exists()

    def test_config_error_exit_2(self, tmp_path, capsys):
        p = tmp_path / "bad.yaml"
        p.write_text("schema: wrong")
        assert main(["run", str(p)]) == 2

    def test_verify_all(self, mini_config, tmp_path, capsys):
        assert main(["verify-all", str(mini_config.parent),
                     "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "mini.report.json").exists()

    def test_verify_all_empty_dir(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["verify-all", str(empty)]) == 2

    def test_tol_scale_flag(self, mini_config):
        assert main(["run", str(mini_config), "--tol-scale", "10.0"]) == 0
