from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from beliefplan.cli_io import (
    Scenario,
    ScenarioError,
    compare_runs,
    load_scenario,
    main,
    resolve_landmarks,
    run_experiment,
    scenario_from_dict,
)

import scenario_factory

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "beliefplan" / "scenarios"


def small_overrides(**kw) -> dict:
    base = {
        "landmarks": {"random": {"count": 3, "region": [[1.5, 4.0], [1.5, 4.0]]}},
        "preliminary_actions": scenario_factory.sweep_actions(),
        "prm": {"n_vertices": 40, "connect_radius": 1.4, "path_count": 4, "goal": [4.5, 0.5]},
        "planner": {"m": 20, "epsilon": 0.25},
        "seed": 5,
    }
    for key, value in kw.items():
        node = base
        *parents, last = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[last] = value
    return base


class TestLoadScenario:
    def test_empty_file_gives_benchmark_defaults(self, tmp_path):
        f = tmp_path / "empty.yaml"
        f.write_text("")
        s = load_scenario(f)
        assert s.bounds == ((0.0, 5.0), (0.0, 5.0))
        assert s.visibility_radius == 0.8
        assert np.allclose(np.diag(s.noise.motion_base), 0.015)
        assert np.allclose(np.diag(s.noise.obs_cov), 0.001)
        assert np.allclose(s.prior_mean, 0.0)
        assert np.allclose(np.diag(s.prior_cov), 0.001)
        assert s.landmark_region == ((2.0, 5.0), (2.0, 5.0))
        assert s.m == 300
        assert s.precision_rel == 1e-6
        assert s.gamma == 1.0

    def test_epsilon_one_rejected(self, tmp_path):
        f = tmp_path / "bad.yaml"
        f.write_text("planner:\n  epsilon: 1.0\n")
        with pytest.raises(ScenarioError, match="epsilon"):
            load_scenario(f)

    def test_unknown_key_rejected(self, tmp_path):
        f = tmp_path / "bad.yaml"
        f.write_text("plannerr:\n  m: 5\n")
        with pytest.raises(ScenarioError, match="plannerr"):
            load_scenario(f)

    def test_non_pd_prior_rejected(self):
        with pytest.raises(ScenarioError, match="cov_diag"):
            scenario_from_dict({"prior": {"cov_diag": [0.0, 1.0, 1.0]}})

    def test_explicit_landmark_layout(self):
        s = scenario_from_dict({"landmarks": {"positions": [[2, 2], [3, 3], [4, 4], [2, 4]]}})
        lms = resolve_landmarks(s)
        assert [lm.id for lm in lms] == [1, 2, 3, 4]
        assert np.allclose(lms[1].position, [3, 3])

    def test_bundled_scenarios_parse(self):
        for name in ("default.yaml", "sv_style.yaml", "no_landmarks.yaml"):
            s = load_scenario(SCENARIOS / name)
            assert isinstance(s, Scenario)

    def test_random_landmarks_deterministic_per_seed(self):
        s = scenario_from_dict({"seed": 9})
        a = resolve_landmarks(s)
        b = resolve_landmarks(s)
        assert all(np.array_equal(x.position, y.position) for x, y in zip(a, b))
        (xlo, xhi), (ylo, yhi) = s.landmark_region
        for lm in a:
            assert xlo <= lm.position[0] <= xhi and ylo <= lm.position[1] <= yhi


def _strip_times(payload: dict) -> dict:
    payload = json.loads(json.dumps(payload))
    payload["totals"].pop("planning_time_mean_s")
    for rec in payload["per_action"]:
        rec.pop("wall_time_s")
    return payload


def _read_csv_without_time_columns(path: Path) -> str:
    text = path.read_text()
    lines = text.strip().split("\n")
    header = lines[0].split(",")
    keep = [i for i, h in enumerate(header) if "time" not in h]
    return "\n".join(",".join(line.split(",")[i] for i in keep) for line in lines)


RUN_FILES = ["results.json", "metrics.csv", "laces.csv", "bounds.csv",
             "beliefs.csv", "paths.csv", "prm.csv", "scenario_resolved.yaml"]


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    scenario = scenario_from_dict(small_overrides())
    codes = {}
    for alg in ("alg1", "alg2"):
        codes[alg] = run_experiment(scenario, alg, root / alg)
    return root, codes


class TestRunExperiment:
    def test_run_directory_complete(self, runs):
        root, codes = runs
        for alg in ("alg1", "alg2"):
            assert codes[alg] in (0, 2)
            for name in RUN_FILES:
                assert (root / alg / name).exists(), name

    def test_alg1_alg2_same_choice(self, runs):
        root, _ = runs
        a = json.loads((root / "alg1" / "results.json").read_text())
        b = json.loads((root / "alg2" / "results.json").read_text())
        assert a["chosen_path_id"] == b["chosen_path_id"]
        assert a["totals"]["n_expanded"] <= b["totals"]["n_expanded"]

    def test_compare_runs_row(self, runs):
        root, _ = runs
        row = compare_runs(root / "alg1", root / "alg2")
        assert row["same_chosen_path"] is True
        assert 0.0 <= row["laces_fraction"] <= 1.0
        assert row["speedup"] <= 1.0

    def test_compare_rejects_different_scenarios(self, runs, tmp_path):
        root, _ = runs
        other = tmp_path / "other"
        scenario = scenario_from_dict(small_overrides(seed=6))
        run_experiment(scenario, "alg2", other)
        with pytest.raises(ScenarioError):
            compare_runs(root / "alg1", other)

    def test_resolved_scenario_is_self_describing(self, runs):
        root, _ = runs
        resolved = yaml.safe_load((root / "alg1" / "scenario_resolved.yaml").read_text())
        assert len(resolved["landmarks"]["positions"]) == 3
        # Feeding the resolved scenario back reproduces the same world.
        s2 = scenario_from_dict(resolved)
        lms = resolve_landmarks(s2)
        assert len(lms) == 3

    def test_all_paths_discarded_exits_2(self, tmp_path):
        scenario = load_scenario(SCENARIOS / "no_landmarks.yaml")
        code = run_experiment(scenario, "alg1", tmp_path / "run")
        assert code == 2
        payload = json.loads((tmp_path / "run" / "results.json").read_text())
        assert payload["chosen_path_id"] is None
        assert all(rec["status"] == "infeasible" for rec in payload["per_action"])

    def test_determinism_across_reruns(self, tmp_path):
        scenario = scenario_from_dict(small_overrides())
        run_experiment(scenario, "alg1", tmp_path / "a")
        run_experiment(scenario, "alg1", tmp_path / "b")
        for name in RUN_FILES:
            pa, pb = tmp_path / "a" / name, tmp_path / "b" / name
            if name == "results.json":
                assert _strip_times(json.loads(pa.read_text())) == _strip_times(
                    json.loads(pb.read_text())
                )
            elif name.endswith(".csv"):
                assert _read_csv_without_time_columns(pa) == _read_csv_without_time_columns(pb)
            else:
                assert pa.read_text() == pb.read_text()


class TestMlDiagnostic:
    def test_recorded_for_chosen_path(self, tmp_path):
        scenario = scenario_from_dict(small_overrides())
        code = run_experiment(scenario, "alg2", tmp_path / "run")
        payload = json.loads((tmp_path / "run" / "results.json").read_text())
        if code == 0:
            assert "ml_return" in payload["diagnostics"]
            assert "expected_constraint" in payload["diagnostics"]


class TestCli:
    def test_run_and_compare_commands(self, tmp_path, capsys):
        scenario_file = tmp_path / "s.yaml"
        scenario_file.write_text(yaml.safe_dump(small_overrides()))
        code1 = main(
            ["run", "--scenario", str(scenario_file), "--algorithm", "alg1",
             "--out", str(tmp_path / "r1")]
        )
        code2 = main(
            ["run", "--scenario", str(scenario_file), "--algorithm", "alg2",
             "--out", str(tmp_path / "r2")]
        )
        assert code1 in (0, 2) and code2 in (0, 2)
        assert main(["compare", str(tmp_path / "r1"), str(tmp_path / "r2")]) == 0
        out = capsys.readouterr().out
        assert "speedup" in out

    def test_cli_overrides(self, tmp_path):
        code = main(
            ["run", "--scenario", str(SCENARIOS / "no_landmarks.yaml"),
             "--algorithm", "alg1", "--m", "10", "--epsilon", "0.5",
             "--seed", "3", "--out", str(tmp_path / "r")]
        )
        assert code == 2  # still no landmarks: everything discarded
        resolved = yaml.safe_load((tmp_path / "r" / "scenario_resolved.yaml").read_text())
        assert resolved["planner"]["m"] == 10
        assert resolved["seed"] == 3

    def test_bad_scenario_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("planner:\n  epsilon: 2.0\n")
        assert main(["run", "--scenario", str(bad), "--out", str(tmp_path / "r")]) == 1
        assert "error" in capsys.readouterr().err
