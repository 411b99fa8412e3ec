"""Scenario configuration, experiment orchestration, metrics, and file outputs.

An experiment runs in three stages: a preliminary mapping session along a
fixed action sequence (landmarks are registered on first sighting), a single
planning session over diverse roadmap paths with one of the four algorithms,
and execution of the chosen path in simulation. Every run writes a
self-describing directory: the resolved scenario plus results.json and the
CSV files consumed by the plotting component.

Exit codes: 0 success, 1 error, 2 every candidate was discarded (the
stop-exploration outcome).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import statistics
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import gaussian_belief as gb
from . import planners
from .belief_tree import ActionTree, TreeConfig
from .constraint_eval import ConstraintSpec, Form
from .path_gen import CandidatePath, RoadMap, build_prm, diverse_paths
from .sim_world import (
    Landmark,
    NoiseSpec,
    Pose,
    ml_observation,
    rng_stream,
    sample_motion,
    sample_observation,
    visible_config,
)

log = logging.getLogger(__name__)

RESULTS_SCHEMA_VERSION = 1
_FLOAT_FMT = "%.12g"

# Stream tags: keep every stochastic stage on its own named stream.
_STREAM_WORLD = 1
_STREAM_PRELIM = 2
_STREAM_PLAN = 4
_STREAM_EXEC = 5


class ScenarioError(ValueError):
    """Scenario file failed validation."""


def default_preliminary_actions() -> list[list[float]]:
    """Two concentric squares of unit-length primitives, ending at the origin."""
    actions: list[list[float]] = []
    actions += [[1.0, 0.0]] * 4 + [[0.0, 1.0]] * 4 + [[-1.0, 0.0]] * 4 + [[0.0, -1.0]] * 4
    actions += [[1.0, 0.0], [0.0, 1.0]]  # step in to the inner square at (1, 1)
    actions += [[1.0, 0.0]] * 2 + [[0.0, 1.0]] * 2 + [[-1.0, 0.0]] * 2 + [[0.0, -1.0]] * 2
    actions += [[-1.0, 0.0], [0.0, -1.0]]
    return actions


def _default_tree() -> dict:
    return {
        "map": {"bounds": [[0.0, 5.0], [0.0, 5.0]]},
        "landmarks": {
            "positions": None,
            "random": {"count": 4, "region": [[2.0, 5.0], [2.0, 5.0]]},
        },
        "visibility_radius": 0.8,
        "noise": {
            "motion_base_diag": [0.015, 0.015, 0.015],
            "obs_cov_diag": [0.001, 0.001],
        },
        "prior": {"mean": [0.0, 0.0, 0.0], "cov_diag": [0.001, 0.001, 0.001]},
        "preliminary_actions": default_preliminary_actions(),
        "prm": {
            "n_vertices": 80,
            "connect_radius": 1.2,
            "path_count": 10,
            "goal": [4.5, 4.5],
        },
        "planner": {
            "algorithm": "alg1",
            "m": 300,
            "delta": 0.0,
            "epsilon": 0.1,
            "form": "cumulative",
            "precision_rel": 1.0e-6,
            "n_obs_root": 4,
            "rho": "phi",
        },
        "seed": 0,
        "gamma": 1.0,
    }


def _merge(defaults, overrides, path: str):
    if overrides is None:
        return defaults
    if isinstance(defaults, dict):
        if not isinstance(overrides, dict):
            raise ScenarioError(f"{path or 'top level'}: expected a mapping")
        unknown = set(overrides) - set(defaults)
        if unknown:
            raise ScenarioError(f"{path or 'top level'}: unknown keys {sorted(unknown)}")
        return {
            key: _merge(defaults[key], overrides.get(key, defaults[key]), f"{path}{key}.")
            for key in defaults
        }
    return overrides


@dataclass
class Scenario:
    """Fully resolved experiment configuration (defaults follow the benchmark setup)."""

    bounds: tuple[tuple[float, float], tuple[float, float]]
    landmark_positions: list[list[float]] | None
    landmark_count: int
    landmark_region: tuple[tuple[float, float], tuple[float, float]]
    visibility_radius: float
    noise: NoiseSpec
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    preliminary_actions: np.ndarray
    prm_n_vertices: int
    prm_connect_radius: float
    prm_path_count: int
    goal: np.ndarray
    algorithm: str
    m: int
    delta: float
    epsilon: float
    form: Form
    precision_rel: float
    n_obs_root: int
    rho: str
    seed: int
    gamma: float
    raw: dict = field(repr=False, default_factory=dict)

    def fingerprint(self) -> str:
        """Hash of the resolved configuration minus the algorithm choice.

        Runs of different algorithms on the same scenario share a
        fingerprint, which is what run comparison checks.
        """
        tree = json.loads(json.dumps(self.raw))
        tree["planner"].pop("algorithm", None)
        blob = json.dumps(tree, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _validate_scenario(tree: dict) -> Scenario:
    def positive(value, key):
        if value <= 0:
            raise ScenarioError(f"{key} must be positive, got {value}")
        return value

    bounds = tree["map"]["bounds"]
    if len(bounds) != 2 or any(len(side) != 2 or side[0] >= side[1] for side in bounds):
        raise ScenarioError("map.bounds must be [[xmin, xmax], [ymin, ymax]] with min < max")

    lm = tree["landmarks"]
    positions = lm["positions"]
    if positions is not None:
        positions = [[float(x), float(y)] for x, y in positions]
    count = int(lm["random"]["count"])
    if positions is None and count < 0:
        raise ScenarioError("landmarks.random.count must be nonnegative")

    noise = NoiseSpec.from_diagonals(
        tree["noise"]["motion_base_diag"], tree["noise"]["obs_cov_diag"]
    )
    prior_cov_diag = np.asarray(tree["prior"]["cov_diag"], dtype=float)
    if prior_cov_diag.shape != (3,) or np.any(prior_cov_diag <= 0.0):
        raise ScenarioError("prior.cov_diag must be 3 positive entries")

    planner = tree["planner"]
    if planner["algorithm"] not in ("alg1", "alg2", "alg3", "alg4"):
        raise ScenarioError(f"planner.algorithm must be alg1..alg4, got {planner['algorithm']!r}")
    epsilon = float(planner["epsilon"])
    if not 0.0 <= epsilon < 1.0:
        raise ScenarioError(f"planner.epsilon must lie in [0, 1), got {epsilon}")
    try:
        form = Form(planner["form"])
    except ValueError as exc:
        raise ScenarioError(f"planner.form: {exc}") from exc
    if planner["rho"] not in ("phi", "entropy_diff"):
        raise ScenarioError(f"planner.rho must be phi or entropy_diff, got {planner['rho']!r}")

    actions = np.asarray(tree["preliminary_actions"], dtype=float)
    if actions.ndim != 2 or actions.shape[1] != 2:
        raise ScenarioError("preliminary_actions must be a list of 2-vectors")

    return Scenario(
        bounds=tuple(tuple(float(v) for v in side) for side in bounds),
        landmark_positions=positions,
        landmark_count=count,
        landmark_region=tuple(tuple(float(v) for v in side) for side in lm["random"]["region"]),
        visibility_radius=positive(float(tree["visibility_radius"]), "visibility_radius"),
        noise=noise,
        prior_mean=np.asarray(tree["prior"]["mean"], dtype=float).reshape(3),
        prior_cov=np.diag(prior_cov_diag),
        preliminary_actions=actions,
        prm_n_vertices=int(positive(tree["prm"]["n_vertices"], "prm.n_vertices")),
        prm_connect_radius=positive(float(tree["prm"]["connect_radius"]), "prm.connect_radius"),
        prm_path_count=int(positive(tree["prm"]["path_count"], "prm.path_count")),
        goal=np.asarray(tree["prm"]["goal"], dtype=float).reshape(2),
        algorithm=planner["algorithm"],
        m=int(positive(planner["m"], "planner.m")),
        delta=float(planner["delta"]),
        epsilon=epsilon,
        form=form,
        precision_rel=positive(float(planner["precision_rel"]), "planner.precision_rel"),
        n_obs_root=int(positive(planner["n_obs_root"], "planner.n_obs_root")),
        rho=planner["rho"],
        seed=int(tree["seed"]),
        gamma=float(tree["gamma"]),
        raw=tree,
    )


def scenario_from_dict(overrides: dict | None) -> Scenario:
    return _validate_scenario(_merge(_default_tree(), overrides or {}, ""))


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file; an empty file yields all defaults."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    try:
        return scenario_from_dict(data)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def resolve_landmarks(scenario: Scenario) -> list[Landmark]:
    """Materialize the ground-truth landmark set (sampling the random spec if needed)."""
    if scenario.landmark_positions is not None:
        return [
            Landmark(id=i + 1, position=np.asarray(p, dtype=float))
            for i, p in enumerate(scenario.landmark_positions)
        ]
    rng = rng_stream(scenario.seed, _STREAM_WORLD)
    (xlo, xhi), (ylo, yhi) = scenario.landmark_region
    pts = rng.uniform([xlo, ylo], [xhi, yhi], size=(scenario.landmark_count, 2))
    return [Landmark(id=i + 1, position=pts[i]) for i in range(scenario.landmark_count)]


@dataclass
class SessionLog:
    """Pose trajectory rows accumulated over a simulated session."""

    rows: list[dict] = field(default_factory=list)

    def add(self, phase: str, step: int, belief: gb.GaussianBelief, truth: Pose) -> None:
        mean, cov = gb.pose_marginal(belief)
        self.rows.append(
            {
                "phase": phase,
                "step": step,
                "est_x": mean[0],
                "est_y": mean[1],
                "est_theta": mean[2],
                "cov_xx": cov[0, 0],
                "cov_xy": cov[0, 1],
                "cov_yy": cov[1, 1],
                "true_x": truth.x,
                "true_y": truth.y,
                "true_theta": truth.theta,
            }
        )


def simulate_session(
    belief: gb.GaussianBelief,
    truth: Pose,
    actions: np.ndarray,
    landmarks: list[Landmark],
    scenario: Scenario,
    rng: np.random.Generator,
    session: SessionLog,
    phase: str,
) -> tuple[gb.GaussianBelief, Pose]:
    """Drive ground truth and inference along an action sequence."""
    positions = np.stack([lm.position for lm in landmarks]) if landmarks else np.zeros((0, 2))
    step0 = sum(1 for row in session.rows if row["phase"] == phase)
    for i, action in enumerate(actions):
        truth = sample_motion(truth, action, scenario.noise, rng)
        belief = gb.predict(belief, action, scenario.noise)
        beta = visible_config(truth, positions, scenario.visibility_radius)
        z = sample_observation(truth, positions, beta, scenario.noise, rng)
        belief = gb.update(belief, beta, z, scenario.noise, allow_new_landmarks=True)
        session.add(phase, step0 + i, belief, truth)
    return belief, truth


def ml_lace_diagnostic(
    belief: gb.GaussianBelief, path: CandidatePath, scenario: Scenario
) -> dict:
    """Constraining return of the single maximum-likelihood observation lace."""
    b = belief
    steps: list[float] = []
    for action in path.actions:
        predicted = gb.predict(b, action, scenario.noise)
        beta, z = ml_observation(b, action, scenario.visibility_radius)
        b_next = gb.update(predicted, beta, z, scenario.noise)
        steps.append(gb.det_root(gb.subset_marginal(b)) - gb.det_root(gb.subset_marginal(b_next)))
        b = b_next
    total = float(sum(steps))
    if scenario.form is Form.CUMULATIVE:
        satisfied = total >= scenario.delta
    else:
        satisfied = all(v >= scenario.delta for v in steps)
    return {"ml_return": total, "ml_satisfied": bool(satisfied)}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _FLOAT_FMT % float(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _write_run_files(
    out: Path,
    scenario: Scenario,
    result: planners.PlanResult,
    roadmap: RoadMap,
    paths: list[CandidatePath],
    trees: list[ActionTree],
    session: SessionLog,
    timings: list[float],
    diagnostics: dict,
    landmarks: list[Landmark],
) -> None:
    resolved = json.loads(json.dumps(scenario.raw))
    resolved["landmarks"]["positions"] = [[float(x), float(y)] for x, y in
                                          (lm.position for lm in landmarks)]
    (out / "scenario_resolved.yaml").write_text(yaml.safe_dump(resolved, sort_keys=True))

    _write_csv(
        out / "paths.csv",
        ["path_id", "seq_index", "vertex_id", "x", "y"],
        [
            [p.id, i, v, p.vertices[i][0], p.vertices[i][1]]
            for p in paths
            for i, v in enumerate(p.vertex_seq)
        ],
    )
    prm_rows = [["vertex", i, "", roadmap.vertices[i][0], roadmap.vertices[i][1], ""]
                for i in range(roadmap.n_vertices)]
    prm_rows += [["edge", a, b, "", "", roadmap.edge_length(a, b)] for a, b in roadmap.edges]
    _write_csv(out / "prm.csv", ["kind", "a", "b", "x", "y", "length"], prm_rows)

    lace_rows = []
    for tree in trees:
        for lace in tree.laces:
            lace_rows.append(
                [
                    tree.path_id,
                    lace.lace_id,
                    lace.s_lower,
                    lace.s_upper,
                    lace.s_exact,
                    ";".join(str(l) for l in lace.levels),
                ]
            )
    _write_csv(
        out / "laces.csv",
        ["path_id", "lace_id", "s_lower", "s_upper", "s_exact", "levels"],
        lace_rows,
    )

    bound_rows = []
    for rec in result.per_action:
        for delta, iteration, expanded, lb, ub, status in rec.trace:
            bound_rows.append([rec.path_id, delta, iteration, expanded, lb, ub, status])
    _write_csv(
        out / "bounds.csv",
        ["path_id", "delta", "iteration", "m_expanded", "lb", "ub", "status"],
        bound_rows,
    )

    _write_csv(
        out / "beliefs.csv",
        ["phase", "step", "est_x", "est_y", "est_theta",
         "cov_xx", "cov_xy", "cov_yy", "true_x", "true_y", "true_theta"],
        [[row[k] for k in ("phase", "step", "est_x", "est_y", "est_theta",
                           "cov_xx", "cov_xy", "cov_yy", "true_x", "true_y", "true_theta")]
         for row in session.rows],
    )

    fraction = planners.laces_fraction(result.n_total, result.n_expanded)
    _write_csv(
        out / "metrics.csv",
        ["algorithm", "chosen_path_id", "delta_star", "n_total", "n_expanded",
         "laces_fraction", "repeats", "planning_time_mean_s", "planning_time_std_s"],
        [[
            result.algorithm,
            result.chosen_path_id,
            result.delta_star,
            result.n_total,
            result.n_expanded,
            fraction,
            len(timings),
            statistics.fmean(timings),
            statistics.pstdev(timings) if len(timings) > 1 else 0.0,
        ]],
    )

    payload = {
        "schema_version": RESULTS_SCHEMA_VERSION,
        "scenario_fingerprint": scenario.fingerprint(),
        "seed": scenario.seed,
        "algorithm": result.algorithm,
        "chosen_path_id": result.chosen_path_id,
        "delta_star": result.delta_star,
        "per_action": [
            {
                "path_id": rec.path_id,
                "status": rec.status.value,
                "laces_expanded": rec.laces_expanded,
                "utility": rec.utility,
                "var": rec.var,
                "wall_time_s": rec.wall_time_s,
            }
            for rec in result.per_action
        ],
        "totals": {
            "n_total": result.n_total,
            "n_expanded": result.n_expanded,
            "laces_fraction": fraction,
            "planning_time_mean_s": statistics.fmean(timings),
            "repeats": len(timings),
        },
        "diagnostics": diagnostics,
    }
    (out / "results.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _run_planner(
    scenario: Scenario,
    algorithm: str,
    b_k: gb.GaussianBelief,
    paths: list[CandidatePath],
) -> tuple[planners.PlanResult, list[ActionTree]]:
    config = TreeConfig(
        noise=scenario.noise,
        visibility_radius=scenario.visibility_radius,
        n_obs_root=scenario.n_obs_root,
        seed_prefix=(scenario.seed, _STREAM_PLAN),
        rho_operator=scenario.rho,
    )
    trees = [ActionTree(path, b_k, config) for path in paths]
    if algorithm == "alg1":
        spec = ConstraintSpec(form=scenario.form, delta=scenario.delta, epsilon=scenario.epsilon)
        result = planners.alg1_adaptive_constrained(trees, spec, scenario.m)
    elif algorithm == "alg2":
        spec = ConstraintSpec(form=scenario.form, delta=scenario.delta, epsilon=scenario.epsilon)
        result = planners.alg2_baseline_constrained(trees, spec, scenario.m)
    elif algorithm in ("alg3", "alg4"):
        if algorithm == "alg3":
            delta_max = trees[0].root.droot()
            result = planners.alg3_var_bisection(
                trees, scenario.epsilon, scenario.m,
                precision=scenario.precision_rel * delta_max, form=scenario.form,
            )
        else:
            result = planners.alg4_var_bruteforce(trees, scenario.epsilon, scenario.m)
    else:
        raise ScenarioError(f"unknown algorithm {algorithm!r}")
    return result, trees


def run_experiment(
    scenario: Scenario,
    algorithm: str | None = None,
    out_dir: str | Path | None = None,
    repeats: int = 1,
) -> int:
    """Full experiment: mapping session, planning session, path execution, outputs.

    The planning session is repeated ``repeats`` times for timing statistics;
    being fully seeded, every repeat returns the identical plan. Returns the
    process exit code.
    """
    algorithm = algorithm or scenario.algorithm
    landmarks = resolve_landmarks(scenario)
    session = SessionLog()

    belief = gb.init_prior(scenario.prior_mean, scenario.prior_cov)
    truth = Pose(*scenario.prior_mean)
    belief, truth = simulate_session(
        belief, truth, scenario.preliminary_actions, landmarks, scenario,
        rng_stream(scenario.seed, _STREAM_PRELIM), session, "prelim",
    )
    log.info("preliminary mapping registered %d of %d landmarks",
             len(belief.index.landmark_ids), len(landmarks))

    start = gb.pose_marginal(belief)[0][:2]
    roadmap = build_prm(
        scenario.bounds, start, scenario.goal,
        scenario.prm_n_vertices, scenario.prm_connect_radius, scenario.seed,
    )
    paths = diverse_paths(roadmap, 0, 1, scenario.prm_path_count)

    timings: list[float] = []
    result = trees = None
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        result, trees = _run_planner(scenario, algorithm, belief, paths)
        timings.append(time.perf_counter() - t0)

    diagnostics: dict = {}
    if result.chosen_path_id is not None:
        chosen_path = next(p for p in paths if p.id == result.chosen_path_id)
        chosen_tree = next(t for t in trees if t.path_id == result.chosen_path_id)
        diagnostics.update(ml_lace_diagnostic(belief, chosen_path, scenario))
        if all(lace.is_exact for lace in chosen_tree.laces) and chosen_tree.laces:
            returns = [chosen_tree.lace_return(lace, "phi") for lace in chosen_tree.laces]
            diagnostics["expected_constraint"] = float(np.mean(returns))
        belief, truth = simulate_session(
            belief, truth, chosen_path.actions, landmarks, scenario,
            rng_stream(scenario.seed, _STREAM_EXEC), session, "exec",
        )

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_run_files(out, scenario, result, roadmap, paths, trees, session,
                         timings, diagnostics, landmarks)

    return 0 if result.chosen_path_id is not None else 2


def compare_runs(run_a: str | Path, run_b: str | Path) -> dict:
    """Speedup and skipped-laces fraction of run A (ours) versus run B (baseline)."""
    a = json.loads((Path(run_a) / "results.json").read_text())
    b = json.loads((Path(run_b) / "results.json").read_text())
    if a["scenario_fingerprint"] != b["scenario_fingerprint"] or a["seed"] != b["seed"]:
        raise ScenarioError("runs come from different scenarios and cannot be compared")
    t_ours = a["totals"]["planning_time_mean_s"]
    t_base = b["totals"]["planning_time_mean_s"]
    return {
        "speedup": planners.speedup(t_base, t_ours),
        "laces_fraction": planners.laces_fraction(
            a["totals"]["n_total"], a["totals"]["n_expanded"]
        ),
        "same_chosen_path": a["chosen_path_id"] == b["chosen_path_id"],
        "chosen_ours": a["chosen_path_id"],
        "chosen_baseline": b["chosen_path_id"],
    }


def _apply_overrides(scenario_tree: dict, args: argparse.Namespace) -> dict:
    planner = scenario_tree.setdefault("planner", {})
    if args.algorithm is not None:
        planner["algorithm"] = args.algorithm
    if args.epsilon is not None:
        planner["epsilon"] = args.epsilon
    if args.delta is not None:
        planner["delta"] = args.delta
    if args.m is not None:
        planner["m"] = args.m
    if args.form is not None:
        planner["form"] = args.form
    if args.precision is not None:
        planner["precision_rel"] = args.precision
    if args.seed is not None:
        scenario_tree["seed"] = args.seed
    return scenario_tree


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="beliefplan")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment and write a run directory")
    run_p.add_argument("--scenario", help="scenario YAML; omit for the default scenario")
    run_p.add_argument("--algorithm", choices=["alg1", "alg2", "alg3", "alg4"])
    run_p.add_argument("--epsilon", type=float)
    run_p.add_argument("--delta", type=float)
    run_p.add_argument("--m", type=int)
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--form", choices=["cumulative", "multiplicative"])
    run_p.add_argument("--precision", type=float, help="bisection precision relative to delta_max")
    run_p.add_argument("--out", required=True, help="run directory to create")
    run_p.add_argument("--repeats", type=int, default=1, help="planning repetitions for timing")

    cmp_p = sub.add_parser("compare", help="compare two completed runs")
    cmp_p.add_argument("run_ours")
    cmp_p.add_argument("run_baseline")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            if args.scenario is not None:
                text = Path(args.scenario).read_text()
                tree = yaml.safe_load(text) or {}
            else:
                tree = {}
            scenario = scenario_from_dict(_apply_overrides(tree, args))
            return run_experiment(scenario, out_dir=args.out, repeats=args.repeats)
        row = compare_runs(args.run_ours, args.run_baseline)
        print(json.dumps(row, indent=2, sort_keys=True))
        return 0
    except (ScenarioError, gb.BeliefError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
