"""Seeded random planning scenarios shared by planner and acceptance tests.

The preliminary action sequence sweeps the map in horizontal rows spaced one
meter apart, so with the 0.8 visibility radius every landmark inside the
sampling region is registered before planning. Planner runs then build their
trees from the returned scenario/belief/paths triple; rebuilding trees per
run reproduces identical laces through the named per-lace streams.
"""

from __future__ import annotations

import numpy as np

from beliefplan import cli_io
from beliefplan import gaussian_belief as gb
from beliefplan.cli_io import Scenario, SessionLog, scenario_from_dict
from beliefplan.path_gen import CandidatePath, build_prm, diverse_paths
from beliefplan.sim_world import Pose, rng_stream


def sweep_actions() -> list[list[float]]:
    """Row-by-row sweep covering the whole [0,5]x[0,5] map at radius 0.8."""
    actions: list[list[float]] = [[0.0, 1.0]]
    for row in range(4):
        step = [1.0, 0.0] if row % 2 == 0 else [-1.0, 0.0]
        actions += [step] * 4
        if row < 3:
            actions.append([0.0, 1.0])
    return actions


def random_scenario(
    seed: int,
    n_landmarks: int = 4,
    path_count: int = 6,
    m: int = 50,
    epsilon: float = 0.25,
    delta: float = 0.0,
    n_obs_root: int = 4,
    form: str = "cumulative",
) -> Scenario:
    return scenario_from_dict(
        {
            "landmarks": {"random": {"count": n_landmarks, "region": [[1.5, 4.0], [1.5, 4.0]]}},
            "preliminary_actions": sweep_actions(),
            "prm": {
                "n_vertices": 50,
                "connect_radius": 1.3,
                "path_count": path_count,
                "goal": [4.5, 0.5],
            },
            "planner": {
                "m": m,
                "epsilon": epsilon,
                "delta": delta,
                "n_obs_root": n_obs_root,
                "form": form,
            },
            "seed": seed,
        }
    )


def prepare(scenario: Scenario) -> tuple[gb.GaussianBelief, list[CandidatePath]]:
    """Mapping session plus diverse-path extraction for a scenario."""
    landmarks = cli_io.resolve_landmarks(scenario)
    belief = gb.init_prior(scenario.prior_mean, scenario.prior_cov)
    truth = Pose(*scenario.prior_mean)
    belief, _ = cli_io.simulate_session(
        belief, truth, scenario.preliminary_actions, landmarks, scenario,
        rng_stream(scenario.seed, 2), SessionLog(), "prelim",
    )
    start = gb.pose_marginal(belief)[0][:2]
    roadmap = build_prm(
        scenario.bounds, start, scenario.goal,
        scenario.prm_n_vertices, scenario.prm_connect_radius, scenario.seed,
    )
    paths = diverse_paths(roadmap, 0, 1, scenario.prm_path_count)
    return belief, paths


def run(scenario: Scenario, algorithm: str, belief, paths):
    """One planner run on fresh trees (laces reproduce via named streams)."""
    result, trees = cli_io._run_planner(scenario, algorithm, belief, paths)
    return result, trees
