"""Belief-space planning over Gaussian landmark-SLAM beliefs.

Probabilistic belief-dependent constraints on information gain are evaluated
adaptively through two bound layers (lace counts and simplification-level
gain bounds), and a bisection driver maximizes the feasible return threshold
(the sample Value at Risk) over candidate roadmap paths.
"""

from .belief_tree import ActionTree, BeliefNode, Lace, TreeConfig, lace_return
from .constraint_eval import (
    BoundState,
    ConstraintSpec,
    Form,
    Status,
    Verdict,
    adaptive_feasibility,
    inner_indicator,
    inner_indicator_bounds,
    layer_bounds,
    merged_check,
)
from .gaussian_belief import (
    BeliefError,
    DetBoundPair,
    GaussianBelief,
    SubsetMarginal,
    VariableIndex,
    det_root,
    det_root_bounds,
    dopt_gain,
    dopt_gain_bounds,
    entropy,
    init_prior,
    max_level,
    pose_marginal,
    predict,
    sample_next_state,
    subset_marginal,
    update,
)
from .path_gen import CandidatePath, RoadMap, RoadmapError, build_prm, diverse_paths
from .planners import (
    PlanResult,
    alg1_adaptive_constrained,
    alg2_baseline_constrained,
    alg3_var_bisection,
    alg4_var_bruteforce,
    laces_fraction,
    sample_var,
    speedup,
    utility_estimate,
)
from .sim_world import (
    Landmark,
    NoiseSpec,
    Observation,
    Pose,
    VisibilityConfig,
    ml_observation,
    rng_stream,
    sample_motion,
    sample_observation,
    visible_config,
    wrap_angle,
)
from .cli_io import Scenario, ScenarioError, compare_runs, load_scenario, run_experiment

__version__ = "0.1.0"
