"""Per-action belief tree with budgeted observation branching and lace reuse.

Each candidate action sequence gets its own tree rooted at the planning
belief. A node at depth d may hold at most ``max(1, n0 // 2**d)`` observation
children; once saturated, later arrivals reuse existing children through a
circular slider. One root-to-leaf walk is a lace: a sampled observation
sequence together with its induced belief sequence and per-step information
gain bounds at some simplification level.

Expensive quantities (subset marginals, determinant roots, level-indexed
bounds) are cached per node and shared by every lace through that node, so
reused laces cost only bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gaussian_belief import (
    DetBoundPair,
    GaussianBelief,
    SubsetMarginal,
    det_root,
    det_root_bounds,
    entropy,
    max_level,
    predict,
    sample_from_predicted,
    subset_marginal,
    update,
)
from .path_gen import CandidatePath
from .sim_world import NoiseSpec, Observation, rng_stream, sample_observation, visible_config


@dataclass(frozen=True)
class TreeConfig:
    """Parameters shared by every tree of one planning session."""

    noise: NoiseSpec
    visibility_radius: float
    n_obs_root: int = 4  # observation budget at the root; halves per depth
    seed_prefix: tuple[int, ...] = (0,)
    rho_operator: str = "phi"  # reward operator: "phi" or "entropy_diff"


class BeliefNode:
    """One belief in the tree, with write-once caches for bound evaluation."""

    __slots__ = ("belief", "depth", "children", "slider", "_subset", "_droot", "_bounds", "_entropy")

    def __init__(self, belief: GaussianBelief, depth: int):
        self.belief = belief
        self.depth = depth
        self.children: list[tuple[Observation, "BeliefNode"]] = []
        self.slider = 0
        self._subset: SubsetMarginal | None = None
        self._droot: float | None = None
        self._bounds: dict[int, DetBoundPair] = {}
        self._entropy: float | None = None

    def budget(self, n_obs_root: int) -> int:
        return max(1, n_obs_root // (2**self.depth))

    def subset(self) -> SubsetMarginal:
        if self._subset is None:
            self._subset = subset_marginal(self.belief)
        return self._subset

    def droot(self) -> float:
        if self._droot is None:
            self._droot = det_root(self.subset())
        return self._droot

    def det_bounds(self, level: int) -> DetBoundPair:
        pair = self._bounds.get(level)
        if pair is None:
            sub = self.subset()
            top = max_level(len(sub.block_sizes))
            if level >= top:
                exact = self.droot()
                pair = DetBoundPair(lower=exact, upper=exact, level=level)
            else:
                pair = det_root_bounds(sub, level)
            self._bounds[level] = pair
        return pair

    def entropy_value(self) -> float:
        if self._entropy is None:
            self._entropy = entropy(self.subset())
        return self._entropy


@dataclass
class Lace:
    """One sampled observation sequence with its per-step gain bookkeeping.

    ``step_bounds[t]`` sandwiches the step-t information gain at
    ``levels[t]``; ``step_exact[t]`` is set once the step is refined to the
    top level. ``s_lower <= s_exact <= s_upper`` holds whenever the exact
    cumulative return is known.
    """

    lace_id: int
    nodes: list[BeliefNode]
    levels: list[int]
    step_bounds: list[tuple[float, float]] = field(default_factory=list)
    step_exact: list[float | None] = field(default_factory=list)
    s_lower: float = 0.0
    s_upper: float = 0.0
    s_exact: float | None = None

    @property
    def horizon(self) -> int:
        return len(self.nodes) - 1

    @property
    def is_exact(self) -> bool:
        return all(value is not None for value in self.step_exact)

    def interval_width(self) -> float:
        return sum(hi - lo for lo, hi in self.step_bounds)


class ActionTree:
    """Belief tree for one candidate path, expanded lace by lace on demand."""

    def __init__(self, path: CandidatePath, root_belief: GaussianBelief, config: TreeConfig):
        self.path = path
        self.config = config
        self.root = BeliefNode(root_belief, depth=0)
        self.laces: list[Lace] = []
        self.max_level = max_level(len(self.root.subset().block_sizes))

    @property
    def path_id(self) -> int:
        return self.path.id

    @property
    def n_expanded(self) -> int:
        return len(self.laces)

    def _create_child(self, node: BeliefNode, action: np.ndarray, rng) -> tuple[Observation, BeliefNode]:
        predicted = predict(node.belief, action, self.config.noise)
        pose, landmark_positions = sample_from_predicted(predicted, rng)
        beta = visible_config(pose, landmark_positions, self.config.visibility_radius)
        z = sample_observation(
            pose, landmark_positions, beta, self.config.noise, rng,
            ids=predicted.registered_landmark_ids(),
        )
        child_belief = update(predicted, beta, z, self.config.noise)
        return z, BeliefNode(child_belief, depth=node.depth + 1)

    def _step_values(self, prior: BeliefNode, post: BeliefNode, level: int):
        """(lower, upper, exact-or-None) of the step gain at one level."""
        if level >= self.max_level:
            value = prior.droot() - post.droot()
            return value, value, value
        pb = prior.det_bounds(level)
        qb = post.det_bounds(level)
        return pb.lower - qb.upper, pb.upper - qb.lower, None

    def _refresh(self, lace: Lace) -> None:
        lace.s_lower = sum(lo for lo, _ in lace.step_bounds)
        lace.s_upper = sum(hi for _, hi in lace.step_bounds)
        lace.s_exact = sum(lace.step_exact) if lace.is_exact else None  # type: ignore[arg-type]

    def expand_next_lace(self) -> Lace:
        """Walk the tree once, creating children only below unsaturated budgets.

        Uses the lace's own named random stream, so lace ``l`` is identical
        across reruns regardless of what other actions expanded.
        """
        lace_id = len(self.laces) + 1
        rng = rng_stream(*self.config.seed_prefix, self.path_id, lace_id)
        node = self.root
        nodes = [node]
        for action in self.path.actions:
            if len(node.children) < node.budget(self.config.n_obs_root):
                child_entry = self._create_child(node, action, rng)
                node.children.append(child_entry)
                child = child_entry[1]
            else:
                child = node.children[node.slider][1]
                node.slider = (node.slider + 1) % len(node.children)
            nodes.append(child)
            node = child
        lace = Lace(lace_id=lace_id, nodes=nodes, levels=[0] * (len(nodes) - 1))
        for t in range(lace.horizon):
            lo, hi, exact = self._step_values(nodes[t], nodes[t + 1], 0)
            lace.step_bounds.append((lo, hi))
            lace.step_exact.append(exact)
        self._refresh(lace)
        self.laces.append(lace)
        return lace

    def refine_lace(self, lace: Lace, target_level: int) -> Lace:
        """Recompute every step at ``target_level``; bound intervals never widen."""
        target_level = min(target_level, self.max_level)
        if any(target_level < lvl for lvl in lace.levels):
            raise ValueError("refinement level must not decrease")
        for t in range(lace.horizon):
            if lace.levels[t] == target_level:
                continue
            lo, hi, exact = self._step_values(lace.nodes[t], lace.nodes[t + 1], target_level)
            lace.levels[t] = target_level
            lace.step_bounds[t] = (lo, hi)
            lace.step_exact[t] = exact
        self._refresh(lace)
        return lace

    def lace_return(self, lace: Lace, operator: str = "phi") -> float:
        """Cumulative return of a lace; ``"rho"`` resolves to the configured reward."""
        if operator == "rho":
            operator = self.config.rho_operator
        return lace_return(lace, operator)


def lace_return(lace: Lace, operator: str = "phi") -> float:
    """Fold the per-step operator values of an exact lace.

    ``"phi"`` sums the exact information gains and requires the lace to be
    refined to the top level; callers wanting partial information must read
    the bounds explicitly. ``"entropy_diff"`` sums per-step entropy drops.
    """
    if operator == "phi":
        if not lace.is_exact:
            raise ValueError(
                f"lace {lace.lace_id} is not refined to exact; request bounds instead"
            )
        return float(sum(lace.step_exact))  # type: ignore[arg-type]
    if operator == "entropy_diff":
        return float(
            sum(
                lace.nodes[t].entropy_value() - lace.nodes[t + 1].entropy_value()
                for t in range(lace.horizon)
            )
        )
    raise ValueError(f"unknown return operator {operator!r}")


def max_tree_nodes(n_obs_root: int, horizon: int) -> int:
    """Upper bound on nodes below the root for one action's tree."""
    total = 0
    width = 1
    for depth in range(horizon):
        width *= max(1, n_obs_root // (2**depth))
        total += width
    return total
