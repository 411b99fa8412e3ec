"""Probabilistic roadmap construction and diverse shortest-path extraction.

Candidate action sequences are paths on a PRM: vertices sampled uniformly in
the map bounds (start and goal inserted), edges between vertices within a
connection radius. Diversity comes from repeated breadth-first searches, each
on the roadmap with one interior vertex of the previous path removed.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from .sim_world import rng_stream

log = logging.getLogger(__name__)

_MAX_PRM_RETRIES = 20


class RoadmapError(RuntimeError):
    """Roadmap construction or search failure."""


@dataclass(frozen=True)
class RoadMap:
    """Undirected geometric graph; vertex 0 is the start, vertex 1 the goal."""

    vertices: np.ndarray  # (n, 2)
    edges: tuple[tuple[int, int], ...]

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    def adjacency(self, removed: frozenset[int] = frozenset()) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {i: [] for i in range(self.n_vertices) if i not in removed}
        for a, b in self.edges:
            if a in removed or b in removed:
                continue
            adj[a].append(b)
            adj[b].append(a)
        for neighbors in adj.values():
            neighbors.sort()
        return adj

    def edge_length(self, a: int, b: int) -> float:
        return float(np.linalg.norm(self.vertices[a] - self.vertices[b]))


@dataclass(frozen=True)
class CandidatePath:
    """One candidate action sequence: a start-to-goal vertex path with its displacements."""

    id: int
    vertex_seq: tuple[int, ...]
    vertices: np.ndarray  # (len, 2) coordinates along the path
    actions: np.ndarray  # (len-1, 2) displacement per step

    @property
    def horizon(self) -> int:
        return int(self.actions.shape[0])


def _bfs_path(adj: dict[int, list[int]], start: int, goal: int) -> list[int] | None:
    """Fewest-edge path; ties resolved by visiting neighbors in ascending id order."""
    if start not in adj or goal not in adj:
        return None
    parent: dict[int, int] = {start: start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        if u == goal:
            break
        for v in adj[u]:
            if v not in parent:
                parent[v] = u
                queue.append(v)
    if goal not in parent:
        return None
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    return path[::-1]


def build_prm(bounds, start, goal, n_vertices: int, connect_radius: float, seed: int) -> RoadMap:
    """Uniform PRM over ``bounds`` = ((xmin, xmax), (ymin, ymax)).

    The start and goal positions are inserted as vertices 0 and 1; edges join
    every vertex pair within ``connect_radius``. Resamples until start and
    goal are connected, erroring out after a bounded number of attempts.
    """
    if n_vertices < 2:
        raise ValueError("need at least start and goal vertices")
    if connect_radius <= 0.0:
        raise ValueError("connection radius must be positive")
    (xmin, xmax), (ymin, ymax) = bounds
    low, high = np.array([xmin, ymin], dtype=float), np.array([xmax, ymax], dtype=float)
    start = np.asarray(start, dtype=float).reshape(2)
    goal = np.asarray(goal, dtype=float).reshape(2)
    for attempt in range(_MAX_PRM_RETRIES):
        rng = rng_stream(seed, 0x505, attempt)
        random_pts = rng.uniform(low, high, size=(n_vertices - 2, 2))
        vertices = np.vstack([start.reshape(1, 2), goal.reshape(1, 2), random_pts])
        edges = []
        for a in range(n_vertices):
            for b in range(a + 1, n_vertices):
                if np.linalg.norm(vertices[a] - vertices[b]) <= connect_radius:
                    edges.append((a, b))
        roadmap = RoadMap(vertices=vertices, edges=tuple(edges))
        if _bfs_path(roadmap.adjacency(), 0, 1) is not None:
            return roadmap
    raise RoadmapError(
        f"start and goal stayed disconnected after {_MAX_PRM_RETRIES} roadmap samples "
        f"(n_vertices={n_vertices}, connect_radius={connect_radius})"
    )


def _make_candidate(roadmap: RoadMap, path_id: int, vertex_seq: list[int]) -> CandidatePath:
    coords = roadmap.vertices[vertex_seq]
    return CandidatePath(
        id=path_id,
        vertex_seq=tuple(vertex_seq),
        vertices=coords.copy(),
        actions=np.diff(coords, axis=0),
    )


def diverse_paths(roadmap: RoadMap, start: int, goal: int, count: int) -> list[CandidatePath]:
    """Extract up to ``count`` distinct start-goal paths.

    Path 1 is the BFS shortest path. Each subsequent path removes one interior
    vertex of the previous path (the middle one, scanning outward if the
    removal disconnects start and goal) and re-runs BFS on the reduced
    roadmap; removals accumulate, which guarantees the returned vertex
    sequences are pairwise distinct. Returns fewer paths with a warning when
    the roadmap runs out of alternatives.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    removed: set[int] = set()
    paths: list[CandidatePath] = []
    prev_seq = _bfs_path(roadmap.adjacency(), start, goal)
    if prev_seq is None:
        raise RoadmapError("start and goal are not connected")
    paths.append(_make_candidate(roadmap, 1, prev_seq))
    while len(paths) < count:
        interior = prev_seq[1:-1]
        next_seq = None
        mid = len(interior) // 2
        # Middle vertex first, then scan outward for one whose removal keeps
        # the goal reachable.
        order = sorted(range(len(interior)), key=lambda i: (abs(i - mid), i))
        for i in order:
            trial = removed | {interior[i]}
            seq = _bfs_path(roadmap.adjacency(frozenset(trial)), start, goal)
            if seq is not None:
                removed = trial
                next_seq = seq
                break
        if next_seq is None:
            log.warning(
                "only %d of %d diverse paths exist (no removable vertex keeps the goal reachable)",
                len(paths), count,
            )
            break
        paths.append(_make_candidate(roadmap, len(paths) + 1, next_seq))
        prev_seq = next_seq
    return paths
