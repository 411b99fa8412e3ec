"""Render figures from a beliefplan run directory.

Four figure kinds, one per invocation:

* ``trajectory`` — executed trajectory with pose covariance ellipses, dashed
  links from each estimate to its ground truth, and landmarks with their
  visibility circles.
* ``prm_paths`` — the roadmap with the diverse candidate paths on top.
* ``bounds_trace`` — per-candidate evolution of the feasibility bounds with
  the confidence level and a marker at the verdict iteration.
* ``metrics_table`` — the run's metrics row(s) as a table, including the
  mean planning time over repeats.

Rendering is read-only over the run directory and deterministic: the same
inputs produce identical image bytes under a pinned plotting environment.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import yaml
from matplotlib.patches import Circle, Ellipse

log = logging.getLogger(__name__)

KINDS = ("trajectory", "prm_paths", "bounds_trace", "metrics_table")

_SCHEMAS = {
    "beliefs.csv": ["phase", "step", "est_x", "est_y", "est_theta",
                    "cov_xx", "cov_xy", "cov_yy", "true_x", "true_y", "true_theta"],
    "paths.csv": ["path_id", "seq_index", "vertex_id", "x", "y"],
    "prm.csv": ["kind", "a", "b", "x", "y", "length"],
    "bounds.csv": ["path_id", "delta", "iteration", "m_expanded", "lb", "ub", "status"],
    "metrics.csv": ["algorithm", "chosen_path_id", "delta_star", "n_total", "n_expanded",
                    "laces_fraction", "repeats", "planning_time_mean_s", "planning_time_std_s"],
    "laces.csv": ["path_id", "lace_id", "s_lower", "s_upper", "s_exact", "levels"],
}


class SchemaError(RuntimeError):
    """A required input file is missing or its columns do not match."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    run_dir: Path
    out_path: Path

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")


def _read_rows(run_dir: Path, name: str, required: bool = True) -> list[dict] | None:
    path = run_dir / name
    if not path.exists():
        if required:
            raise SchemaError(f"{name} is missing from {run_dir}")
        log.warning("%s not found in %s; skipping that layer", name, run_dir)
        return None
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        expected = _SCHEMAS[name]
        if header != expected:
            raise SchemaError(
                f"{name}: columns {header} do not match the documented schema {expected}"
            )
        return list(reader)


def _read_scenario(run_dir: Path) -> dict | None:
    path = run_dir / "scenario_resolved.yaml"
    if not path.exists():
        log.warning("scenario_resolved.yaml not found in %s", run_dir)
        return None
    return yaml.safe_load(path.read_text())


def _covariance_ellipse(ax, x: float, y: float, cov: np.ndarray, n_sigma: float = 2.0, **kw):
    values, vectors = np.linalg.eigh(cov)
    values = np.maximum(values, 0.0)
    angle = math.degrees(math.atan2(vectors[1, 1], vectors[0, 1]))
    width, height = 2.0 * n_sigma * np.sqrt(values[[1, 0]])
    ax.add_patch(Ellipse((x, y), width, height, angle=angle, fill=False, **kw))


def _render_trajectory(spec: FigureSpec):
    rows = _read_rows(spec.run_dir, "beliefs.csv")
    scenario = _read_scenario(spec.run_dir)
    fig, ax = plt.subplots(figsize=(6.4, 6.4))

    if scenario is not None:
        radius = float(scenario.get("visibility_radius", 0.0))
        for lx, ly in scenario.get("landmarks", {}).get("positions") or []:
            if radius > 0:
                ax.add_patch(Circle((lx, ly), radius, color="0.8", alpha=0.4, zorder=0))
            ax.plot(lx, ly, marker="*", color="0.2", markersize=10, zorder=3)
        (xlo, xhi), (ylo, yhi) = scenario["map"]["bounds"]
        ax.set_xlim(xlo - 0.5, xhi + 0.5)
        ax.set_ylim(ylo - 0.5, yhi + 0.5)

    colors = {"prelim": "tab:blue", "exec": "tab:red"}
    for phase in ("prelim", "exec"):
        sub = [r for r in rows if r["phase"] == phase]
        if not sub:
            continue
        est = np.array([[float(r["est_x"]), float(r["est_y"])] for r in sub])
        truth = np.array([[float(r["true_x"]), float(r["true_y"])] for r in sub])
        ax.plot(est[:, 0], est[:, 1], "-", color=colors[phase], lw=1.2,
                label=f"{phase} estimate")
        ax.plot(truth[:, 0], truth[:, 1], "-", color=colors[phase], lw=0.8, alpha=0.4,
                label=f"{phase} ground truth")
        for r, (ex, ey), (tx, ty) in zip(sub, est, truth):
            ax.plot([ex, tx], [ey, ty], "--", color="0.5", lw=0.6, zorder=1)
            cov = np.array([
                [float(r["cov_xx"]), float(r["cov_xy"])],
                [float(r["cov_xy"]), float(r["cov_yy"])],
            ])
            _covariance_ellipse(ax, ex, ey, cov, edgecolor=colors[phase],
                                lw=0.6, alpha=0.7, zorder=2)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="upper left", fontsize=8)
    ax.set_title("Estimated vs true trajectory (2-sigma pose ellipses)")
    return fig


def _render_prm_paths(spec: FigureSpec):
    path_rows = _read_rows(spec.run_dir, "paths.csv")
    prm_rows = _read_rows(spec.run_dir, "prm.csv", required=False)
    fig, ax = plt.subplots(figsize=(6.4, 6.4))

    if prm_rows is not None:
        vertices = {int(r["a"]): (float(r["x"]), float(r["y"]))
                    for r in prm_rows if r["kind"] == "vertex"}
        for r in prm_rows:
            if r["kind"] != "edge":
                continue
            xa, ya = vertices[int(r["a"])]
            xb, yb = vertices[int(r["b"])]
            ax.plot([xa, xb], [ya, yb], "-", color="0.85", lw=0.5, zorder=0)
        pts = np.array(list(vertices.values()))
        ax.plot(pts[:, 0], pts[:, 1], ".", color="0.6", markersize=2, zorder=1)

    by_path: dict[int, list[tuple[int, float, float]]] = {}
    for r in path_rows:
        by_path.setdefault(int(r["path_id"]), []).append(
            (int(r["seq_index"]), float(r["x"]), float(r["y"]))
        )
    cmap = plt.get_cmap("tab20")
    for path_id in sorted(by_path):
        seq = sorted(by_path[path_id])
        xs = [x for _, x, _ in seq]
        ys = [y for _, _, y in seq]
        color = cmap((path_id - 1) % 20)
        ax.plot(xs, ys, "-o", color=color, lw=1.4, markersize=3, zorder=2)
        mid = len(xs) // 2
        ax.annotate(str(path_id), (xs[mid], ys[mid]), color=color,
                    fontsize=9, fontweight="bold", zorder=3)
    first = sorted(by_path)[0]
    seq = sorted(by_path[first])
    ax.plot(seq[0][1], seq[0][2], "s", color="k", markersize=7, zorder=4)
    ax.plot(seq[-1][1], seq[-1][2], "*", color="k", markersize=12, zorder=4)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title("Roadmap and diverse candidate paths (start square, goal star)")
    return fig


def _render_bounds_trace(spec: FigureSpec):
    rows = _read_rows(spec.run_dir, "bounds.csv")
    lace_rows = _read_rows(spec.run_dir, "laces.csv", required=False)
    scenario = _read_scenario(spec.run_dir)
    epsilon = None
    if scenario is not None:
        epsilon = float(scenario["planner"]["epsilon"])

    expanded: dict[int, int] = {}
    if lace_rows is not None:
        if not lace_rows:
            log.warning("laces.csv is empty; skipping lace-count annotations")
        for r in lace_rows:
            pid = int(r["path_id"])
            expanded[pid] = max(expanded.get(pid, 0), int(r["lace_id"]))

    by_path: dict[int, list[dict]] = {}
    for r in rows:
        by_path.setdefault(int(r["path_id"]), []).append(r)
    n = len(by_path)
    ncols = min(4, max(1, n))
    nrows = math.ceil(n / ncols)
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(3.2 * ncols, 2.4 * nrows), squeeze=False, sharey=True
    )
    for ax in axes.flat[n:]:
        ax.set_axis_off()
    for ax, path_id in zip(axes.flat, sorted(by_path)):
        trace = by_path[path_id]
        steps = range(len(trace))
        lbs = [float(r["lb"]) for r in trace]
        ubs = [float(r["ub"]) for r in trace]
        ax.step(steps, lbs, where="post", color="tab:green", lw=1.0, label="lb")
        ax.step(steps, ubs, where="post", color="tab:orange", lw=1.0, label="ub")
        if epsilon is not None:
            ax.axhline(1.0 - epsilon, color="tab:red", lw=0.8, ls="-")
        verdict_at = next(
            (i for i, r in enumerate(trace) if r["status"] != "unknown"), None
        )
        if verdict_at is not None:
            marker = ax.axvline(verdict_at, color="k", lw=1.0, ls="--")
            marker.set_gid("verdict-marker")
            ax.annotate(
                trace[verdict_at]["status"],
                (verdict_at, 0.5),
                fontsize=7,
                rotation=90,
                va="center",
            )
        title = f"path {path_id}"
        if path_id in expanded:
            title += f" ({expanded[path_id]} laces)"
        ax.set_title(title, fontsize=8)
        ax.set_ylim(-0.05, 1.05)
        ax.tick_params(labelsize=7)
    fig.suptitle("Feasibility bound evolution (red line: confidence level)", fontsize=10)
    fig.supxlabel("evaluation step", fontsize=8)
    fig.tight_layout()
    return fig


def _render_metrics_table(spec: FigureSpec):
    rows = _read_rows(spec.run_dir, "metrics.csv")
    header = _SCHEMAS["metrics.csv"]
    fig, ax = plt.subplots(figsize=(10.0, 0.6 + 0.4 * (len(rows) + 1)))
    ax.set_axis_off()
    cells = [[r[h] for h in header] for r in rows]
    table = ax.table(cellText=cells, colLabels=header, loc="center")
    table.auto_set_font_size(False)
    table.set_fontsize(7)
    table.scale(1.0, 1.4)
    ax.set_title("Run metrics (planning time is the mean over repeats)", fontsize=10)
    return fig


_RENDERERS = {
    "trajectory": _render_trajectory,
    "prm_paths": _render_prm_paths,
    "bounds_trace": _render_bounds_trace,
    "metrics_table": _render_metrics_table,
}


def render(spec: FigureSpec):
    """Render one figure kind to ``spec.out_path`` and return the Figure."""
    fig = _RENDERERS[spec.kind](spec)
    spec.out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.out_path, dpi=150)
    plt.close(fig)
    return fig


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="beliefplan-plots")
    parser.add_argument("--run", required=True, help="completed run directory")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    spec = FigureSpec(kind=args.kind, run_dir=Path(args.run), out_path=Path(args.out))
    try:
        render(spec)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
