"""Figure rendering for completed runs: metric time series, particle
trajectories with a fading trail, and phase-plane scatter grids."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .artifacts import ArtifactError, list_snapshots, read_manifest, \
    read_metrics, read_snapshot, trap_center, trap_params

KINDS = ("trace", "fisher", "entropy", "tv", "trajectories", "scatter")

_TRACK_LABEL = {"msbtm": "MSBTM", "sde": "SDE", "noise_free": "noise free"}

# PNG text chunks carry the matplotlib version; strip for reproducible bytes
_METADATA = {"Software": None}


@dataclass
class FigureRequest:
    kind: str
    input_dir: Path
    output_path: Path
    trail_length: int = 8          # snapshots shown in a fading trajectory
    trap_marker: bool = True
    scatter_steps: tuple[int, ...] | None = None  # default: spread over run
    max_trajectories: int = 50

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArtifactError(
                f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        self.input_dir = Path(self.input_dir)
        self.output_path = Path(self.output_path)
        if self.trail_length < 1:
            raise ArtifactError("trail_length must be >= 1")


def render(request: FigureRequest) -> Path:
    """Render one figure from run artifacts; never modifies its inputs."""
    fig = _BUILDERS[request.kind](request)
    request.output_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(request.output_path, dpi=130, metadata=_METADATA)
    plt.close(fig)
    return request.output_path


def _series_figure(request, columns, labels, ylabel, logy=False):
    data = read_metrics(request.input_dir, ("t",) + columns)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    t = data["t"]
    drew = False
    for col, label in zip(columns, labels):
        y = data[col]
        keep = ~np.isnan(y)
        if keep.any():
            ax.plot(t[keep], y[keep], label=label, lw=1.2)
            drew = True
    if not drew:
        raise ArtifactError(
            f"columns {columns} hold no values in {request.input_dir}")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def _trace(request):
    return _series_figure(
        request,
        ("trace_msbtm", "trace_sde", "trace_nf", "trace_analytic"),
        ("MSBTM", "SDE", "noise free", "analytic"),
        "trace of covariance")


def _fisher(request):
    return _series_figure(request, ("fisher_train", "fisher_sde"),
                          ("training data", "SDE data"),
                          "relative Fisher divergence", logy=True)


def _entropy(request):
    return _series_figure(request, ("ent_rate_num", "ent_rate_analytic"),
                          ("MSBTM", "analytic"), "entropy production rate")


def _tv(request):
    return _series_figure(request, ("tv",), ("MSBTM vs SDE",),
                          "total variation")


def _snapshot_grid(request):
    snaps = list_snapshots(request.input_dir)
    if not snaps:
        raise ArtifactError(f"no snapshots under {request.input_dir}")
    return snaps


def _pick_steps(available: list[int], requested, limit=4) -> list[int]:
    if requested:
        missing = [s for s in requested if s not in available]
        if missing:
            raise ArtifactError(
                f"snapshot steps {missing} not stored; available: {available}")
        return list(requested)
    if len(available) <= limit:
        return available
    picks = np.linspace(0, len(available) - 1, limit).round().astype(int)
    return [available[i] for i in picks]


def _trajectories(request):
    snaps = _snapshot_grid(request)
    manifest = read_manifest(request.input_dir)
    dt = float(manifest.get("dt", 0.0))
    trap = trap_params(request.input_dir) if request.trap_marker else None
    tracks = [t for t in ("msbtm", "sde", "noise_free") if t in snaps]
    fig, axes = plt.subplots(1, len(tracks), figsize=(4.0 * len(tracks), 4.0),
                             squeeze=False)
    for ax, track in zip(axes[0], tracks):
        steps = sorted(snaps[track])[-request.trail_length:]
        frames = [read_snapshot(snaps[track][k]) for k in steps]
        n_show = min(request.max_trajectories, frames[0].shape[0])
        for j, (k, X) in enumerate(zip(steps, frames)):
            alpha = (j + 1) / len(frames)
            ax.scatter(X[:n_show, 0], X[:n_show, 1], s=4, alpha=0.25 + 0.6 * alpha,
                       color="purple", edgecolors="none")
            if trap is not None:
                c = trap_center(trap[0], trap[1], k * dt)
                ax.plot(*c, marker="*", color="green", ms=14 * alpha + 2,
                        alpha=0.3 + 0.7 * alpha)
        paths = np.stack(frames)  # (T, N, d)
        for i in range(n_show):
            ax.plot(paths[:, i, 0], paths[:, i, 1], color="purple", lw=0.4,
                    alpha=0.35)
        ax.set_title(_TRACK_LABEL[track])
        ax.set_xlabel("c0")
        ax.set_ylabel("c1")
        ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    return fig


def _scatter(request):
    snaps = _snapshot_grid(request)
    tracks = [t for t in ("msbtm", "sde", "noise_free") if t in snaps]
    shared = sorted(set.intersection(*(set(snaps[t]) for t in tracks)))
    if not shared:
        raise ArtifactError("tracks share no snapshot steps")
    steps = _pick_steps(shared, request.scatter_steps)
    fig, axes = plt.subplots(len(steps), len(tracks),
                             figsize=(3.2 * len(tracks), 3.2 * len(steps)),
                             squeeze=False)
    for r, step in enumerate(steps):
        for c, track in enumerate(tracks):
            ax = axes[r][c]
            X = read_snapshot(snaps[track][step])
            ax.scatter(X[:, 0], X[:, 1], s=3, alpha=0.5, color="purple",
                       edgecolors="none")
            if r == 0:
                ax.set_title(_TRACK_LABEL[track])
            if c == 0:
                ax.set_ylabel(f"step {step}")
    fig.tight_layout()
    return fig


_BUILDERS = {
    "trace": _trace,
    "fisher": _fisher,
    "entropy": _entropy,
    "tv": _tv,
    "trajectories": _trajectories,
    "scatter": _scatter,
}
