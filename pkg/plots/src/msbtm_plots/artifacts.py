"""Readers for the documented run-artifact schemas.

This package never imports the solver; everything comes from metrics.csv,
snapshots/<track>_step_<k>.csv, and manifest.json.
"""

from __future__ import annotations

import configparser
import csv
import json
import re
from pathlib import Path

import numpy as np

METRICS_COLUMNS = ("step", "t", "trace_msbtm", "trace_sde", "trace_nf",
                   "trace_analytic", "fisher_train", "fisher_sde",
                   "ent_rate_num", "ent_rate_analytic", "tv", "kl_rate_diag")

TRACKS = ("msbtm", "sde", "noise_free")

_SNAPSHOT_RE = re.compile(r"^(msbtm|sde|noise_free)_step_(\d+)\.csv$")


class ArtifactError(ValueError):
    """A run directory does not provide what a figure needs."""


def read_metrics(run_dir, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Load metrics.csv columns; empty cells become NaN.

    Raises ArtifactError naming any missing required column.
    """
    path = Path(run_dir) / "metrics.csv"
    if not path.exists():
        raise ArtifactError(f"{path} not found")
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ArtifactError(f"{path} is empty") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise ArtifactError(
                f"{path} is missing required columns: {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise ArtifactError(f"{path} has a header but no rows")
    idx = {c: header.index(c) for c in header}
    out = {}
    for col in required:
        j = idx[col]
        out[col] = np.array([float(r[j]) if r[j] != "" else np.nan for r in rows])
    return out


def list_snapshots(run_dir) -> dict[str, dict[int, Path]]:
    """Available snapshot CSVs as {track: {step: path}}."""
    snap_dir = Path(run_dir) / "snapshots"
    if not snap_dir.is_dir():
        raise ArtifactError(f"{snap_dir} not found")
    out: dict[str, dict[int, Path]] = {t: {} for t in TRACKS}
    for path in snap_dir.iterdir():
        m = _SNAPSHOT_RE.match(path.name)
        if m:
            out[m.group(1)][int(m.group(2))] = path
    return {t: steps for t, steps in out.items() if steps}


def read_snapshot(path) -> np.ndarray:
    """Particle coordinates from one snapshot CSV, shape (N, d)."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        cols = [c for c in (reader.fieldnames or []) if c.startswith("c")]
        if not cols:
            raise ArtifactError(f"{path}: no coordinate columns found")
        data = [[float(row[c]) for c in cols] for row in reader]
    if not data:
        raise ArtifactError(f"{path} holds no particles")
    return np.asarray(data)


def read_manifest(run_dir) -> dict:
    path = Path(run_dir) / "manifest.json"
    if not path.exists():
        raise ArtifactError(f"{path} not found")
    return json.loads(path.read_text())


def trap_params(run_dir) -> tuple[float, float] | None:
    """(a, omega) of the harmonic trap, parsed from the manifest's config
    echo; None for runs without a trap."""
    manifest = read_manifest(run_dir)
    if manifest.get("problem") != "harmonic":
        return None
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",),
                                       interpolation=None)
    parser.read_string(manifest.get("config_text", ""))
    if not parser.has_section("harmonic"):
        return None
    return (parser.getfloat("harmonic", "a"),
            parser.getfloat("harmonic", "omega"))


def trap_center(a: float, omega: float, t: float) -> np.ndarray:
    w = np.pi * omega * t
    return a * np.array([np.cos(w), np.sin(w)])
