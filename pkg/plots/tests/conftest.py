import json

import numpy as np
import pytest

HEADER = ("step,t,trace_msbtm,trace_sde,trace_nf,trace_analytic,"
          "fisher_train,fisher_sde,ent_rate_num,ent_rate_analytic,"
          "tv,kl_rate_diag")

CONFIG_TEXT = """
[run]
problem = harmonic
n_particles = 40
dt = 1e-3
n_steps = 20
seed = 5
[harmonic]
a = 2.0
omega = 1.0
alpha = 0.5
diffusion = 0.25
sigma0_sq = 0.25
"""


def write_snapshot(path, states, with_scores=False):
    cols = "particle_id,c0,c1" + (",s0,s1" if with_scores else "")
    lines = [cols]
    for i, row in enumerate(states):
        cells = [str(i)] + [repr(float(v)) for v in row]
        if with_scores:
            cells += [repr(float(v)) for v in row]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def compare_run(tmp_path):
    """Synthetic compare-run directory following the documented schemas."""
    run = tmp_path / "run"
    (run / "snapshots").mkdir(parents=True)
    rows = [HEADER]
    for k in range(21):
        t = k * 1e-3
        rows.append(",".join([
            str(k), repr(t),
            repr(0.5 - 0.01 * k), repr(0.5 - 0.008 * k), repr(0.5 - 0.02 * k),
            repr(0.5 - 0.011 * k), repr(1e-3 + 1e-5 * k), repr(2e-3 + 1e-5 * k),
            repr(-0.9 + 0.01 * k), repr(-1.0 + 0.01 * k), repr(0.02 * k),
            repr(1e-4 * k)]))
    (run / "metrics.csv").write_text("\n".join(rows) + "\n")
    rng = np.random.default_rng(0)
    for track in ("msbtm", "sde", "noise_free"):
        for k in (0, 10, 20):
            states = rng.normal(size=(40, 2))
            write_snapshot(run / "snapshots" / f"{track}_step_{k:06d}.csv",
                           states, with_scores=(track == "msbtm"))
    (run / "manifest.json").write_text(json.dumps({
        "problem": "harmonic", "mode": "compare", "seed": 5, "dt": 1e-3,
        "n_steps": 20, "config_text": CONFIG_TEXT, "artifacts": {}}))
    return run
