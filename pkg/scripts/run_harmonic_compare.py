#!/usr/bin/env python3
"""Paper-scale harmonic-trap comparison: transport run vs SDE vs noise-free
vs the Gaussian moment ODE, from one shared initial draw.

Writes runs/harmonic/{metrics.csv,snapshots/,checkpoints/,manifest.json}.
"""

import sys
from pathlib import Path

from msbtm.cli import main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "harmonic.cfg"

if __name__ == "__main__":
    sys.exit(main(["compare", "--config", str(CONFIG), *sys.argv[1:]]))
