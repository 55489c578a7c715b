#!/usr/bin/env python3
"""Paper-scale active-swimmer comparison (N = 5000): transport run vs SDE vs
noise-free, with the per-step grid total variation in metrics.csv."""

import sys
from pathlib import Path

from msbtm.cli import main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "swimmer.cfg"

if __name__ == "__main__":
    sys.exit(main(["compare", "--config", str(CONFIG), *sys.argv[1:]]))
