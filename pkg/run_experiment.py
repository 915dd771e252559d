#!/usr/bin/env python3
"""
Run a markset experiment.

Thin wrapper around the ``markset run`` command so experiments can be started
from a source checkout, e.g.

    python run_experiment.py --experiment theory-t0 --out results
"""
import sys
from pathlib import Path

# Add the current directory to the path so the package imports without installation
sys.path.append(str(Path(__file__).parent))

from markset.cli import run

if __name__ == "__main__":
    run()
