#!/usr/bin/env python3
"""Generate the separability-vs-measurement-strength benchmark curves.

Runs the four bundled recipes (strong drive chi/gamma = 25 and 50, each
with symmetric damping and with a 2:1 damping asymmetry under constant
coupling) and writes one CSV per curve.

Usage: python scripts/separability_curves.py [output_dir]
"""

import pathlib
import sys

from pairamp.cli import main

RECIPES = (
    "sweep_mu_chi25_symmetric",
    "sweep_mu_chi50_symmetric",
    "sweep_mu_chi25_asymmetric",
    "sweep_mu_chi50_asymmetric",
)


def run(out_dir: pathlib.Path) -> int:
    root = pathlib.Path(__file__).resolve().parent.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    status = 0
    for name in RECIPES:
        recipe = root / "recipes" / f"{name}.json"
        target = out_dir / f"{name}.csv"
        code = main(["sweep", "--config", str(recipe), "--output", str(target)])
        print(f"{name}: exit {code} -> {target}")
        status = max(status, code)
    return status


if __name__ == "__main__":
    out = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else pathlib.Path("curves")
    sys.exit(run(out))
