"""Existence regions in the (lambda, q) plane for N = 4, written as CSV and SVG.

Run:  python3 demos/phase_diagram.py [out_dir]
"""
import sys
from pathlib import Path

from rhls.cli import main

out = Path(sys.argv[1] if len(sys.argv) > 1 else ".")
out.mkdir(parents=True, exist_ok=True)
main(["phase-diagram", "--dim", "4", "--lambda-min", "0.5", "--lambda-max", "20", "--resolution", "80",
      "--out", str(out / "phase_N4.csv"), "--svg", str(out / "phase_N4.svg")])
print(f"wrote {out / 'phase_N4.csv'} and {out / 'phase_N4.svg'}")
