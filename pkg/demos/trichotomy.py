"""Walk down in q at N = 4, lambda = 12 and watch the optimal atom appear.

Run:  python3 demos/trichotomy.py
"""
import numpy as np

from rhls.kernel import build_table
from rhls.minimize import minimize_relaxed
from rhls.params import Params, classify
from rhls.radial import make_grid, stretch_for_first_step

g = make_grid(4, 100.0, 512, stretch_for_first_step(512, 1e-5))
table = build_table(g, 12.0)
for q in np.linspace(0.38, 0.27, 6):
    p = Params(4, 12.0, float(q))
    res = minimize_relaxed(p, g, table=table)
    print(f"q={q:.3f} alpha={p.alpha:+.3f} {classify(p).existence.value:22s} "
          f"C={res.C_estimate:.4e} M={res.state.M:.4f} case={res.case.value}")
