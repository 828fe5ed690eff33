"""Numeric minimizer against the conformal constant, with grid doubling.

Run:  python3 demos/conformal_check.py
"""
from rhls.constants import conformal_constant
from rhls.minimize import minimize_relaxed
from rhls.params import Params, conformal_q
from rhls.radial import make_grid, stretch_for_first_step

for N, lam in [(1, 2.0), (2, 2.0), (1, 1.0)]:
    p = Params(N, lam, conformal_q(N, lam))
    exact = conformal_constant(N, lam).reflected
    for r_max, n in [(30.0, 256), (60.0, 512)]:
        g = make_grid(N, r_max, n, stretch_for_first_step(n, 1e-5))
        res = minimize_relaxed(p, g)
        print(f"N={N} lambda={lam:g} n={n:4d}  C={res.C_estimate:.6f}  closed form {exact:.6f}  "
              f"rel gap {res.C_estimate / exact - 1:+.1e}  M={res.state.M:.1e}  {res.status}")
