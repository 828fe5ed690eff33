"""The rescaled minimizer is a steady state of the aggregation-diffusion flow,
and a Gaussian of the same mass relaxes to it.

Run:  python3 demos/flow_stationarity.py
"""
import numpy as np

from rhls.flow import EvolveOptions, evolve, steady_state_from_minimizer
from rhls.kernel import build_table
from rhls.minimize import minimize_relaxed
from rhls.params import Params
from rhls.radial import make_grid, sample_profile, stretch_for_first_step

p = Params(1, 2.0, 0.5)
g = make_grid(1, 30.0, 128, stretch_for_first_step(128, 1e-4))
t = build_table(g, p.lam)
res = minimize_relaxed(p, g, table=t)
ss = steady_state_from_minimizer(res.state.rho, t, p, res.breakdown.I, res.breakdown.lq)
mass = float(g.weights @ ss.values)

tr = evolve(ss, p, t, EvolveOptions(t_final=1.0))
print(f"steady start: relative change of F over t=1 is {tr.free_energy_series[-1] / tr.free_energy_series[0] - 1:+.1e}")

g0 = sample_profile("gaussian", p, g, 1.0)
g0 = g0.scaled(mass / float(g.weights @ g0.values))
tr = evolve(g0, p, t, EvolveOptions(t_final=2.0))
for k in range(0, len(tr.times), max(1, len(tr.times) // 8)):
    print(f"t={tr.times[k]:.3f}  F={tr.free_energy_series[k]:.8f}")
l1 = float(g.weights @ np.abs(tr.final.values - ss.values)) / mass
print(f"relative L1 distance to the minimizer at t=2: {l1:.2e}")
