"""Above the critical mass of the external model the excess collapses to the
origin while the outer profile approaches u_{-1}.

Run:  python3 demos/external_concentration.py
"""
from rhls.flow import EvolveOptions, evolve, external_mass, external_model
from rhls.params import Params
from rhls.radial import make_grid, sample_profile, stretch_for_first_step

p = Params(5, 4.0, 0.5)
g = make_grid(5, 4.0, 128, stretch_for_first_step(128, 1e-3))
for mu in (2.0, 0.0, -0.5, -1.0):
    print(f"mass of u_mu at mu={mu:+.1f}: {external_mass(p, mu):.6f}")
Mc = external_mass(p, -1.0)
for factor in (0.8, 1.5):
    rho = sample_profile("gaussian", p, g, 0.7)
    rho = rho.scaled(factor * Mc / float(g.weights @ rho.values))
    tr = evolve(rho, p, None, EvolveOptions(t_final=12.0, drift="external"))
    u = external_model(p, -1.0, g).profile.values
    far = g.nodes > 0.5
    gap = float(g.weights[far] @ abs(tr.final.values[far] - u[far])) / float(g.weights[far] @ u[far])
    print(f"mass {factor} x critical: concentration {tr.concentration_flag}, outer L1 gap to u_-1 {gap:.2e}")
