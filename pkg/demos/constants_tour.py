"""Closed-form constants for a few (N, lambda) pairs.

Run:  python3 demos/constants_tour.py
"""
from rhls.constants import constants_report

for N, lam, q in [(1, 2.0, 0.5), (3, 4.0, 0.7), (4, 12.0, 0.3), (5, 10.0, None)]:
    rep = constants_report(N, lam, q)
    print(f"N={N} lambda={lam:g} q={q}")
    print(f"  conformal q       {rep.conformal_q:.6f}   validity threshold {rep.validity_threshold:.6f}")
    print(f"  conformal C       {rep.conformal_constant_reflected:.6g}  (printed form: {rep.conformal_note or 'ok'})")
    print(f"  layer-cake A      {rep.A:.6g} at s = {rep.A_argmax_s:.4g}; Jensen B {rep.B_jensen}")
    print(f"  existence curves  qbar {rep.qbar:.5f}  strict {rep.qbar_strict:.5f}  crude {rep.qbar_crude}")
    if rep.regime:
        print(f"  alpha {rep.alpha:.4f}  regime {rep.regime}  interpolation constant {rep.lemma4_constant:.4g}")
