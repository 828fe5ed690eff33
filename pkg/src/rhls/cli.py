"""Command-line front end.

Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import constants as cst
from .flow import EvolveOptions, evolve, external_mass, external_window, write_trace
from .kernel import build_table, interaction_energy, interaction_energy_oracle
from .minimize import MinimizeOptions, minimize_relaxed, result_to_dict, save_result
from .params import Params, classify, conformal_q, regularity_q, validity_threshold
from .radial import (
    PROFILE_KINDS,
    RadialDensity,
    make_grid,
    profile_on_grid,
    read_profile_csv,
    sample_profile,
    stretch_for_first_step,
)

log = logging.getLogger("rhls")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class InvalidInput(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {s!r}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, default=_default)


def _default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"cannot serialize {type(obj)}")


def _params(args) -> Params:
    if args.q is None:
        raise InvalidInput("--q is required")
    try:
        return Params(args.dim, args.lam, args.q)
    except ValueError as err:
        raise InvalidInput(str(err)) from err


def _grid(args, N):
    if args.stretch is not None:
        stretch = args.stretch
    else:
        stretch = stretch_for_first_step(args.grid_size, args.first_step)
    try:
        return make_grid(N, args.rmax, args.grid_size, stretch)
    except ValueError as err:
        raise InvalidInput(str(err)) from err


# -- constants --------------------------------------------------------------


def cmd_constants(args) -> int:
    try:
        rep = cst.constants_report(args.dim, args.lam, args.q)
    except ValueError as err:
        raise InvalidInput(str(err)) from err
    print(_dump(rep.to_dict()))
    return EXIT_OK


# -- minimize ---------------------------------------------------------------


def cmd_minimize(args) -> int:
    p = _params(args)
    if not p.is_valid:
        raise InvalidInput(
            f"q = {p.q} does not exceed the validity threshold N/(N+lambda) = {p.validity_threshold:.17g}"
        )
    g = _grid(args, p.N)
    opts = MinimizeOptions(
        tol=args.tol, max_iter=args.max_iter, damping=args.damping, restarts=args.restarts, relaxed=args.relaxed
    )
    res = minimize_relaxed(p, g, opts)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        data = save_result(res, out / "result.json", out / "profile.csv")
    else:
        data = result_to_dict(res)
    print(_dump(data))
    return EXIT_OK if res.converged else EXIT_NUMERIC


# -- phase diagram ----------------------------------------------------------


@dataclass
class PhasePoint:
    lam: float
    q: float
    regime: object
    qbar: float
    qbar_crude: float | None
    C_estimate: float | None = None
    M_star: float | None = None
    case_label: str | None = None


PHASE_HEADER = [
    "lambda",
    "q",
    "validity",
    "sign_class",
    "existence",
    "qbar",
    "qbar_crude",
    "q_validity",
    "q_conformal",
    "q_regularity",
    "q_light_grey",
    "q_dotted",
    "C_estimate",
    "M_star",
    "case",
]


def phase_points(N, lam_range, q_range, resolution, with_minimization=False, grid_args=None):
    """Rows of the (lambda, q) sweep in lexicographic order."""
    lams = np.linspace(*lam_range, resolution)
    qs = np.linspace(*q_range, resolution)
    rows = []
    for lam in lams:
        lam = float(lam)
        qb = cst.qbar(N, lam, "layercake")
        qc = cst.qbar(N, lam, "crude") if lam > 1 else None
        for q in qs:
            q = float(q)
            if not 0 < q < 1:
                continue
            p = Params(N, lam, q)
            reg = classify(p)
            pt = PhasePoint(lam, q, reg, qb, qc)
            if with_minimization and p.is_valid:
                g = make_grid(N, grid_args.rmax, grid_args.grid_size, stretch_for_first_step(grid_args.grid_size, grid_args.first_step))
                res = minimize_relaxed(p, g, MinimizeOptions(max_iter=grid_args.max_iter))
                if res.converged:
                    pt.C_estimate = res.C_estimate
                    pt.M_star = res.state.M
                    pt.case_label = res.case.value if res.case else None
            rows.append(pt)
    return rows


def _row(N, pt: PhasePoint):
    lam = pt.lam
    return [
        repr(lam),
        repr(pt.q),
        pt.regime.validity.value,
        pt.regime.sign_class.value,
        pt.regime.existence.value,
        repr(pt.qbar),
        "" if pt.qbar_crude is None else repr(pt.qbar_crude),
        repr(validity_threshold(N, lam)),
        repr(conformal_q(N, lam)),
        repr(regularity_q(N)),
        repr(min(regularity_q(N), conformal_q(N, lam))),
        repr(1.0 - lam / N),
        "" if pt.C_estimate is None else repr(pt.C_estimate),
        "" if pt.M_star is None else repr(pt.M_star),
        "" if pt.case_label is None else pt.case_label,
    ]


def write_phase_csv(N, rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PHASE_HEADER)
        for pt in rows:
            w.writerow(_row(N, pt))


_REGION_COLOR = {
    "NotApplicable": "#9a9a9a",
    "OpenRegion": "#5e5e5e",
    "RelaxedOnly": "#bdbdbd",
    "MinimizerGuaranteed": "#ffffff",
}


def write_phase_svg(N, rows, lam_range, q_range, path, size=(640, 480)):
    """Shaded regions plus the boundary curves, without plotting libraries."""
    W, H = size
    pad = 50
    l0, l1 = lam_range
    q0, q1 = q_range
    X = lambda lam: pad + (lam - l0) / (l1 - l0) * (W - 2 * pad)
    Y = lambda q: H - pad - (q - q0) / (q1 - q0) * (H - 2 * pad)
    lams = sorted({pt.lam for pt in rows})
    qs = sorted({pt.q for pt in rows})
    dl = (l1 - l0) / max(len(lams) - 1, 1)
    dq = (q1 - q0) / max(len(qs) - 1, 1)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">']
    for pt in rows:
        x0, x1 = X(pt.lam - dl / 2), X(pt.lam + dl / 2)
        y0, y1 = Y(pt.q + dq / 2), Y(pt.q - dq / 2)
        col = _REGION_COLOR[pt.regime.existence.value]
        out.append(
            f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" height="{y1 - y0:.2f}" fill="{col}" stroke="none"/>'
        )
    fine = np.linspace(max(l0, 1e-6), l1, 200)

    def poly(fn, style):
        pts = [(X(lam), Y(fn(lam))) for lam in fine]
        pts = [(x, y) for x, y in pts if math.isfinite(y)]
        s = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        out.append(f'<polyline points="{s}" fill="none" stroke="black" {style}/>')

    poly(lambda lam: validity_threshold(N, lam), 'stroke-width="1.5"')
    poly(lambda lam: min(regularity_q(N), conformal_q(N, lam)), 'stroke-width="1.5"')
    poly(lambda lam: conformal_q(N, lam), 'stroke-width="0.8"')
    poly(lambda lam: cst.qbar(N, lam, "crude") if lam > 1 else float("nan"), 'stroke-dasharray="6,4"')
    poly(lambda lam: 1.0 - lam / N, 'stroke-dasharray="1,3"')
    out.append(f'<rect x="{pad}" y="{pad}" width="{W - 2 * pad}" height="{H - 2 * pad}" fill="none" stroke="black"/>')
    out.append(f'<text x="{W / 2:.0f}" y="{H - 12}" text-anchor="middle" font-size="14">lambda</text>')
    out.append(f'<text x="14" y="{H / 2:.0f}" font-size="14">q</text>')
    for v, lab in ((l0, f"{l0:g}"), (l1, f"{l1:g}")):
        out.append(f'<text x="{X(v):.1f}" y="{H - pad + 16}" text-anchor="middle" font-size="11">{lab}</text>')
    for v in (q0, q1):
        out.append(f'<text x="{pad - 6}" y="{Y(v) + 4:.1f}" text-anchor="end" font-size="11">{v:g}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out))


def cmd_phase_diagram(args) -> int:
    lr = (args.lambda_min, args.lambda_max)
    qr = (args.q_min, args.q_max)
    if not (0 < lr[0] < lr[1]) or not (0 <= qr[0] < qr[1] <= 1):
        raise InvalidInput("need 0 < lambda-min < lambda-max and 0 <= q-min < q-max <= 1")
    if args.resolution < 8:
        raise InvalidInput("resolution must be at least 8")
    if args.dim < 1:
        raise InvalidInput("dimension must be >= 1")
    rows = phase_points(args.dim, lr, qr, args.resolution, args.with_minimization, args)
    out = args.out or "phase_diagram.csv"
    write_phase_csv(args.dim, rows, out)
    if args.svg:
        write_phase_svg(args.dim, rows, lr, qr, args.svg)
    print(_dump({"rows": len(rows), "csv": str(out), "svg": args.svg}))
    return EXIT_OK


# -- evolve -----------------------------------------------------------------


def cmd_evolve(args) -> int:
    p = _params(args)
    g = _grid(args, p.N)
    init = args.init
    if init in PROFILE_KINDS:
        if init == "annulus":
            rho0 = sample_profile(init, p, g, 2.0)
        elif init == "external":
            rho0 = sample_profile(init, p, g, 0.0)
        else:
            rho0 = sample_profile(init, p, g)
    else:
        try:
            r, v = read_profile_csv(init)
        except (OSError, ValueError) as err:
            raise InvalidInput(f"cannot read initial profile: {err}") from err
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise InvalidInput("initial profile must be finite and nonnegative")
        rho0 = profile_on_grid(r, v, g)
    if not rho0.values.max() > 0:
        raise InvalidInput("initial profile is identically zero")
    if args.mass is not None:
        rho0 = rho0.scaled(args.mass / float(g.weights @ rho0.values))
    table = build_table(g, p.lam) if args.drift == "interaction" else None
    opts = EvolveOptions(
        t_final=args.t_final, cfl=args.cfl, drift=args.drift, snapshot_every=args.snapshot_every
    )
    trace = evolve(rho0, p, table, opts)
    out = Path(args.out or "evolve_out")
    write_trace(trace, out)
    summary = {
        "status": trace.status,
        "steps": trace.steps,
        "t_end": float(trace.times[-1]),
        "mass_drift": float(np.ptp(trace.mass_series) / trace.mass_series[0]),
        "free_energy_start": float(trace.free_energy_series[0]),
        "free_energy_end": float(trace.free_energy_series[-1]),
        "max_energy_increase": trace.max_energy_increase,
        "rejected_steps": trace.rejected_steps,
        "concentration_flag": trace.concentration_flag,
        "concentration_reason": trace.concentration_reason,
        "out": str(out),
    }
    print(_dump(summary))
    return EXIT_NUMERIC if trace.aborted else EXIT_OK


# -- external ---------------------------------------------------------------


def cmd_external(args) -> int:
    p = _params(args)
    if args.mu < -1:
        raise InvalidInput(f"mu must be >= -1, got {args.mu}")
    lo, hi = external_window(p)
    warn = None
    if not (p.lam > 2 and lo < p.q < hi):
        warn = f"q = {p.q} outside the window ({lo:.6g}, {hi:.6g}) or lambda <= 2"
        print(f"warning: {warn}", file=sys.stderr)
    Mmu = external_mass(p, args.mu)
    Mc = external_mass(p, -1.0)
    print(_dump({"M_of_mu": Mmu, "critical_mass": Mc, "mu": args.mu, "warning": warn}))
    return EXIT_OK


# -- oracle -----------------------------------------------------------------


def cmd_oracle(args) -> int:
    p = _params(args)
    if p.N > 3:
        raise InvalidInput("the Cartesian oracle supports N <= 3")
    g = _grid(args, p.N)
    rho = sample_profile(args.profile, p, g)
    table = build_table(g, p.lam)
    val, err = interaction_energy_oracle(rho, p.N, p.lam, samples=args.samples, seed=args.seed)
    print(_dump({"radial": interaction_energy(rho, table), "oracle": val, "oracle_std_error": err, "seed": args.seed}))
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rhls", description="Reverse HLS numerical laboratory")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, need_q=True):
        sp.add_argument("--dim", type=int, required=True)
        sp.add_argument("--lambda", dest="lam", type=float, required=True)
        sp.add_argument("--q", type=float, required=need_q, default=None)

    def grid_opts(sp, rmax=100.0, n=512):
        sp.add_argument("--rmax", type=float, default=rmax)
        sp.add_argument("--grid-size", type=int, default=n)
        sp.add_argument("--stretch", type=float, default=None)
        sp.add_argument("--first-step", type=float, default=1e-4, help="r_1 / r_max when --stretch is not given")

    sp = sub.add_parser("constants", help="closed-form constants and regime")
    common(sp, need_q=False)
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("minimize", help="relaxed minimization of the quotient")
    common(sp)
    grid_opts(sp)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--max-iter", type=int, default=20000)
    sp.add_argument("--damping", type=float, default=0.5)
    sp.add_argument("--restarts", type=int, default=4)
    sp.add_argument("--relaxed", type=_bool, default=True)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_minimize)

    sp = sub.add_parser("phase-diagram", help="(lambda, q) sweep")
    sp.add_argument("--dim", type=int, required=True)
    sp.add_argument("--lambda-min", type=float, default=0.5)
    sp.add_argument("--lambda-max", type=float, default=20.0)
    sp.add_argument("--q-min", type=float, default=0.0)
    sp.add_argument("--q-max", type=float, default=1.0)
    sp.add_argument("--resolution", type=int, default=40)
    sp.add_argument("--with-minimization", action="store_true")
    grid_opts(sp, rmax=100.0, n=256)
    sp.add_argument("--max-iter", type=int, default=20000)
    sp.add_argument("--out", default=None)
    sp.add_argument("--svg", default=None)
    sp.set_defaults(func=cmd_phase_diagram)

    sp = sub.add_parser("evolve", help="aggregation-diffusion evolution")
    common(sp)
    grid_opts(sp, rmax=30.0, n=256)
    sp.add_argument("--init", default="gaussian", help=f"one of {PROFILE_KINDS} or a r,rho CSV path")
    sp.add_argument("--mass", type=float, default=None)
    sp.add_argument("--drift", choices=("interaction", "external"), default="interaction")
    sp.add_argument("--t-final", type=float, default=1.0)
    sp.add_argument("--cfl", type=float, default=0.4)
    sp.add_argument("--snapshot-every", type=float, default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_evolve)

    sp = sub.add_parser("external", help="mass of the external-potential profiles")
    common(sp)
    sp.add_argument("--mu", type=float, required=True)
    sp.set_defaults(func=cmd_external)

    sp = sub.add_parser("oracle", help="radial energy against the Cartesian estimate")
    common(sp)
    grid_opts(sp, rmax=4.0, n=256)
    sp.add_argument("--profile", default="gaussian", choices=("gaussian", "ball", "lemma4"))
    sp.add_argument("--samples", type=int, default=2**16)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except InvalidInput as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (ArithmeticError, RuntimeError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
