"""Relaxed minimization of the reverse HLS quotient.

The unknowns are a radial non-increasing profile ``rho`` and an atom of mass
``M`` at the origin.  The quotient is

    Q[rho, M] = (I + 2 M m_lam) / ((mass + M)^alpha lq^((2 - alpha)/q))

with ``I`` the interaction energy and ``m_lam`` the lam-th moment.  The solver
is a damped Picard iteration on the Euler-Lagrange profile map, with the
optimal atom computed in closed form after every step and the two gauge
freedoms (amplitude and dilation) removed by renormalizing to
``mass + M = 1`` and ``lq = 1``.

Two discretization devices matter in practice.  Beyond ``r_max`` the profile
is continued by its Euler-Lagrange tail ``r^(-lam/(1-q))`` (see
``kernel.PowerTail``), because the moment and L^q integrals of that tail
decay only like ``r_max^(-(lam q/(1-q) - N))``.  At the origin, node 0 holds
the cell average of the fixed-point profile under a quadratic model of the
potential, which stays finite when the profile is singular like
``r^(-2/(1-q))``.
"""
from __future__ import annotations

import enum
import json
import logging
import math
import weakref
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.integrate import quad
from scipy.optimize import isotonic_regression

from .kernel import KernelTable, PowerTail, build_table, cell0_self_kernel, power_tail
from .params import Params
from .radial import RadialDensity, RadialGrid, dilate, sample_profile, write_profile_csv

log = logging.getLogger(__name__)

CASE_RTOL = 1e-6
SUPPORT_FLOOR = 1e-12


class Case(enum.Enum):
    BOUNDED_NO_MASS = "BoundedNoMass"
    UNBOUNDED_NO_MASS = "UnboundedNoMass"
    POSITIVE_MASS = "PositiveMass"
    CONFORMAL_KNOWN = "ConformalKnown"


class StepRejected(RuntimeError):
    """The Euler-Lagrange map is undefined at the current iterate."""

    def __init__(self, message: str, node: int | None = None):
        super().__init__(message)
        self.node = node


@dataclass(eq=False)
class RelaxedState:
    rho: RadialDensity
    M: float = 0.0

    def __post_init__(self):
        self.M = float(self.M)
        if not (math.isfinite(self.M) and self.M >= 0):
            raise ValueError(f"atom mass must be finite and >= 0, got {self.M}")
        if not np.any(self.rho.values > 0):
            raise ValueError("profile is identically zero")

    def scaled(self, c: float) -> RelaxedState:
        return RelaxedState(self.rho.scaled(c), c * self.M)


@dataclass(frozen=True)
class QuotientBreakdown:
    I: float
    mass: float
    lq: float
    moment: float
    M: float
    Q: float

    @classmethod
    def compose(cls, I, mass, lq, moment, M, p: Params) -> QuotientBreakdown:
        if not lq > 0:
            raise ValueError("L^q integral vanishes: the profile is identically zero")
        a = p.alpha
        Q = (I + 2.0 * M * moment) / ((mass + M) ** a * lq ** ((2.0 - a) / p.q))
        return cls(float(I), float(mass), float(lq), float(moment), float(M), float(Q))


class _Sums(NamedTuple):
    phi: np.ndarray  # lam (W_lam * rho) at the nodes
    I: float
    mass: float
    lq: float
    moment: float


_SELF00: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def _self00(table: KernelTable) -> float:
    """Self-interaction of the innermost cell; the table entry there is 0."""
    if table.grid.nodes[0] != 0:
        return 0.0
    v = _SELF00.get(table)
    if v is None:
        v = _SELF00[table] = cell0_self_kernel(table.grid, table.lam)
    return v


def _sums(values: np.ndarray, table: KernelTable, p: Params, tail: PowerTail | None) -> _Sums:
    g = table.grid
    w = g.weights
    m = w * values
    phi = table.entries @ m
    # without this a spike at the origin node costs no interaction energy
    phi[0] += _self00(table) * m[0]
    I = float(m @ phi)
    mass = float(m.sum())
    lq = float(w @ values**p.q)
    moment = float(m @ g.nodes**p.lam)
    if tail is not None:
        last = float(values[-1])
        if last > 0:
            phi = phi + last * tail.cross
            I += 2.0 * last * float(tail.cross @ m) + tail.self_term * last**2
            mass += tail.mass(last)
            lq += tail.c_power(p.q) * last**p.q
            moment += tail.moment(last)
    return _Sums(phi, I, mass, lq, moment)


def _check(state: RelaxedState, table: KernelTable, p: Params):
    if not state.rho.grid.same_as(table.grid):
        raise ValueError("state and kernel table live on different grids")
    if table.grid.N != p.N or table.lam != p.lam:
        raise ValueError("kernel table does not match the parameters")


def quotient(
    state: RelaxedState, table: KernelTable, p: Params, tail: PowerTail | None = None
) -> QuotientBreakdown:
    """Evaluate Q[rho, M] and its ingredients."""
    _check(state, table, p)
    s = _sums(state.rho.values, table, p, tail)
    return QuotientBreakdown.compose(s.I, s.mass, s.lq, s.moment, state.M, p)


def optimal_mass_step(I: float, moment: float, mass: float, alpha: float) -> float:
    """Best atom for fixed rho: minimizes (A + M)/(B + M)^alpha over M >= 0.

    A = I/(2 moment), B = mass.
    """
    if alpha >= 1:
        raise ValueError(f"alpha = {alpha} >= 1 lies outside the validity region")
    if not (I > 0 and moment > 0 and mass > 0):
        raise ValueError("I, moment and mass must be positive")
    if alpha <= 0:
        return 0.0
    A = I / (2.0 * moment)
    if alpha * A <= mass:
        return 0.0
    return (alpha * A - mass) / (1.0 - alpha)


def origin_cell_average(d0: float, c: float, h: float, N: int, power: float) -> float:
    """Average of ``(d0 + c r^2)^(-power)`` over the ball of radius ``h`` in R^N."""
    if d0 < 0 or c < 0 or (d0 == 0 and c == 0):
        raise ValueError("the quadratic model must be nonnegative and not identically zero")
    if c == 0:
        return d0 ** (-power)
    eps = d0 / (c * h * h)
    half = 0.5 * N
    # avg = (N/2) (c h^2)^-power int_0^1 v^(N/2-1) (eps + v)^-power dv
    if eps > 1.0:
        f = lambda v: (1.0 + v / eps) ** (-power)
        val, _ = quad(f, 0.0, 1.0, weight="alg", wvar=(half - 1.0, 0.0), epsabs=0.0, epsrel=1e-12)
        return half * d0 ** (-power) * val
    if eps == 0:
        if half <= power:
            return math.inf
        return half * (c * h * h) ** (-power) / (half - power)
    # v = eps u, x = u/(1 + u):
    # int_0^1 ... dv = eps^(N/2-power) int_0^X x^(N/2-1) (1-x)^(power-N/2-1) dx, X = 1/(1+eps)
    e = power - half - 1.0
    lo, _ = quad(lambda x: (1.0 - x) ** e, 0.0, 0.5, weight="alg", wvar=(half - 1.0, 0.0), epsabs=0.0, epsrel=1e-12)
    # y = 1 - x = exp(s) on [eps/(1+eps), 1/2]
    s0 = math.log(eps / (1.0 + eps))
    g = lambda s: (1.0 - math.exp(s)) ** (half - 1.0) * math.exp((e + 1.0) * s)
    hi, _ = quad(g, s0, math.log(0.5), epsabs=0.0, epsrel=1e-12, limit=200)
    return half * (c * h * h) ** (-power) * eps ** (half - power) * (lo + hi)


def el_target(
    state: RelaxedState, table: KernelTable, p: Params, tail: PowerTail | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Profile implied by the Euler-Lagrange equation at ``state``.

    Returns ``(target, D)`` where ``D(r) = 2 (phi + M r^lam)/num - alpha/(mass + M)``
    and ``target = (lq D/(2 - alpha))^(-1/(1-q))``; node 0 holds the cell
    average of the same expression under ``D ~ D(0) + c r^2``.
    Raises ``StepRejected`` when ``D <= 0`` at some node.
    """
    _check(state, table, p)
    g = table.grid
    r = g.nodes
    a = p.alpha
    s = _sums(state.rho.values, table, p, tail)
    M = state.M
    num = s.I + 2.0 * M * s.moment
    D = 2.0 * (s.phi + M * r**p.lam) / num - a / (s.mass + M)
    # at an optimal atom D(0) vanishes exactly; allow rounding below zero
    scale = 2.0 * s.phi[0] / num + abs(a) / (s.mass + M)
    if D[0] < 0 and D[0] >= -1e-10 * scale:
        D[0] = 0.0
    bad = np.flatnonzero(~(D > 0))
    if bad.size and (bad[0] != 0 or D[0] < 0):
        node = int(bad[0]) if bad[0] != 0 or D[0] < 0 else int(bad[1])
        raise StepRejected(f"Euler-Lagrange denominator D = {D[node]:.3e} <= 0 at node {node}", node)
    kap = s.lq / (2.0 - a)
    power = 1.0 / (1.0 - p.q)
    target = np.empty_like(r)
    target[1:] = (kap * D[1:]) ** (-power)
    curv = max((D[1] - D[0]) / r[1] ** 2, 0.0)
    if r[0] == 0:
        h = g.faces[1]
        d0, c0 = kap * D[0], kap * curv
        if 0.5 * g.N <= power and d0 < 1e-8 * c0 * h * h:
            # the average diverges (or nearly so): use the mid-radius value
            target[0] = (d0 + 0.25 * c0 * h * h) ** (-power)
        else:
            target[0] = origin_cell_average(d0, c0, h, g.N, power)
    else:
        target[0] = (kap * D[0]) ** (-power)
    if not np.all(np.isfinite(target)):
        raise StepRejected("origin singularity is not integrable at this iterate", 0)
    return target, D


def el_residual(state: RelaxedState, table: KernelTable, p: Params, tail: PowerTail | None = None) -> float:
    """Sup over the support of ``|lq D / ((2 - alpha) rho^(q-1)) - 1|``.

    This is the Euler-Lagrange defect measured relative to ``rho^(q-1)``, so it
    is invariant under scaling of (rho, M) and under dilations.
    """
    try:
        target, _ = el_target(state, table, p, tail)
    except StepRejected:
        return math.inf
    v = state.rho.values
    keep = v > SUPPORT_FLOOR * v.max()
    ratio = (target[keep] / v[keep]) ** (p.q - 1.0) - 1.0
    return float(np.max(np.abs(ratio)))


def _renormalize(
    values: np.ndarray, M: float, table: KernelTable, p: Params, tail: PowerTail | None, relaxed: bool
) -> RelaxedState:
    g = table.grid
    s = _sums(values, table, p, tail)
    # gauge lq / (mass + M)^q = 1: scale invariant, so a normalized state is
    # mapped to itself
    tau = (s.lq / (s.mass + M) ** p.q) ** (1.0 / (p.N * (1.0 - p.q)))
    values = dilate(RadialDensity(g, values), tau).values
    if np.any(np.diff(values) > 0):
        values = isotonic_regression(values, weights=g.weights, increasing=False).x
    s = _sums(values, table, p, tail)
    if relaxed:
        M = optimal_mass_step(s.I, s.moment, s.mass, p.alpha)
    c = 1.0 / (s.mass + M)
    return RelaxedState(RadialDensity(g, c * values), c * M)


def el_fixed_point_step(
    state: RelaxedState,
    table: KernelTable,
    p: Params,
    damping: float = 0.5,
    tail: PowerTail | None = None,
    relaxed: bool = True,
) -> RelaxedState:
    """One damped Picard step: blend toward the EL profile, re-optimize M, renormalize."""
    if not 0 < damping <= 1:
        raise ValueError(f"damping must lie in (0, 1], got {damping}")
    target, _ = el_target(state, table, p, tail)
    v = state.rho.values
    M = state.M if relaxed else 0.0
    return _renormalize((1.0 - damping) * v + damping * target, M, table, p, tail, relaxed)


# -- driver -----------------------------------------------------------------


@dataclass
class MinimizeOptions:
    tol: float = 1e-8
    max_iter: int = 20000
    damping: float = 0.5
    restarts: int = 4
    relaxed: bool = True
    tail: bool = True
    descent_rtol: float = 1e-9
    min_damping: float = 1e-8


@dataclass
class Diagnostics:
    origin_value_prediction: float | None = None
    origin_exponent_fit: float | None = None
    M_star_prediction: float = 0.0
    origin_value: float | None = None
    origin_exponent_expected: float | None = None
    mass_gap: float | None = None
    checks: dict = field(default_factory=dict)
    curvature: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


@dataclass
class RestartRecord:
    start: str
    Q: float
    converged: bool
    status: str
    iterations: int
    residual: float
    increment: float
    M: float


@dataclass(eq=False)
class MinimizeResult:
    params: Params
    state: RelaxedState
    C_estimate: float
    residual: float
    iterations: int
    case: Case | None
    diagnostics: Diagnostics
    converged: bool
    status: str
    increment: float
    breakdown: QuotientBreakdown
    relaxed: bool = True
    restarts: list = field(default_factory=list)
    max_ascent: float = 0.0
    tail_mass_fraction: float = 0.0


RESTART_STARTS = ("lemma4", "gaussian", "ball", "atom")


def _initial_state(kind: str, p: Params, table: KernelTable, tail, relaxed: bool) -> RelaxedState:
    g = table.grid
    if kind == "atom":
        v = sample_profile("lemma4", p, g).values
        v = v / (g.weights @ v)
        st = _renormalize(v, 0.0, table, p, tail, relaxed=False)
        if relaxed:
            # seed with half of the total weight in the atom
            return RelaxedState(st.rho.scaled(0.5), 0.5)
        return st
    v = sample_profile(kind, p, g).values
    v = v / (g.weights @ v)
    return _renormalize(v, 0.0, table, p, tail, relaxed)


def _increment(new: RelaxedState, old: RelaxedState) -> float:
    a, b = new.rho.values, old.rho.values
    keep = b > SUPPORT_FLOOR * b.max()
    d = np.max(np.abs(a[keep] / b[keep] - 1.0))
    return float(max(d, abs(new.M - old.M)))


def _solve(state: RelaxedState, table, p, tail, opts: MinimizeOptions):
    Qc = quotient(state, table, p, tail).Q
    d = opts.damping
    good = 0
    status = "max-iter"
    inc = math.inf
    ascent = 0.0
    grow = 0
    d_prev = d
    it = 0
    for it in range(1, opts.max_iter + 1):
        try:
            target, _ = el_target(state, table, p, tail)
        except StepRejected as err:
            status = "boundary-degenerate"
            log.info("step rejected: %s", err)
            break
        v = state.rho.values
        M0 = state.M if opts.relaxed else 0.0
        while True:
            cand = _renormalize((1.0 - d) * v + d * target, M0, table, p, tail, opts.relaxed)
            Qn = quotient(cand, table, p, tail).Q
            if math.isfinite(Qn) and Qn <= Qc * (1.0 + opts.descent_rtol):
                break
            d *= 0.5
            good = 0
            if d < opts.min_damping:
                break
        if d < opts.min_damping:
            status = "stalled"
            break
        prev, inc = inc, _increment(cand, state) / d
        ascent = max(ascent, (Qn - Qc) / Qc)
        state, Qc = cand, Qn
        # near the fixed point, an increment growing at constant damping is an
        # oscillating mode too small for the Q test to see
        grow = grow + 1 if (inc > prev and inc < 1e-2 and d == d_prev) else 0
        d_prev = d
        good += 1
        if grow >= 3:
            d *= 0.5
            good = grow = 0
        elif good >= 5:
            d = min(1.0, 1.2 * d)
            good = 0
        if inc < opts.tol:
            status = "converged"
            break
    return state, Qc, status, it, inc, ascent


def minimize_relaxed(
    p: Params,
    grid: RadialGrid,
    opts: MinimizeOptions | None = None,
    table: KernelTable | None = None,
) -> MinimizeResult:
    """Minimize Q over (rho, M) from several starting profiles; keep the best.

    Starts: the interpolation profile (1 + r^lam)^(-1/(1-q)), a Gaussian, a
    ball indicator, and the interpolation profile with half the weight moved
    into the atom.
    """
    opts = opts or MinimizeOptions()
    if not p.is_valid:
        raise ValueError(f"q = {p.q} must exceed N/(N+lambda) = {p.validity_threshold}")
    if grid.N != p.N:
        raise ValueError("grid dimension does not match parameters")
    table = table if table is not None else build_table(grid, p.lam)
    tail = power_tail(grid, p.lam, p.lam / (1.0 - p.q)) if opts.tail else None

    records = []
    runs = []
    for kind in RESTART_STARTS[: max(1, opts.restarts)]:
        try:
            st0 = _initial_state(kind, p, table, tail, opts.relaxed)
        except (ValueError, StepRejected) as err:
            log.info("start %s unusable: %s", kind, err)
            continue
        st, Q, status, its, inc, ascent = _solve(st0, table, p, tail, opts)
        res = el_residual(st, table, p, tail)
        records.append(RestartRecord(kind, Q, status == "converged", status, its, res, inc, st.M))
        runs.append((st, Q, status, its, inc, ascent))

    if not runs:
        raise RuntimeError("no starting profile could be initialized")
    conv = [i for i, r in enumerate(records) if r.converged]
    pick = min(conv, key=lambda i: records[i].Q) if conv else min(range(len(runs)), key=lambda i: records[i].increment)
    st, Q, status, its, inc, ascent = runs[pick]
    br = quotient(st, table, p, tail)
    tail_frac = tail.mass(float(st.rho.values[-1])) / (br.mass + br.M) if tail is not None else 0.0
    diag = Diagnostics()
    if len(conv) > 1:
        qs = [records[i].Q for i in conv]
        diag.checks["restart_spread"] = (max(qs) - min(qs)) / min(qs)
        diag.checks["restarts_agree"] = diag.checks["restart_spread"] <= 0.01
    result = MinimizeResult(
        params=p,
        state=st,
        C_estimate=br.Q,
        residual=el_residual(st, table, p, tail),
        iterations=its,
        case=None,
        diagnostics=diag,
        converged=status == "converged",
        status=status,
        increment=inc,
        breakdown=br,
        relaxed=opts.relaxed,
        restarts=records,
        max_ascent=max(0.0, ascent),
        tail_mass_fraction=float(tail_frac),
    )
    if result.converged:
        result = classify_dichotomy(result, table, p, tail)
    return result


# -- classification ---------------------------------------------------------


def origin_value_formula(I: float, mass: float, lq: float, moment: float, p: Params) -> float | None:
    """Value at the origin of a bounded critical point without atom (None if unbounded)."""
    a = p.alpha
    den = lq * (2.0 * moment * mass - a * I)
    if not den > 0:
        return None
    return ((2.0 - a) * I * mass / den) ** (1.0 / (1.0 - p.q))


def atom_formula(I: float, mass: float, moment: float, p: Params) -> float:
    """Atom mass predicted by the first-order condition in M (may be negative)."""
    a = p.alpha
    return (a * I - 2.0 * moment * mass) / (2.0 * (1.0 - a) * moment)


def _inner_decade(grid: RadialGrid) -> np.ndarray:
    r = grid.nodes
    return np.flatnonzero((r > 0) & (r <= 10.0 * r[1] * (1 + 1e-12)))


def origin_exponent(rho: RadialDensity) -> float:
    """Least-squares slope of log rho against log r on the innermost decade."""
    idx = _inner_decade(rho.grid)
    r, v = rho.grid.nodes[idx], rho.values[idx]
    return float(np.polyfit(np.log(r), np.log(v), 1)[0])


def origin_curvature(state: RelaxedState, table: KernelTable, p: Params, tail: PowerTail | None = None) -> dict:
    """Compare ``lam (W*rho)(r) - lam (W*rho)(0)`` with ``C r^2`` near the origin.

    Two candidate constants are reported: ``step3 = lam (lam - 1)/2 int |y|^(lam-2) rho``
    and the spherical-average value ``lam (N + lam - 2)/(2N) int |y|^(lam-2) rho``.
    """
    g = table.grid
    v = state.rho.values
    s = _sums(v, table, p, tail)
    idx = _inner_decade(g)
    r = g.nodes[idx]
    dphi = s.phi[idx] - s.phi[0]
    fit = float((r**2 @ dphi) / (r**2 @ r**2))
    w = g.weights
    with np.errstate(divide="ignore", invalid="ignore"):
        pw = np.where(g.nodes > 0, g.nodes ** (p.lam - 2.0), 0.0 if p.lam > 2 else np.nan)
    mom = float((w * v) @ pw)
    if tail is not None:
        mom += tail.c_moment_lm2 * float(v[-1])
    lam, N = p.lam, p.N
    c3 = 0.5 * lam * (lam - 1.0) * mom
    ce = 0.5 * lam * (1.0 + (lam - 2.0) / N) * mom
    return {
        "fitted": fit,
        "step3": c3,
        "expansion": ce,
        "step3_rel_error": abs(fit / c3 - 1.0) if c3 else math.inf,
        "expansion_rel_error": abs(fit / ce - 1.0) if ce else math.inf,
        "step3_ok": bool(c3 and abs(fit / c3 - 1.0) <= 0.05),
        "expansion_ok": bool(ce and abs(fit / ce - 1.0) <= 0.05),
    }


def lower_bound(p: Params) -> tuple[float | None, str]:
    """Known lower bound on the sharp constant at ``p`` and its source."""
    from .constants import conformal_constant, lemma4_constant

    a = p.alpha
    if 0 < a < 1:
        c = lemma4_constant(p, mode="explicit")
        return c ** (2.0 - a), "interpolation"
    cc = conformal_constant(p.N, p.lam)
    return cc.operative, "conformal"


def classify_dichotomy(
    result: MinimizeResult, table: KernelTable, p: Params, tail: PowerTail | None = None
) -> MinimizeResult:
    """Attach the case label and the origin / atom consistency diagnostics."""
    if not result.converged:
        raise ValueError("classification needs a converged result")
    st = result.state
    br = quotient(st, table, p, tail)
    a = p.alpha
    d = replace(result.diagnostics)
    d.checks = dict(d.checks)
    d.notes = list(d.notes)
    crit = 0.5 * a * br.I / br.moment
    gap = (br.mass - crit) / br.mass
    d.mass_gap = float(gap)
    raw = atom_formula(br.I, br.mass, br.moment, p) if a < 1 else math.inf
    d.M_star_prediction = float(max(raw, 0.0)) if 0 < a < 1 else 0.0
    d.origin_exponent_expected = -2.0 / (1.0 - p.q)
    rho0 = float(st.rho.values[0])
    d.origin_value = rho0
    singular_fit = origin_exponent(st.rho)
    asymptote_applies = p.lam > 2

    if p.is_conformal:
        case = Case.CONFORMAL_KNOWN
    elif a <= 0:
        unbounded = singular_fit < 0.5 * d.origin_exponent_expected
        case = Case.UNBOUNDED_NO_MASS if unbounded else Case.BOUNDED_NO_MASS
    elif abs(gap) <= CASE_RTOL:
        case = Case.UNBOUNDED_NO_MASS
    elif st.M > 0:
        case = Case.POSITIVE_MASS
    else:
        case = Case.BOUNDED_NO_MASS

    # first-order condition in M, applied exactly as in the M-step
    if 0 < a < 1:
        expect_atom = a * br.I / (2.0 * br.moment) > br.mass
        d.checks["sign_test_ok"] = bool(expect_atom == (st.M > 0)) or abs(gap) <= CASE_RTOL
        if st.M > 0:
            d.checks["M_rel_error"] = abs(st.M - d.M_star_prediction) / st.M
            d.checks["M_consistent"] = d.checks["M_rel_error"] <= 1e-4

    if case in (Case.BOUNDED_NO_MASS, Case.CONFORMAL_KNOWN, Case.UNBOUNDED_NO_MASS):
        pred = origin_value_formula(br.I, br.mass, br.lq, br.moment, p)
        d.origin_value_prediction = pred
        if pred is not None and case != Case.UNBOUNDED_NO_MASS:
            d.checks["origin_value_rel_error"] = abs(rho0 / pred - 1.0)
            d.checks["origin_value_ok"] = d.checks["origin_value_rel_error"] <= 0.01
    if case in (Case.UNBOUNDED_NO_MASS, Case.POSITIVE_MASS):
        if asymptote_applies or a <= 0:
            d.origin_exponent_fit = singular_fit
            rel = abs(singular_fit / d.origin_exponent_expected - 1.0)
            d.checks["exponent_rel_error"] = rel
            d.checks["exponent_ok"] = rel <= 0.05
        else:
            d.notes.append("origin asymptote not applicable for lambda <= 2")
    if case in (Case.BOUNDED_NO_MASS, Case.CONFORMAL_KNOWN) and p.lam >= 2:
        d.curvature = origin_curvature(st, table, p, tail)

    lb, src = lower_bound(p)
    if lb is not None:
        d.bounds = {"lower_bound": lb, "source": src, "above_lower_bound": bool(result.C_estimate >= lb * (1 - 1e-3))}
    return replace(result, case=case, diagnostics=d)


def trial_quotients(
    p: Params, table: KernelTable, tail: PowerTail | None = None, relaxed: bool = True
) -> dict[str, float]:
    """Quotients of the named trial profiles, each with its optimal atom."""
    g = table.grid
    out = {}
    trials = [("lemma4", None), ("gaussian", 0.5), ("gaussian", 2.0), ("ball", 1.0), ("ball", 0.1)]
    for kind, par in trials:
        v = sample_profile(kind, p, g, par).values
        s = _sums(v, table, p, tail)
        M = optimal_mass_step(s.I, s.moment, s.mass, p.alpha) if relaxed else 0.0
        out[f"{kind}({par})" if par is not None else kind] = QuotientBreakdown.compose(
            s.I, s.mass, s.lq, s.moment, M, p
        ).Q
    return out


# -- serialization ----------------------------------------------------------


def result_to_dict(result: MinimizeResult, profile_csv: str | None = None) -> dict:
    p = result.params
    g = result.state.rho.grid
    d = asdict(result.diagnostics)
    return {
        "N": p.N,
        "lambda": p.lam,
        "q": p.q,
        "alpha": p.alpha,
        "C_estimate": result.C_estimate,
        "residual": result.residual,
        "increment": result.increment,
        "iterations": result.iterations,
        "converged": result.converged,
        "status": result.status,
        "case": result.case.value if result.case else None,
        "relaxed": result.relaxed,
        "M": result.state.M,
        "breakdown": asdict(result.breakdown),
        "diagnostics": d,
        "restarts": [asdict(r) for r in result.restarts],
        "max_ascent": result.max_ascent,
        "tail_mass_fraction": result.tail_mass_fraction,
        "grid": {"N": g.N, "n": g.n, "r_max": g.r_max, "stretch": g.stretch},
        "profile_csv": profile_csv,
    }


def save_result(result: MinimizeResult, json_path: str | Path, csv_path: str | Path | None = None) -> dict:
    """Write the result as JSON plus a ``r,rho`` profile CSV next to it."""
    json_path = Path(json_path)
    csv_path = Path(csv_path) if csv_path is not None else json_path.with_suffix(".csv")
    write_profile_csv(result.state.rho, csv_path)
    data = result_to_dict(result, csv_path.name)
    json_path.write_text(json.dumps(data, indent=2, default=_json_default))
    return data


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    raise TypeError(f"cannot serialize {type(obj)}")
