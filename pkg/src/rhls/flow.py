"""Free energy, optimal dilation and the aggregation-diffusion flow.

The flow is

    d rho/dt = Lap rho^q + div(rho grad(W * rho)),   W(x) = |x|^lam / lam,

the Wasserstein gradient flow of F[rho] = I/(2 lam) - lq/(1 - q).  Its steady
states satisfy q/(1-q) rho^(q-1) = mu + W * rho.  The external-potential
variant replaces W * rho by V(x) = 1 + |x|^2/2 + |x|^lam/lam.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from .kernel import KernelTable, interaction_energy, potential
from .params import Params
from .radial import RadialDensity, RadialGrid, integrals, sample_profile, sphere_area, write_profile_csv

log = logging.getLogger(__name__)

TINY_RHO = 1e-12
ENERGY_RTOL = 1e-12
MAX_HALVINGS = 40


def _check(rho: RadialDensity, table: KernelTable, p: Params):
    if not rho.grid.same_as(table.grid):
        raise ValueError("density and kernel table live on different grids")
    if table.grid.N != p.N or table.lam != p.lam:
        raise ValueError("kernel table does not match the parameters")


def free_energy(rho: RadialDensity, table: KernelTable, p: Params) -> float:
    """F = I/(2 lam) - lq/(1 - q)."""
    _check(rho, table, p)
    I = interaction_energy(rho, table)
    lq = float(rho.grid.weights @ rho.values**p.q)
    return I / (2.0 * p.lam) - lq / (1.0 - p.q)


def external_potential(r, lam: float):
    r = np.asarray(r, dtype=float)
    return 1.0 + 0.5 * r**2 + r**lam / lam


def external_free_energy(rho: RadialDensity, p: Params) -> float:
    """int rho V - lq/(1 - q), the Lyapunov functional of the external flow."""
    g = rho.grid
    v = rho.values
    return float(g.weights @ (v * external_potential(g.nodes, p.lam))) - float(g.weights @ v**p.q) / (1.0 - p.q)


@dataclass(frozen=True)
class DilationOptimum:
    tau0: float
    F_at_tau0: float
    kappa: float
    lower_bound: float | None


def dilation_kappa(p: Params) -> float:
    s = p.N * (1.0 - p.q)
    d = p.lam - s
    return (1.0 / (1.0 - p.q) - p.N / p.lam) * (2.0 * p.N) ** (s / d)


def optimal_dilation(
    rho: RadialDensity, table: KernelTable, p: Params, C_estimate: float | None = None
) -> DilationOptimum:
    """Minimize tau -> F[tau^N rho(tau x)] in closed form.

    With ``C_estimate`` the result also carries the mass-only lower bound
    ``-kappa (C mass^alpha)^(-s/d)``, s = N(1-q), d = lam - s.
    """
    s = p.N * (1.0 - p.q)
    d = p.lam - s
    if d <= 0:
        raise ValueError(f"lambda = {p.lam} <= N(1-q) = {s}: F is unbounded below in the dilation")
    _check(rho, table, p)
    I = interaction_energy(rho, table)
    ints = integrals(rho, p)
    lq = ints.lq
    if not (I > 0 and lq > 0):
        raise ValueError("the density must be nonzero")
    kap = dilation_kappa(p)
    tau0 = (I / (2.0 * p.N * lq)) ** (1.0 / d)
    F0 = -kap * lq ** (p.lam / d) * I ** (-s / d)
    lb = None
    if C_estimate is not None:
        lb = -kap * (C_estimate * ints.mass**p.alpha) ** (-s / d)
    return DilationOptimum(float(tau0), float(F0), float(kap), lb)


# -- steady states ----------------------------------------------------------


def steady_profile(base: np.ndarray, p: Params) -> np.ndarray:
    """Solve q/(1-q) rho^(q-1) = base for rho."""
    return ((1.0 - p.q) / p.q * base) ** (-1.0 / (1.0 - p.q))


def stationary_residual(rho: RadialDensity, table: KernelTable, p: Params, mu: float) -> float:
    """sup |rho - steady_profile(mu + W * rho)| over the nodes."""
    _check(rho, table, p)
    base = mu + potential(rho, table)
    bad = np.flatnonzero(~(base > 0))
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"mu + W*rho = {base[i]:.3e} is not positive at node {i} (r = {rho.grid.nodes[i]:.4g})")
    return float(np.max(np.abs(rho.values - steady_profile(base, p))))


def fit_mu(rho: RadialDensity, table: KernelTable, p: Params) -> float:
    """Least-squares mu in q/(1-q) rho^(q-1) = mu + W * rho, mass-weighted."""
    _check(rho, table, p)
    v = rho.values
    keep = v > TINY_RHO * v.max()
    w = (rho.grid.weights * v)[keep]
    gap = p.q / (1.0 - p.q) * v[keep] ** (p.q - 1.0) - potential(rho, table)[keep]
    return float(w @ gap / w.sum())


def steady_state_from_minimizer(
    rho: RadialDensity, table: KernelTable, p: Params, I: float | None = None, lq: float | None = None
) -> RadialDensity:
    """Rescale a minimizer of the quotient (without atom) into a flow steady state.

    A minimizer solves rho^(q-1) = kappa (2 lam W*rho / I - alpha/mass) with
    kappa = lq/(2 - alpha); multiplying rho by a constant changes the ratio of
    the two sides, and exactly one constant turns it into q/(1-q) rho^(q-1) =
    mu + W*rho without any dilation.  Pass the minimizer's own ``I`` and
    ``lq`` when they include contributions beyond the grid.
    """
    _check(rho, table, p)
    I = interaction_energy(rho, table) if I is None else I
    lq = integrals(rho, p).lq if lq is None else lq
    kap = lq / (2.0 - p.alpha)
    # a^(q-2) kappa 2 lam / I = (1-q)/q
    a = ((1.0 - p.q) * I / (2.0 * p.q * p.lam * kap)) ** (1.0 / (p.q - 2.0))
    return rho.scaled(a)


# -- evolution --------------------------------------------------------------


@dataclass
class EvolveOptions:
    t_final: float = 1.0
    cfl: float = 0.4
    snapshot_every: float | None = None
    drift: str = "interaction"  # or "external"
    record_every: float | None = None
    max_steps: int = 5_000_000


@dataclass
class EvolutionTrace:
    times: np.ndarray
    mass_series: np.ndarray
    free_energy_series: np.ndarray
    origin_value_series: np.ndarray
    snapshots: list = field(default_factory=list)
    concentration_flag: bool = False
    concentration_reason: str = ""
    status: str = "completed"
    steps: int = 0
    final: RadialDensity | None = None
    max_energy_increase: float = 0.0  # largest per-step relative increase of F
    inner_mass_fraction: float = 0.0
    rejected_steps: int = 0  # step halvings forced by a rise of F

    @property
    def aborted(self) -> bool:
        return self.status != "completed"


def _face_geometry(g: RadialGrid):
    area = sphere_area(g.N) * g.faces[1:-1] ** (g.N - 1)
    dr = np.diff(g.nodes)
    return area, dr


def _concentration(times, rho0_series, inner_frac):
    if inner_frac > 0.1:
        return True, f"innermost cell holds {inner_frac:.1%} of the mass"
    t = np.asarray(times)
    v = np.asarray(rho0_series)
    if t.size > 2 and t[-1] > 0:
        j = np.searchsorted(t, t[-1] / 10.0)
        j = min(j, t.size - 1)
        if v[j] > 0 and v[-1] > 1e3 * v[j]:
            return True, f"rho(0) grew by {v[-1] / v[j]:.3g} over the last decade of time"
    return False, ""


def evolve(
    rho0: RadialDensity,
    p: Params,
    table: KernelTable | None = None,
    opts: EvolveOptions | None = None,
) -> EvolutionTrace:
    """Explicit conservative finite-volume integration of the radial flow.

    The face flux is ``-rho_up d(xi)/dr`` with the chemical potential
    ``xi = potential - q/(1-q) rho^(q-1)`` and ``rho_up`` taken upwind.  Discrete
    steady states are then exactly the sampled profiles of ``steady_profile``,
    and the semi-discrete free energy decreases.  The outer face is closed, so
    mass is conserved up to rounding.  ``drift``
    selects the interaction potential W * rho (needs ``table``) or the fixed
    external potential V.
    """
    opts = opts or EvolveOptions()
    g = rho0.grid
    if g.N != p.N:
        raise ValueError("grid dimension does not match the parameters")
    if opts.drift == "interaction":
        if table is None:
            raise ValueError("the interaction drift needs a kernel table")
        _check(rho0, table, p)
    elif opts.drift != "external":
        raise ValueError(f"unknown drift {opts.drift!r}")
    if not opts.t_final > 0 or not 0 < opts.cfl <= 1:
        raise ValueError("need t_final > 0 and 0 < cfl <= 1")
    v = rho0.values.copy()
    if not v.max() > 0:
        raise ValueError("initial density is identically zero")

    w = g.weights
    area, dr = _face_geometry(g)
    # floor for rho^(q-1), relative to the mean density: a concentrating
    # maximum would otherwise lift it into the tail
    floor = TINY_RHO * float(w @ v) / float(w.sum())
    q = p.q
    c = q / (1.0 - q)
    ext = opts.drift == "external"
    if ext:
        Vn = external_potential(g.nodes, p.lam)
    K = None if ext else table.entries

    def potential_and_energy(v):
        lq = float(w @ v**q)
        if ext:
            return Vn, float(w @ (v * Vn)) - lq / (1.0 - q)
        psi = K @ (w * v) / p.lam
        return psi, 0.5 * float((w * v) @ psi) - lq / (1.0 - q)

    rec_dt = opts.record_every or opts.t_final / 2000.0
    snap_dt = opts.snapshot_every
    t = 0.0
    pot, F = potential_and_energy(v)
    times, masses, energies, origin = [0.0], [float(w @ v)], [F], [float(v[0])]
    snapshots = [(0.0, RadialDensity(g, v.copy()))] if snap_dt else []
    next_rec, next_snap = rec_dt, (snap_dt or math.inf)
    max_inc = 0.0
    rejected = 0
    status = "completed"
    steps = 0
    while t < opts.t_final * (1 - 1e-14):
        vf = np.maximum(v, floor)
        pw = vf ** (q - 1.0)
        dxi = np.diff(pot) - c * np.diff(pw)
        up = np.where(dxi < 0, v[:-1], v[1:])
        flux = -up * dxi / dr  # outward flux density at the faces
        # explicit bound: secant diffusivity of the upwinded flux plus drift speed
        dv_ = np.diff(vf)
        with np.errstate(divide="ignore", invalid="ignore"):
            D = np.where(
                np.abs(dv_) > 1e-9 * np.maximum(vf[:-1], vf[1:]),
                c * up * np.abs(np.diff(pw)) / np.abs(dv_),
                q * np.maximum(vf[:-1], vf[1:]) ** (q - 1.0),
            )
        speed = area * (D / dr + np.abs(np.diff(pot)) / dr)
        out_rate = np.zeros_like(v)
        out_rate[:-1] += speed
        out_rate[1:] += speed
        dt = opts.cfl / float(np.max(out_rate / w))
        dt = min(dt, opts.t_final - t)
        if dt < 1e-14 * opts.t_final:
            status = "dt-underflow"
            log.warning("time step underflow at t = %.6g", t)
            break
        af = area * flux
        dv = np.zeros_like(v)
        dv[:-1] -= af
        dv[1:] += af
        # the CFL bound is heuristic at jumps of rho; halve dt while F rises
        for _ in range(MAX_HALVINGS):
            v_new = np.maximum(v + dt * dv / w, 0.0)
            pot_new, F_new = potential_and_energy(v_new)
            if F_new <= F + ENERGY_RTOL * abs(F):
                break
            dt *= 0.5
            rejected += 1
        v, pot = v_new, pot_new
        t += dt
        steps += 1
        max_inc = max(max_inc, (F_new - F) / max(abs(F), 1e-300))
        F = F_new
        done = t >= opts.t_final * (1 - 1e-14)
        if t >= next_rec or done:
            times.append(t)
            masses.append(float(w @ v))
            energies.append(F)
            origin.append(float(v[0]))
            next_rec += rec_dt
        if t >= next_snap or (done and snap_dt):
            snapshots.append((t, RadialDensity(g, v.copy())))
            next_snap += snap_dt
        if steps >= opts.max_steps:
            status = "max-steps"
            break
    if times[-1] != t:
        times.append(t)
        masses.append(float(w @ v))
        energies.append(F)
        origin.append(float(v[0]))
    inner = float(w[0] * v[0] / max(w @ v, 1e-300))
    flag, why = _concentration(times, origin, inner)
    return EvolutionTrace(
        times=np.array(times),
        mass_series=np.array(masses),
        free_energy_series=np.array(energies),
        origin_value_series=np.array(origin),
        snapshots=snapshots,
        concentration_flag=flag,
        concentration_reason=why,
        status=status,
        steps=steps,
        final=RadialDensity(g, v),
        max_energy_increase=max_inc,
        inner_mass_fraction=inner,
        rejected_steps=rejected,
    )


def write_trace(trace: EvolutionTrace, out_dir: str | Path) -> Path:
    """Write ``trace.csv`` (t,mass,free_energy,rho0) and one CSV per snapshot."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "trace.csv"
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "mass", "free_energy", "rho0"])
        for row in zip(trace.times, trace.mass_series, trace.free_energy_series, trace.origin_value_series):
            wr.writerow([repr(float(x)) for x in row])
    for k, (_, snap) in enumerate(trace.snapshots):
        write_profile_csv(snap, out / f"snapshot_{k:04d}.csv")
    if trace.final is not None:
        write_profile_csv(trace.final, out / "final.csv")
    return path


# -- external-potential model -----------------------------------------------


@dataclass(frozen=True)
class ExternalModel:
    profile: RadialDensity
    mass_of_mu: float
    critical_mass: float
    in_window: bool


def external_window(p: Params) -> tuple[float, float]:
    """(1 - lam/N, 1 - 2/N): the q range with finite critical mass and a singular u_(-1)."""
    return 1.0 - p.lam / p.N, 1.0 - 2.0 / p.N


def external_mass(p: Params, mu: float) -> float:
    """M(mu) = int (mu + V)^(-1/(1-q)) dx; ``inf`` when the integral diverges."""
    if mu < -1:
        raise ValueError(f"mu must be >= -1, got {mu}")
    ex = 1.0 / (1.0 - p.q)
    N, lam = p.N, p.lam
    if lam * ex <= N:
        return math.inf  # tail ~ r^(N-1-lam ex)
    c = mu + 1.0
    if c == 0 and 2 * ex >= N:
        return math.inf  # core ~ r^(N-1-2 ex)
    area = sphere_area(N)
    if c == 0:
        core = lambda r: (0.5 + r ** (lam - 2.0) / lam) ** (-ex)
        a, _ = quad(core, 0.0, 1.0, weight="alg", wvar=(N - 1 - 2 * ex, 0.0), epsabs=0.0, epsrel=1e-12, limit=200)
    else:
        f0 = lambda r: r ** (N - 1) * (c + 0.5 * r * r + r**lam / lam) ** (-ex)
        a, _ = quad(f0, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    # r = 1/s on the tail
    tail = lambda s: s ** (lam * ex - N - 1) * (c * s**lam + 0.5 * s ** (lam - 2) + 1.0 / lam) ** (-ex)
    b, _ = quad(tail, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    return float(area * (a + b))


def external_model(p: Params, mu: float, grid: RadialGrid) -> ExternalModel:
    if mu < -1:
        raise ValueError(f"mu must be >= -1, got {mu}")
    lo, hi = external_window(p)
    in_window = p.lam > 2 and lo < p.q < hi
    if not in_window:
        log.warning("q = %g lies outside the window (%g, %g) of the external model", p.q, lo, hi)
    if mu == -1 and p.N <= 2.0 / (1.0 - p.q):
        raise ValueError("u_(-1) is not locally integrable for q >= 1 - 2/N")
    prof = sample_profile("external", p, grid, mu)
    return ExternalModel(prof, external_mass(p, mu), external_mass(p, -1.0), in_window)
