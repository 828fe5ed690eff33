"""Spherical average of |x - y|^lam and the interaction objects built on it.

For ``|x| = r`` and ``|y| = s`` the average over relative directions is

    k(r, s) = int_0^pi (r^2 + s^2 - 2 r s cos phi)^{lam/2} sin^{N-2} phi dphi / W_N

with ``W_N = int_0^pi sin^{N-2} phi dphi``.  In terms of the distance
``d = |x - y|`` in ``[|r - s|, r + s]`` the integrand becomes a Jacobi weight
``((r+s)^2 - d^2)^{(N-3)/2} (d^2 - (r-s)^2)^{(N-3)/2}`` times ``d^{lam+1}``,
which Gauss-Jacobi handles without endpoint trouble.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .radial import RadialDensity, RadialGrid, sphere_area

log = logging.getLogger(__name__)

QUAD_START = 64
QUAD_MAX = 1024
QUAD_RTOL = 1e-11
TABLE_CHUNK = 1 << 15


def wallis(N: int) -> float:
    """W_N = int_0^pi sin^{N-2}(phi) dphi."""
    return math.sqrt(math.pi) * math.exp(math.lgamma((N - 1) / 2) - math.lgamma(N / 2))


@lru_cache(maxsize=64)
def _jacobi(n: int, a: float, b: float):
    x, w = roots_jacobi(n, a, b)
    return x, w


def _closed_form_1d(lam, r, s):
    return 0.5 * ((r + s) ** lam + np.abs(r - s) ** lam)


def _closed_form_3d(lam, r, s):
    # ((r+s)^{lam+2} - |r-s|^{lam+2}) / (2 r s (lam+2)), written with t = min/max
    # so the difference does not cancel when one radius is much smaller
    big = np.maximum(r, s)
    small = np.minimum(r, s)
    out = big**lam
    pos = small > 0
    t = small[pos] / big[pos]
    e = lam + 2.0
    inner = t < 1
    ti = np.where(inner, t, 0.5)
    lp, lm = np.log1p(ti), np.log1p(-ti)
    # (1+t)^e - (1-t)^e without cancellation
    diff = 2.0 * np.exp(0.5 * e * (lp + lm)) * np.sinh(0.5 * e * (lp - lm))
    diff = np.where(inner, diff, 2.0**e)
    out[pos] = big[pos] ** lam * diff / (2.0 * t * e)
    return out


def _quad_off_diagonal(N, lam, r, s, n):
    beta = 0.5 * (N - 3)
    x, v = _jacobi(n, beta, beta)
    a = r + s
    b = np.abs(r - s)
    d = b[:, None] + (a - b)[:, None] * (0.5 * (x + 1.0))
    f = d ** (lam + 1.0) * (a[:, None] + d) ** beta * (d + b[:, None]) ** beta
    big = np.maximum(r, s)
    return (f @ v) / (2.0 ** (N - 3) * big ** (N - 2) * wallis(N))


def _quad_diagonal(N, lam, r, n):
    # r == s: the lower endpoint weight is d^{lam + N - 2}
    beta = 0.5 * (N - 3)
    g = lam + N - 2.0
    x, v = _jacobi(n, beta, g)
    a = 2.0 * r
    d = a[:, None] * (0.5 * (x + 1.0))
    f = (a[:, None] + d) ** beta
    return (0.5 * a) ** (beta + g + 1.0) * (f @ v) / (2.0 ** (N - 3) * r ** (2 * N - 4) * wallis(N))


def _quadrature(N, lam, r, s):
    """Adaptive-order Gauss-Jacobi in the distance variable (N >= 2)."""
    r = np.asarray(r, dtype=float).ravel()
    s = np.asarray(s, dtype=float).ravel()
    out = np.maximum(r, s) ** lam
    pos = (r > 0) & (s > 0)
    diag = pos & (r == s)
    off = pos & ~diag
    if diag.any():
        out[diag] = _quad_diagonal(N, lam, r[diag], QUAD_START)
    if off.any():
        idx = np.flatnonzero(off)
        n = QUAD_START
        prev = _quad_off_diagonal(N, lam, r[idx], s[idx], n)
        while idx.size and n < QUAD_MAX:
            n *= 2
            cur = _quad_off_diagonal(N, lam, r[idx], s[idx], n)
            done = np.abs(cur - prev) <= QUAD_RTOL * np.abs(cur)
            out[idx[done]] = cur[done]
            idx, prev = idx[~done], cur[~done]
        if idx.size:
            log.warning("angular quadrature did not reach %.0e on %d pairs", QUAD_RTOL, idx.size)
            out[idx] = prev
    return out


def angular_kernel(N: int, lam: float, r, s, method: str = "auto"):
    """Spherical average of |x - y|^lam over directions, |x| = r, |y| = s.

    ``method='auto'`` uses the closed forms for N = 1 and N = 3 and quadrature
    otherwise; ``method='quadrature'`` forces quadrature (N >= 2).
    Accepts scalars or broadcastable arrays.
    """
    r_arr, s_arr = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
    if np.any(r_arr < 0) or np.any(s_arr < 0):
        raise ValueError("radii must be nonnegative")
    shape = r_arr.shape
    rr, ss = r_arr.ravel(), s_arr.ravel()
    if method not in ("auto", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    if N == 1 and method == "quadrature":
        raise ValueError("quadrature path needs N >= 2")
    # homogeneity: evaluate at max(r, s) = 1 so tiny or huge radii cannot
    # underflow inside the closed forms
    m = np.maximum(rr, ss)
    scale = np.where(m > 0, m, 1.0)
    rr, ss = rr / scale, ss / scale
    if N == 1:
        out = _closed_form_1d(lam, rr, ss)
    elif N == 3 and method == "auto":
        out = _closed_form_3d(lam, rr, ss)
    else:
        out = _quadrature(N, lam, rr, ss)
    out = (np.where(m > 0, out, 0.0) * m**lam).reshape(shape)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class KernelTable:
    grid: RadialGrid
    lam: float
    entries: np.ndarray

    @property
    def N(self) -> int:
        return self.grid.N


def _check_table(grid: RadialGrid, lam: float, K: np.ndarray):
    r = grid.nodes
    if K.shape != (grid.n, grid.n):
        raise ValueError("kernel table has the wrong shape")
    if not np.array_equal(K, K.T):
        raise ValueError("kernel table is not symmetric")
    if r[0] == 0 and not np.allclose(K[0], r**lam, rtol=1e-14, atol=0):
        raise ValueError("kernel row 0 does not equal r^lam")
    lo = np.abs(r[:, None] - r[None, :]) ** lam
    hi = (r[:, None] + r[None, :]) ** lam
    slack = 1e-12 * hi
    if np.any(K < lo - slack) or np.any(K > hi + slack):
        raise ValueError("kernel table violates |r-s|^lam <= k <= (r+s)^lam")


def _cache_path(grid: RadialGrid, lam: float) -> Path | None:
    root = os.environ.get("RHLS_CACHE_DIR")
    if not root:
        return None
    return Path(root) / f"kernel_N{grid.N}_lam{float(lam).hex()}_{grid.key()}.npy"


def build_table(grid: RadialGrid, lam: float, use_cache: bool = True) -> KernelTable:
    """Tabulate k(r_i, r_j) on all node pairs.

    When ``RHLS_CACHE_DIR`` is set, tables are stored there as ``.npy`` files
    keyed by (N, lam, grid hash) and validated on load.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    path = _cache_path(grid, lam) if use_cache else None
    if path is not None and path.exists():
        try:
            K = np.load(path)
            _check_table(grid, lam, K)
            K.setflags(write=False)
            return KernelTable(grid, float(lam), K)
        except (ValueError, OSError) as err:
            log.warning("ignoring cached kernel table %s: %s", path, err)

    r = grid.nodes
    n = grid.n
    iu, ju = np.triu_indices(n)
    # chunked to bound the memory of the quadrature work arrays
    vals = np.concatenate(
        [angular_kernel(grid.N, lam, r[iu[k : k + TABLE_CHUNK]], r[ju[k : k + TABLE_CHUNK]]) for k in range(0, iu.size, TABLE_CHUNK)]
    )
    K = np.empty((n, n))
    K[iu, ju] = vals
    K[ju, iu] = vals
    if r[0] == 0:
        K[0, :] = r**lam
        K[:, 0] = r**lam
    # clip rounding excursions outside the elementary bounds
    lo = np.abs(r[:, None] - r[None, :]) ** lam
    hi = (r[:, None] + r[None, :]) ** lam
    np.clip(K, lo, hi, out=K)
    K.setflags(write=False)

    if path is not None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            np.save(path, K)
        except OSError as err:
            log.warning("could not write kernel cache %s: %s", path, err)
    return KernelTable(grid, float(lam), K)


def _check_grid(rho: RadialDensity, table: KernelTable):
    if not rho.grid.same_as(table.grid):
        raise ValueError("density and kernel table live on different grids")


def interaction_energy(rho: RadialDensity, table: KernelTable) -> float:
    """I_lam[rho] = sum_ij w_i w_j rho_i rho_j K_ij."""
    _check_grid(rho, table)
    m = table.grid.weights * rho.values
    return float(m @ (table.entries @ m))


def potential(rho: RadialDensity, table: KernelTable) -> np.ndarray:
    """(W_lam * rho)(r_i) with W_lam = |x|^lam / lam, at every node."""
    _check_grid(rho, table)
    m = table.grid.weights * rho.values
    return (table.entries @ m) / table.lam


def interaction_energy_oracle(
    rho: RadialDensity, N: int, lam: float, samples: int = 2**16, seed: int = 0
) -> tuple[float, float]:
    """Direct Cartesian estimate of I_lam[rho], returned as (value, standard error).

    The profile is evaluated by linear interpolation in |x| and taken to vanish
    beyond ``r_max``.  N = 1 uses a tensor Gauss rule on the two triangles
    ``y < x`` and ``y > x`` (the error estimate is the change under halving the
    order); N = 2, 3 draw both points from rho itself with scrambled Sobol
    sequences (16 independent scramblings).
    """
    if N > 3:
        raise ValueError("the Cartesian oracle is limited to N <= 3")
    if N != rho.grid.N:
        raise ValueError("dimension mismatch")
    g = rho.grid
    R = g.r_max
    nodes, vals = g.nodes, rho.values
    if not np.any(vals):
        return 0.0, 0.0
    prof = lambda x: np.interp(x, nodes, vals, right=0.0)

    if N == 1:
        def tensor(n):
            xg, wg = roots_legendre(n)
            ug, vg = roots_jacobi(n, lam, 0.0)  # weight (1-u)^lam on [-1,1]
            x = R * xg
            wx = R * wg
            u = 0.5 * (ug + 1.0)
            wu = 0.5 ** (lam + 1.0) * vg
            # y = -R + (x + R) u, x - y = (x + R)(1 - u)
            y = -R + (x[:, None] + R) * u[None, :]
            f = prof(np.abs(x))[:, None] * prof(np.abs(y)) * (x[:, None] + R) ** (lam + 1.0)
            return 2.0 * float(wx @ (f @ wu))  # the triangle y > x is the mirror image

        n = max(64, int(math.isqrt(samples)))
        hi = tensor(n)
        lo = tensor(n // 2)
        return hi, abs(hi - lo)

    from scipy.stats import qmc

    # importance sampling: x, y are drawn from rho / mass itself, so
    # I = mass^2 E|x - y|^lam; radii by inverse CDF on a refined mesh
    edges = np.concatenate([[0.0], nodes, [R]]) if nodes[0] > 0 else np.append(nodes, R)
    edges = np.unique(edges)
    t = np.linspace(0.0, 1.0, 17)[:-1]
    fine = np.append((edges[:-1, None] + np.diff(edges)[:, None] * t).ravel(), R)
    dens = prof(fine) * fine ** (N - 1) * (2.0 * math.pi if N == 2 else 4.0 * math.pi)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(fine))])
    mass = float(cdf[-1])
    cdf /= mass

    def points(u):
        r = np.interp(u[:, 0], cdf, fine)
        if N == 2:
            a = 2.0 * math.pi * u[:, 1]
            return r[:, None] * np.column_stack([np.cos(a), np.sin(a)])
        c = 2.0 * u[:, 1] - 1.0
        a = 2.0 * math.pi * u[:, 2]
        s_ = np.sqrt(1.0 - c**2)
        return r[:, None] * np.column_stack([s_ * np.cos(a), s_ * np.sin(a), c])

    reps = 16
    m = max(8, int(round(math.log2(max(samples // reps, 256)))))
    est = []
    for k in range(reps):
        sob = qmc.Sobol(d=2 * N, scramble=True, seed=np.random.default_rng([seed, k]))
        z = sob.random_base2(m)
        d = np.linalg.norm(points(z[:, :N]) - points(z[:, N:]), axis=1)
        est.append(mass**2 * float(np.mean(d**lam)))
    est = np.array(est)
    return float(est.mean()), float(est.std(ddof=1) / math.sqrt(reps))


@dataclass(frozen=True, eq=False)
class PowerTail:
    """Closure of a truncated profile by ``rho(r) = rho_last (r / r_max)^(-decay)``.

    Every coefficient multiplies the value at the last node (or its q-th power
    for the L^q integral), so the tail adds no unknowns.  ``cross[i]`` is the
    tail's contribution to ``int k(r_i, s) rho(s) dy`` per unit ``rho_last``.
    The tail-tail interaction is of relative size ``r_max^(N - decay)`` and is
    approximated by ``2 mass_tail moment_tail``.
    """

    grid: RadialGrid
    lam: float
    decay: float
    c_mass: float
    c_moment: float
    c_moment_lm2: float
    cross: np.ndarray
    self_term: float

    def c_power(self, q: float) -> float:
        """Coefficient of ``rho_last^q`` in the tail's L^q integral."""
        N = self.grid.N
        if self.decay * q <= N:
            return math.inf
        return sphere_area(N) * self.grid.r_max**N / (self.decay * q - N)

    def mass(self, last: float) -> float:
        return self.c_mass * last

    def moment(self, last: float) -> float:
        return self.c_moment * last


def power_tail(grid: RadialGrid, lam: float, decay: float, order: int = 256) -> PowerTail:
    """Build the tail closure for a profile decaying like ``r^(-decay)``.

    Needs ``decay > N + lam`` so that the lam-th moment of the tail is finite.
    """
    N = grid.N
    R = grid.r_max
    gam = decay - N - lam
    if not gam > 0:
        raise ValueError(f"tail decay {decay} must exceed N + lambda = {N + lam}")
    S = sphere_area(N)
    c_mass = S * R**N / (decay - N)
    c_mom = S * R ** (N + lam) / gam
    c_lm2 = S * R ** (N + lam - 2) / (gam + 2)
    # k(r, R x) = (R x)^lam k(r / (R x), 1); substitute u = x^(-gam)
    u, wu = roots_legendre(order)
    u = 0.5 * (u + 1.0)
    wu = 0.5 * wu
    x = u ** (-1.0 / gam)
    t = (grid.nodes / R)[:, None] / x[None, :]
    kk = angular_kernel(N, lam, t, np.ones_like(t))
    cross = S * R ** (N + lam) * (kk @ wu) / gam
    cross.setflags(write=False)
    return PowerTail(grid, float(lam), float(decay), c_mass, c_mom, c_lm2, cross, 2.0 * c_mass * c_mom)


@lru_cache(maxsize=8)
def _legendre01(n):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def ball_pair_energy(N: int, lam: float, R: float, S: float, order: int = 40) -> float:
    """int_{B_R x B_S} |x - y|^lam dx dy by Gauss-Legendre in the two radii.

    The radial integrand has a kink on the diagonal, so the square is split
    along it.
    """
    if not (R > 0 and S > 0):
        raise ValueError("radii must be positive")
    big, small = max(R, S), min(R, S)
    x, w = _legendre01(order)
    rs, ts, ws = [], [], []
    # r in [0, small]: t in [0, r] and [r, small]
    r = small * x
    wr = small * w
    for lo, hi in ((np.zeros_like(r), r), (r, np.full_like(r, small))):
        t = lo[:, None] + (hi - lo)[:, None] * x[None, :]
        wt = (hi - lo)[:, None] * w[None, :]
        rs.append(np.broadcast_to(r[:, None], t.shape))
        ts.append(t)
        ws.append(wr[:, None] * wt)
    if big > small:
        r2 = small + (big - small) * x
        wr2 = (big - small) * w
        t = np.broadcast_to(small * x[None, :], (order, order))
        rs.append(np.broadcast_to(r2[:, None], t.shape))
        ts.append(t)
        ws.append(wr2[:, None] * (small * w)[None, :])
    r_all = np.concatenate([a.ravel() for a in rs])
    t_all = np.concatenate([a.ravel() for a in ts])
    w_all = np.concatenate([a.ravel() for a in ws])
    k = angular_kernel(N, lam, r_all, t_all)
    f = k * r_all ** (N - 1) * t_all ** (N - 1)
    return float(sphere_area(N) ** 2 * (w_all @ f))


def cell0_self_kernel(grid: RadialGrid, lam: float) -> float:
    """Mean of |x - y|^lam over pairs of points in the innermost cell (a ball)."""
    a = grid.faces[1]
    vol = sphere_area(grid.N) * a**grid.N / grid.N
    return ball_pair_energy(grid.N, lam, a, a) / vol**2
