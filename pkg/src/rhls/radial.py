"""Radial grids and radial densities on R^N.

Every density is stored as node values on a 1-D grid ``0 = r_0 < ... < r_max``.
Node ``i`` owns the cell between the neighbouring midpoints, and its weight is
the exact volume ``|S^{N-1}| (f_{i+1}^N - f_i^N) / N`` of that spherical shell,
so integrals are plain weighted sums.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from .params import Params

DEFAULT_N = 512
DEFAULT_FIRST_STEP = 1e-4


def sphere_area(N: int) -> float:
    """|S^{N-1}| = 2 pi^{N/2} / Gamma(N/2)."""
    return 2.0 * math.exp(0.5 * N * math.log(math.pi) - gammaln(0.5 * N))


def ball_volume(N: int, R: float = 1.0) -> float:
    return sphere_area(N) * R**N / N


@dataclass(frozen=True, eq=False)
class RadialGrid:
    N: int
    nodes: np.ndarray
    faces: np.ndarray
    weights: np.ndarray
    r_max: float
    stretch: float = 1.0

    @property
    def n(self) -> int:
        return self.nodes.size

    def key(self) -> str:
        """Stable hash of the grid geometry, used for kernel-table caching."""
        import hashlib

        h = hashlib.sha1()
        h.update(np.int64(self.N).tobytes())
        h.update(np.ascontiguousarray(self.nodes, dtype=np.float64).tobytes())
        return h.hexdigest()[:16]

    def same_as(self, other: RadialGrid) -> bool:
        return self is other or (
            self.N == other.N and self.n == other.n and np.array_equal(self.nodes, other.nodes)
        )


def stretch_for_first_step(n: int, first_step: float = DEFAULT_FIRST_STEP) -> float:
    """Geometric ratio such that ``r_1 = first_step * r_max`` on an ``n``-node grid."""
    m = n - 1
    if first_step * m >= 1.0:
        return 1.0
    # overflow to +inf on the right end is harmless for the bracket
    f = lambda s: first_step * np.expm1(m * np.log(s)) / (s - 1.0) - 1.0
    with np.errstate(over="ignore"):
        return brentq(f, 1.0 + 1e-12, 2.0, xtol=1e-15)


def make_grid(N: int, r_max: float, n: int = DEFAULT_N, stretch: float | None = None) -> RadialGrid:
    """Node grid with geometric spacing ``h_k = h_1 * stretch**(k-1)``.

    ``stretch=None`` picks the ratio giving ``r_1 = 1e-4 r_max``; ``stretch=1``
    gives a uniform grid.
    """
    if n < 16:
        raise ValueError(f"grid needs at least 16 nodes, got {n}")
    if not r_max > 0:
        raise ValueError(f"r_max must be positive, got {r_max}")
    if int(N) != N or N < 1:
        raise ValueError(f"dimension must be an integer >= 1, got {N}")
    if stretch is None:
        stretch = stretch_for_first_step(n)
    if stretch < 1:
        raise ValueError(f"stretch must be >= 1, got {stretch}")

    k = np.arange(n, dtype=float)
    if stretch == 1.0:
        nodes = r_max * k / (n - 1)
    else:
        ls = math.log(stretch)
        nodes = r_max * np.expm1(k * ls) / math.expm1((n - 1) * ls)
    nodes[0] = 0.0
    nodes[-1] = r_max

    faces = np.empty(n + 1)
    faces[0] = 0.0
    faces[1:-1] = 0.5 * (nodes[1:] + nodes[:-1])
    faces[-1] = r_max
    weights = sphere_area(N) * np.diff(faces**N) / N
    return RadialGrid(int(N), nodes, faces, weights, float(r_max), float(stretch))


@dataclass(eq=False)
class RadialDensity:
    """Nonnegative node values of a radial function on ``grid``."""

    grid: RadialGrid
    values: np.ndarray
    monotone_flag: bool = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise ValueError(f"values have shape {v.shape}, grid has {self.grid.n} nodes")
        if np.any(~np.isfinite(v)):
            raise ValueError("density values must be finite")
        if np.any(v < 0):
            raise ValueError("density values must be nonnegative")
        self.values = v
        self.monotone_flag = bool(np.all(np.diff(v) <= 0))

    def scaled(self, c: float) -> RadialDensity:
        return RadialDensity(self.grid, c * self.values)


class Integrals(NamedTuple):
    mass: float
    lq: float
    moment: float


def _check_dims(grid: RadialGrid, p: Params):
    if grid.N != p.N:
        raise ValueError(f"grid dimension {grid.N} does not match parameter dimension {p.N}")


def integrals(rho: RadialDensity, p: Params) -> Integrals:
    """Mass, L^q integral and lam-th moment of ``rho``."""
    g = rho.grid
    _check_dims(g, p)
    v = rho.values
    w = g.weights
    mass = float(w @ v)
    lq = float(w @ v**p.q)
    moment = float(w @ (g.nodes**p.lam * v))
    return Integrals(mass, lq, moment)


def tail_mass_estimate(rho: RadialDensity, p: Params) -> float:
    """Mass beyond ``r_max`` assuming the decay ``rho <= C r^{-N/q}``.

    ``C`` is fitted at the last node; returns 0 when the decay is not integrable
    in the stated form (it always is, since ``N/q > N``).
    """
    g = rho.grid
    R = g.r_max
    C = rho.values[-1] * R ** (p.N / p.q)
    expo = p.N / p.q - p.N
    return float(sphere_area(p.N) * C * R ** (-expo) / expo)


PROFILE_KINDS = ("lemma4", "annulus", "ball", "gaussian", "external")


def sample_profile(kind: str, p: Params, grid: RadialGrid, param: float | None = None) -> RadialDensity:
    """Sample a named profile at the grid nodes.

    kinds
        ``lemma4``   (1 + r^lam)^(-1/(1-q))
        ``annulus``  r^-(N+lam) on [1, R]                (param = R > 1)
        ``ball``     indicator of the ball of radius R   (param = R, default 1)
        ``gaussian`` exp(-r^2 / (2 s^2))                 (param = s, default 1)
        ``external`` (mu + 1 + r^2/2 + r^lam/lam)^(-1/(1-q))  (param = mu >= -1)
    """
    _check_dims(grid, p)
    r = grid.nodes
    ex = 1.0 / (1.0 - p.q)
    if kind == "lemma4":
        v = (1.0 + r**p.lam) ** (-ex)
    elif kind == "annulus":
        R = param
        if R is None or not R > 1:
            raise ValueError("annulus trial needs R > 1")
        v = np.zeros_like(r)
        inside = (r >= 1.0) & (r <= R)
        v[inside] = r[inside] ** (-(p.N + p.lam))
    elif kind == "ball":
        R = 1.0 if param is None else param
        if not R > 0:
            raise ValueError("ball radius must be positive")
        v = (r <= R).astype(float)
    elif kind == "gaussian":
        s = 1.0 if param is None else param
        if not s > 0:
            raise ValueError("gaussian width must be positive")
        v = np.exp(-0.5 * (r / s) ** 2)
    elif kind == "external":
        mu = 0.0 if param is None else param
        if mu < -1:
            raise ValueError(f"external profile needs mu >= -1, got {mu}")
        base = mu + 1.0 + 0.5 * r**2 + r**p.lam / p.lam
        with np.errstate(divide="ignore"):
            v = base ** (-ex)
        if mu == -1:
            # integrable singularity at the origin: use the cell average
            v[0] = external_cell0_average(p, grid)
    else:
        raise ValueError(f"unknown profile kind {kind!r}; expected one of {PROFILE_KINDS}")
    return RadialDensity(grid, v)


def external_cell0_average(p: Params, grid: RadialGrid) -> float:
    """Average of (r^2/2 + r^lam/lam)^(-1/(1-q)) over the innermost cell."""
    from scipy.integrate import quad

    h = grid.faces[1]
    ex = 1.0 / (1.0 - p.q)
    N = p.N
    if N <= 2 * ex:
        raise ValueError("profile is not locally integrable at the origin (q >= 1 - 2/N)")
    # factor out the r^{-2 ex} singularity and integrate r^{N-1-2ex} * smooth
    f = lambda r: (0.5 + r ** (p.lam - 2) / p.lam) ** (-ex)
    val, _ = quad(f, 0.0, h, weight="alg", wvar=(N - 1 - 2 * ex, 0.0), epsabs=0.0, epsrel=1e-12)
    return float(N * val / h**N)


def write_profile_csv(rho: RadialDensity, path: str | Path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "rho"])
        for r, v in zip(rho.grid.nodes, rho.values):
            w.writerow([repr(float(r)), repr(float(v))])


def read_profile_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``r,rho`` CSV; returns (radii, values) as float arrays."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["r", "rho"]:
        raise ValueError(f"{path}: expected header 'r,rho'")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]], dtype=float)
    if data.size == 0:
        raise ValueError(f"{path}: no data rows")
    return data[:, 0], data[:, 1]


def profile_on_grid(r: np.ndarray, v: np.ndarray, grid: RadialGrid) -> RadialDensity:
    """Interpolate a tabulated profile onto ``grid`` (zero beyond the table)."""
    vals = np.interp(grid.nodes, r, v, right=0.0)
    return RadialDensity(grid, vals)


def dilate(rho: RadialDensity, tau: float, grid: RadialGrid | None = None) -> RadialDensity:
    """Mass-preserving dilation ``tau^N rho(tau r)`` resampled on ``grid``.

    Uses log-log interpolation for positive profiles; values beyond the source
    grid are extrapolated with the last log-log slope.
    """
    grid = rho.grid if grid is None else grid
    src = rho.grid
    x = tau * grid.nodes
    v = rho.values
    if np.all(v > 0):
        lr = np.log(src.nodes[1:])
        lv = np.log(v[1:])
        out = np.empty_like(x)
        pos = x > 0
        lx = np.log(x[pos])
        val = np.interp(lx, lr, lv)
        # extrapolation on both ends with end slopes
        lo = lx < lr[0]
        hi = lx > lr[-1]
        s_lo = (lv[1] - lv[0]) / (lr[1] - lr[0])
        s_hi = (lv[-1] - lv[-2]) / (lr[-1] - lr[-2])
        val[lo] = lv[0] + s_lo * (lx[lo] - lr[0])
        val[hi] = lv[-1] + s_hi * (lx[hi] - lr[-1])
        out[pos] = np.exp(val)
        out[~pos] = v[0]
    else:
        out = np.interp(x, src.nodes, v, right=0.0)
    return RadialDensity(grid, tau**grid.N * out)
