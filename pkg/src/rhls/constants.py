"""Closed-form and semi-closed-form constants of the reverse HLS problem.

Ball-pair ratio
    F(R, S) = int_{B_R x B_S} |x-y|^lam / (|B_R| int_{B_S} |x|^lam + |B_S| int_{B_R} |y|^lam)
is homogeneous of degree 0 and symmetric in (R, S); its supremum ``A`` is the
layer-cake constant in ``I[rho] <= 2 A (int |x|^lam rho)(int rho)`` for
symmetric non-increasing ``rho``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import betaln, gammaln, gammasgn

from .kernel import ball_pair_energy
from .params import Params, conformal_q, validity_threshold
from .radial import ball_volume, sphere_area

POLE_TOL = 1e-8
LOG_S_WINDOW = 6.0


# -- conformal constant -----------------------------------------------------


@dataclass(frozen=True)
class ConformalConstant:
    """Closed-form candidates for the sharp constant on the conformal line.

    ``printed`` is ``pi^(lam/2) G(N/2 - lam/2)/G(N - lam/2) (G(N)/G(N/2))^(1 - lam/N)``;
    it is ``None`` when a Gamma argument sits within ``POLE_TOL`` of a pole or
    the value is not positive.  ``printed_reliable`` is True only when it also
    agrees with ``reflected``.
    ``reflected`` is the same expression with ``lam -> -lam``, i.e. the
    classical HLS constant continued to a positive kernel exponent.  It is the
    value used as ``operative``; the numeric minimizer is the independent check.
    """

    N: int
    lam: float
    printed: float | None
    printed_reliable: bool
    reflected: float
    reason: str

    @property
    def operative(self) -> float:
        return self.reflected


def _near_pole(x: float) -> bool:
    return x <= 0 and abs(x - round(x)) < POLE_TOL


def _gamma_ratio(a: float, b: float) -> float:
    """Gamma(a)/Gamma(b) with signs, for arguments away from poles."""
    return gammasgn(a) * gammasgn(b) * math.exp(gammaln(a) - gammaln(b))


def _hls_formula(N: int, mu: float) -> float:
    return (
        math.pi ** (mu / 2)
        * _gamma_ratio(N / 2 - mu / 2, N - mu / 2)
        * math.exp((1 - mu / N) * (gammaln(N) - gammaln(N / 2)))
    )


def conformal_constant(N: int, lam: float) -> ConformalConstant:
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    args = (N / 2 - lam / 2, N - lam / 2)
    reason = ""
    printed = None
    if any(_near_pole(a) for a in args):
        reason = "Gamma argument at a pole"
    else:
        val = _hls_formula(N, lam)
        if not (math.isfinite(val) and val > 0):
            reason = f"printed value {val:.6g} is not positive"
        else:
            printed = val
    reflected = _hls_formula(N, -lam)
    reliable = printed is not None and abs(printed - reflected) <= 1e-10 * reflected
    if printed is not None and not reliable:
        reason = f"printed value {printed:.6g} disagrees with the reflected value {reflected:.6g}"
    return ConformalConstant(int(N), float(lam), printed, reliable, float(reflected), reason)


# -- interpolation constant -------------------------------------------------


def lemma4_constant(p: Params, mode: str = "explicit") -> float:
    """Best c with mass^(1-t) moment^t >= c lq^(1/q), t = N(1-q)/(lam q).

    ``mode='explicit'`` evaluates the quotient at ``(1 + r^lam)^(-1/(1-q))``,
    which attains the sharp value, with Beta-function integrals.
    ``mode='optimize_r'`` returns the constant of the two-region Hoelder
    argument, optimized in the splitting radius.
    """
    N, lam, q = p.N, p.lam, p.q
    if not validity_threshold(N, lam) < q < 1:
        raise ValueError(f"q = {q} must lie in (N/(N+lambda), 1) = ({validity_threshold(N, lam)}, 1)")
    theta = N * (1 - q) / (lam * q)
    if mode == "explicit":
        pw = 1.0 / (1.0 - q)
        a = N / lam
        # int_0^inf r^(N-1+k) (1 + r^lam)^(-s) dr = B((N+k)/lam, s - (N+k)/lam)/lam
        log_mass = betaln(a, pw - a)
        log_mom = betaln(a + 1.0, pw - a - 1.0)
        log_lq = betaln(a, pw * q - a)
        log_pref = math.log(sphere_area(N) / lam)
        log_c = (
            (1 - theta) * (log_pref + log_mass)
            + theta * (log_pref + log_mom)
            - (log_pref + log_lq) / q
        )
        return math.exp(log_c)
    if mode == "optimize_r":
        C1 = ball_volume(N) ** (1 - q)
        C2 = (sphere_area(N) * (1 - q) / (lam * q - N * (1 - q))) ** (1 - q)
        s = N * (1 - q)
        t = lam * q
        # minimize C1 R^s + C2 R^(s - t) with mass = moment = 1
        R = (C2 * (t - s) / (C1 * s)) ** (1.0 / t)
        f = C1 * R**s + C2 * R ** (s - t)
        return f ** (-1.0 / q)
    raise ValueError(f"unknown mode {mode!r}")


# -- ball-pair ratio and layer-cake constant --------------------------------


def ratio_F_pair(N: int, lam: float, R: float, S: float, order: int = 40) -> float:
    """F(R, S) evaluated without using homogeneity."""
    area = sphere_area(N)
    den = (area * R**N / N) * (area * S ** (N + lam) / (N + lam)) + (area * S**N / N) * (
        area * R ** (N + lam) / (N + lam)
    )
    return ball_pair_energy(N, lam, R, S, order) / den


def ratio_F(N: int, lam: float, s: float, order: int = 40) -> float:
    """F(1, s)."""
    if not s > 0:
        raise ValueError(f"s must be positive, got {s}")
    return ratio_F_pair(N, lam, 1.0, s, order)


@dataclass(frozen=True)
class LayerCakeResult:
    A: float
    s_star: float
    boundary_value: float

    @property
    def interior(self) -> bool:
        return self.boundary_value < self.A


@lru_cache(maxsize=512)
def layercake_search(N: int, lam: float, order: int = 40) -> LayerCakeResult:
    """Supremum of F(1, s) over log10 s in [-6, 6].

    By the symmetry F(1, s) = F(1, 1/s) only [-6, 0] is scanned; the best
    grid point is refined by bounded Brent search to 1e-6 in log10 s.
    """
    f = lambda x: ratio_F(N, lam, 10.0**x, order)
    xs = np.linspace(-LOG_S_WINDOW, 0.0, 61)
    vals = np.array([f(x) for x in xs])
    k = int(np.argmax(vals))
    best_x, best = xs[k], vals[k]
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, xs.size - 1)]
    if hi > lo:
        res = minimize_scalar(lambda x: -f(x), bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
        if -res.fun > best:
            best_x, best = float(res.x), float(-res.fun)
    return LayerCakeResult(float(best), float(10.0**best_x), float(vals[0]))


def layercake_constant(N: int, lam: float) -> float:
    """sup_s F(1, s); exactly 1 at lam = 2, where F is identically 1."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if lam == 2:
        return 1.0
    return layercake_search(int(N), float(lam)).A


def jensen_bound(N: int, lam: float) -> float:
    """B = (N + lam)/(2N) (2N/(N + 2))^(lam/2), a lower bound on A for lam >= 2."""
    if lam < 2:
        raise ValueError(f"the Jensen bound needs lambda >= 2, got {lam}")
    return (N + lam) / (2 * N) * (2 * N / (N + 2)) ** (lam / 2)


def _q_of(N, lam, x):
    return 2 * N * x / (2 * N * x + lam)


def qbar(N: int, lam: float, mode: str = "layercake") -> float:
    """Existence threshold curves.

    layercake  2N(1 - 1/A)/(2N(1 - 1/A) + lam) with A the layer-cake constant
    strict     the same with 1 - 1/(2A), i.e. the condition alpha < 1/A
    crude      2N(1 - 2^-lam)/(2N(1 - 2^-lam) + lam)
    """
    if mode == "crude":
        if not lam > 1:
            raise ValueError("the crude curve needs lambda > 1")
        return _q_of(N, lam, 1.0 - 2.0 ** (-lam))
    if mode not in ("layercake", "strict"):
        raise ValueError(f"unknown mode {mode!r}")
    A = layercake_constant(N, lam)
    if A <= 1:
        return 0.0
    x = 1.0 - 1.0 / A if mode == "layercake" else 1.0 - 0.5 / A
    return _q_of(N, lam, x)


# -- report -----------------------------------------------------------------


@dataclass
class ConstantsReport:
    N: int
    lam: float
    q: float | None
    alpha: float | None
    conformal_q: float
    conformal_constant: float | None
    conformal_constant_reliable: bool
    conformal_constant_reflected: float
    conformal_note: str
    lemma4_constant: float | None
    lemma4_constant_optimize_r: float | None
    A: float
    A_argmax_s: float
    B_jensen: float | None
    qbar: float
    qbar_strict: float
    qbar_crude: float | None
    validity_threshold: float
    regularity_q: float
    regime: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def constants_report(N: int, lam: float, q: float | None = None) -> ConstantsReport:
    from .params import classify

    if int(N) != N or N < 1:
        raise ValueError(f"dimension must be an integer >= 1, got {N}")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    cc = conformal_constant(N, lam)
    lc = layercake_search(int(N), float(lam))
    alpha = l4 = l4r = None
    regime = None
    if q is not None:
        p = Params(N, lam, q)
        alpha = p.alpha
        reg = classify(p)
        regime = {
            "validity": reg.validity.value,
            "sign_class": reg.sign_class.value,
            "existence": reg.existence.value,
        }
        if p.is_valid:
            l4 = lemma4_constant(p, "explicit")
            l4r = lemma4_constant(p, "optimize_r")
    return ConstantsReport(
        N=int(N),
        lam=float(lam),
        q=q,
        alpha=alpha,
        conformal_q=conformal_q(N, lam),
        conformal_constant=cc.printed,
        conformal_constant_reliable=cc.printed_reliable,
        conformal_constant_reflected=cc.reflected,
        conformal_note=cc.reason,
        lemma4_constant=l4,
        lemma4_constant_optimize_r=l4r,
        A=layercake_constant(N, lam),
        A_argmax_s=lc.s_star,
        B_jensen=jensen_bound(N, lam) if lam >= 2 else None,
        qbar=qbar(N, lam, "layercake"),
        qbar_strict=qbar(N, lam, "strict"),
        qbar_crude=qbar(N, lam, "crude") if lam > 1 else None,
        validity_threshold=validity_threshold(N, lam),
        regularity_q=1.0 - 2.0 / N,
        regime=regime,
    )
