"""Parameter algebra for the reverse HLS quotient.

A parameter point is the triple ``(N, lam, q)``: the space dimension, the
(positive) kernel exponent and the diffusion exponent.  The mass exponent
``alpha`` is fixed by scaling and homogeneity.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

CONFORMAL_RTOL = 1e-12


class Validity(enum.Enum):
    INVALID = "Invalid"
    VALID = "Valid"


class SignClass(enum.Enum):
    SUB_CONFORMAL = "SubConformal"
    CONFORMAL = "Conformal"
    SUPER_CONFORMAL = "SuperConformal"
    DEGENERATE = "Degenerate"


class Existence(enum.Enum):
    MINIMIZER_GUARANTEED = "MinimizerGuaranteed"
    RELAXED_ONLY = "RelaxedOnly"
    OPEN_REGION = "OpenRegion"
    NOT_APPLICABLE = "NotApplicable"


@dataclass(frozen=True)
class Params:
    """Immutable parameter point. ``lam`` is the kernel exponent lambda."""

    N: int
    lam: float
    q: float
    alpha: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"dimension must be an integer >= 1, got {self.N!r}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam!r}")
        if not 0 < self.q < 1:
            raise ValueError(f"q must lie in (0, 1), got {self.q!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "q", float(self.q))
        object.__setattr__(self, "alpha", alpha_of(self.N, self.lam, self.q))

    @property
    def validity_threshold(self) -> float:
        return validity_threshold(self.N, self.lam)

    @property
    def conformal_q(self) -> float:
        return conformal_q(self.N, self.lam)

    @property
    def is_valid(self) -> bool:
        return self.q > self.validity_threshold

    @property
    def is_conformal(self) -> bool:
        return math.isclose(self.q, self.conformal_q, rel_tol=CONFORMAL_RTOL, abs_tol=0.0)


def alpha_of(N: int, lam: float, q: float) -> float:
    return (2 * N - q * (2 * N + lam)) / (N * (1 - q))


def alpha(p: Params) -> float:
    """Mass exponent making the quotient dilation invariant."""
    return alpha_of(p.N, p.lam, p.q)


def validity_threshold(N: int, lam: float) -> float:
    return N / (N + lam)


def conformal_q(N: int, lam: float) -> float:
    return 2 * N / (2 * N + lam)


def regularity_q(N: int) -> float:
    """The fast-diffusion threshold ``1 - 2/N``."""
    return 1.0 - 2.0 / N


def needs_qbar(N: int, lam: float) -> bool:
    """True where existence depends on the layer-cake curve (N >= 3, lam > 2N/(N-2))."""
    return N >= 3 and lam > 2 * N / (N - 2)


@dataclass(frozen=True)
class Regime:
    validity: Validity
    sign_class: SignClass
    existence: Existence
    qbar: float | None = None


@lru_cache(maxsize=256)
def _cached_qbar(N: int, lam: float) -> float:
    from .constants import qbar

    return qbar(N, lam, mode="layercake")


def classify(p: Params, use_qbar: bool = True) -> Regime:
    """Classify ``p`` in the (lam, q) plane.

    When ``use_qbar`` is False the layer-cake threshold is not computed and
    points outside the explicit existence condition are reported as
    ``RELAXED_ONLY`` instead of being split by the threshold curve.
    """
    a = p.alpha
    valid = p.is_valid
    validity = Validity.VALID if valid else Validity.INVALID

    if p.is_conformal:
        sign = SignClass.CONFORMAL
    elif a >= 1 or not valid:
        sign = SignClass.DEGENERATE
    elif a > 0:
        sign = SignClass.SUB_CONFORMAL
    else:
        sign = SignClass.SUPER_CONFORMAL

    qb = None
    if not valid:
        existence = Existence.NOT_APPLICABLE
    elif p.N <= 2 or p.q >= min(regularity_q(p.N), p.conformal_q) or p.is_conformal:
        existence = Existence.MINIMIZER_GUARANTEED
    elif needs_qbar(p.N, p.lam) and use_qbar:
        qb = _cached_qbar(p.N, p.lam)
        if p.q > max(qb, p.validity_threshold):
            existence = Existence.MINIMIZER_GUARANTEED
        else:
            existence = Existence.OPEN_REGION
    else:
        existence = Existence.RELAXED_ONLY
    return Regime(validity, sign, existence, qb)
