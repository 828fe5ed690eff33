import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rhls.params import (
    Existence,
    Params,
    SignClass,
    Validity,
    alpha_of,
    classify,
    conformal_q,
    validity_threshold,
)
from rhls.constants import qbar

dims = st.integers(min_value=1, max_value=8)
lams = st.floats(min_value=0.05, max_value=30.0)
qs = st.floats(min_value=1e-3, max_value=1 - 1e-3)


@pytest.mark.parametrize(
    "N, lam, q, expected",
    [(4, 2, 0.8, 0.0), (3, 6, 0.5, 0.0), (2, 2, 0.5, 1.0), (1, 2, 1 / 3, 1.0)],
)
def test_alpha_examples(N, lam, q, expected):
    assert Params(N, lam, q).alpha == pytest.approx(expected, abs=1e-12)


def test_alpha_at_validity_boundary_n1():
    # q = N/(N+lam) is a valid Params triple and gives alpha = 1
    assert alpha_of(1, 1, 0.5) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("bad", [(0, 1, 0.5), (2.5, 1, 0.5), (2, 0, 0.5), (2, -1, 0.5), (2, 1, 0.0), (2, 1, 1.0)])
def test_params_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        Params(*bad)


@given(dims, lams, qs)
def test_alpha_formula_exact(N, lam, q):
    p = Params(N, lam, q)
    assert p.alpha == (2 * N - q * (2 * N + lam)) / (N * (1 - q))


@given(dims, lams)
def test_alpha_identities(N, lam):
    assert abs(alpha_of(N, lam, conformal_q(N, lam))) < 1e-12
    assert abs(alpha_of(N, lam, validity_threshold(N, lam)) - 1) < 1e-12


@given(dims, lams, qs, qs)
def test_alpha_decreasing_in_q(N, lam, q1, q2):
    if q1 < q2:
        assert alpha_of(N, lam, q1) > alpha_of(N, lam, q2) or math.isclose(
            alpha_of(N, lam, q1), alpha_of(N, lam, q2), rel_tol=1e-12
        )


@given(dims, lams, qs)
def test_validity_iff_alpha_below_one(N, lam, q):
    p = Params(N, lam, q)
    reg = classify(p, use_qbar=False)
    if abs(p.alpha - 1) > 1e-12:
        assert (reg.validity is Validity.VALID) == (p.alpha < 1)


def test_classify_examples():
    r = classify(Params(1, 3, 0.3))
    assert (r.validity, r.sign_class, r.existence) == (
        Validity.VALID,
        SignClass.SUB_CONFORMAL,
        Existence.MINIMIZER_GUARANTEED,
    )
    # 2N/(2N+lam) = 0.4 < 0.5, so this point lies above the conformal line
    r = classify(Params(1, 3, 0.5))
    assert (r.validity, r.sign_class, r.existence) == (
        Validity.VALID,
        SignClass.SUPER_CONFORMAL,
        Existence.MINIMIZER_GUARANTEED,
    )
    r = classify(Params(4, 2, 0.3))
    assert r.validity is Validity.INVALID
    assert r.existence is Existence.NOT_APPLICABLE


def test_classify_uses_layercake_curve():
    p = Params(4, 12, 0.27)
    r = classify(p)
    assert r.validity is Validity.VALID
    assert r.sign_class is SignClass.SUB_CONFORMAL
    qb = qbar(4, 12)
    assert r.qbar == pytest.approx(qb)
    expected = Existence.MINIMIZER_GUARANTEED if 0.27 > max(qb, 0.25) else Existence.OPEN_REGION
    assert r.existence is expected


def test_validity_boundary_is_invalid():
    p = Params(2, 2, 0.5)
    assert classify(p).validity is Validity.INVALID


def test_conformal_line_detected():
    p = Params(3, 6, 0.5)
    assert p.is_conformal
    assert classify(p).sign_class is SignClass.CONFORMAL
    assert classify(p).existence is Existence.MINIMIZER_GUARANTEED


def test_super_conformal_sign():
    assert classify(Params(3, 1, 0.95)).sign_class is SignClass.SUPER_CONFORMAL


def test_random_validity_sweep():
    rng = np.random.default_rng(3)
    N = rng.integers(1, 7, 10_000)
    lam = rng.uniform(0.01, 20, 10_000)
    q = rng.uniform(0.001, 0.999, 10_000)
    a = alpha_of(N, lam, q)
    valid = q > N / (N + lam)
    assert np.all(valid == (a < 1))
