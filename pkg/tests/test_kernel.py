import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rhls.kernel import (
    angular_kernel,
    ball_pair_energy,
    build_table,
    interaction_energy,
    interaction_energy_oracle,
    potential,
    power_tail,
)
from rhls.params import Params
from rhls.radial import RadialDensity, integrals, make_grid, sample_profile

radii = st.floats(min_value=0.0, max_value=50.0)
dims = st.integers(1, 7)
lams = st.floats(min_value=0.1, max_value=12.0)


def closed_3d(lam, r, s):
    return ((r + s) ** (lam + 2) - abs(r - s) ** (lam + 2)) / (2 * r * s * (lam + 2))


def test_kernel_examples():
    assert angular_kernel(3, 1.0, 1.0, 1.0) == pytest.approx(4 / 3, rel=1e-14)
    assert angular_kernel(2, 3.0, 1.0, 0.0) == pytest.approx(1.0, rel=1e-14)
    for N in (1, 2, 4, 5):
        assert angular_kernel(N, 2.0, 0.7, 1.9) == pytest.approx(0.49 + 3.61, rel=1e-10)


def test_kernel_against_oracle(oracle):
    for N, lam, r, s, ref in oracle["kernel"]:
        assert angular_kernel(N, lam, r, s) == pytest.approx(ref, rel=1e-11), (N, lam, r, s)


def test_kernel_rejects_negative_radius():
    with pytest.raises(ValueError):
        angular_kernel(2, 1.0, -1.0, 1.0)


def test_quadrature_matches_3d_closed_form():
    r = np.array([0.1, 0.5, 1.0, 1.0, 2.0, 7.0])
    s = np.array([0.3, 0.5, 1.0, 1e-3, 5.0, 6.9])
    for lam in (0.5, 1.0, 2.5, 4.0, 7.5):
        quad = angular_kernel(3, lam, r, s, method="quadrature")
        assert np.allclose(quad, closed_3d(lam, r, s), rtol=1e-10, atol=0)


@given(dims, lams, radii, radii)
@settings(max_examples=60, deadline=None)
def test_kernel_symmetry_and_bounds(N, lam, r, s):
    k = angular_kernel(N, lam, r, s)
    assert k == pytest.approx(angular_kernel(N, lam, s, r), rel=1e-12)
    assert abs(r - s) ** lam * (1 - 1e-12) <= k <= (r + s) ** lam * (1 + 1e-12)


@given(dims, lams, st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0.1, 10))
@settings(max_examples=40, deadline=None)
def test_kernel_homogeneity(N, lam, r, s, c):
    a = angular_kernel(N, lam, c * r, c * s)
    b = c**lam * angular_kernel(N, lam, r, s)
    assert a == pytest.approx(b, rel=1e-10)


@pytest.fixture(scope="module")
def grid3():
    return make_grid(3, 10.0, 160)


def test_table_invariants(grid3):
    t = build_table(grid3, 2.5, use_cache=False)
    K, r = t.entries, grid3.nodes
    assert np.array_equal(K, K.T)
    assert np.array_equal(K[0], r**2.5)
    assert np.all(K >= np.abs(r[:, None] - r[None, :]) ** 2.5)
    assert np.all(K <= (r[:, None] + r[None, :]) ** 2.5)
    assert not K.flags.writeable


def test_table_lambda_two(grid3):
    t = build_table(make_grid(4, 5.0, 96), 2.0, use_cache=False)
    r = t.grid.nodes
    assert np.allclose(t.entries, r[:, None] ** 2 + r[None, :] ** 2, rtol=1e-10, atol=0)


def test_table_3d_closed_form(grid3):
    t = build_table(grid3, 4.0, use_cache=False)
    rng = np.random.default_rng(0)
    i, j = rng.integers(1, grid3.n, (2, 50))
    r = grid3.nodes
    assert np.allclose(t.entries[i, j], closed_3d(4.0, r[i], r[j]), rtol=1e-10, atol=0)


def test_table_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("RHLS_CACHE_DIR", str(tmp_path))
    g = make_grid(2, 3.0, 40)
    a = build_table(g, 1.5)
    files = list(tmp_path.glob("*.npy"))
    assert len(files) == 1
    b = build_table(g, 1.5)
    assert np.array_equal(a.entries, b.entries)
    # a corrupted cache is ignored and rebuilt
    np.save(files[0], np.zeros((40, 40)))
    c = build_table(g, 1.5)
    assert np.array_equal(a.entries, c.entries)


def test_table_rejects_nonpositive_lambda(grid3):
    with pytest.raises(ValueError):
        build_table(grid3, 0.0)


def test_energy_lambda_two_identity():
    g = make_grid(3, 8.0, 200)
    p = Params(3, 2.0, 0.7)
    t = build_table(g, 2.0, use_cache=False)
    rng = np.random.default_rng(1)
    for _ in range(20):
        rho = RadialDensity(g, np.exp(-rng.uniform(0.2, 3) * g.nodes ** rng.uniform(1, 3)))
        ints = integrals(rho, p)
        assert interaction_energy(rho, t) == pytest.approx(2 * ints.mass * ints.moment, rel=1e-8)
        phi = potential(rho, t)
        assert np.allclose(phi, 0.5 * (ints.moment + ints.mass * g.nodes**2), rtol=1e-8)
        assert phi[0] == pytest.approx(ints.moment / 2, rel=1e-12)


def test_energy_ball_1d():
    # uniform spacing with a face exactly at 1
    g = make_grid(1, 399 / 100.5, 400, 1.0)
    t = build_table(g, 1.0, use_cache=False)
    rho = RadialDensity(g, (g.faces[1:] <= 1 + 1e-12).astype(float))
    assert interaction_energy(rho, t) == pytest.approx(8 / 3, rel=1e-4)


def test_zero_density(grid3):
    t = build_table(grid3, 1.0)
    z = RadialDensity(grid3, np.zeros(grid3.n))
    assert interaction_energy(z, t) == 0.0
    assert np.all(potential(z, t) == 0.0)
    assert interaction_energy_oracle(z, 3, 1.0) == (0.0, 0.0)


def test_grid_mismatch(grid3):
    t = build_table(grid3, 1.0)
    rho = RadialDensity(make_grid(3, 5.0, 160), np.ones(160))
    with pytest.raises(ValueError):
        interaction_energy(rho, t)
    with pytest.raises(ValueError):
        potential(rho, t)


@given(st.floats(1e-3, 1e3))
@settings(max_examples=20, deadline=None)
def test_energy_bilinear(a):
    g = make_grid(2, 6.0, 48)
    t = build_table(g, 1.7)
    rho = RadialDensity(g, np.exp(-g.nodes))
    assert interaction_energy(rho.scaled(a), t) == pytest.approx(a * a * interaction_energy(rho, t), rel=1e-13)


@pytest.mark.parametrize("N, lam", [(2, 1.0), (3, 3.5), (4, 0.7), (5, 6.0)])
def test_energy_bounds_on_monotone_profiles(N, lam):
    g = make_grid(N, 10.0, 128)
    t = build_table(g, lam)
    p = Params(N, lam, 0.9)
    rng = np.random.default_rng(N)
    for _ in range(10):
        v = np.sort(rng.exponential(size=g.n))[::-1] * np.exp(-g.nodes)
        rho = RadialDensity(g, v)
        ints = integrals(rho, p)
        I = interaction_energy(rho, t)
        assert ints.moment * ints.mass <= I * (1 + 1e-12)
        assert I <= 2**lam * ints.moment * ints.mass


def test_oracle_gaussian_1d():
    g = make_grid(1, 12.0, 1500, 1.0)
    p = Params(1, 2.0, 0.5)
    rho = sample_profile("gaussian", p, g)
    est, err = interaction_energy_oracle(rho, 1, 2.0, samples=2**18)
    # closed form for the continuum Gaussian: mass sqrt(2 pi), moment sqrt(2 pi)
    assert est == pytest.approx(2 * 2 * math.pi, rel=1e-3)
    assert err < 1e-3 * est


def test_oracle_ball_2d():
    g = make_grid(2, 1.5, 300, 1.0)
    t = build_table(g, 1.0)
    rho = sample_profile("ball", Params(2, 1.0, 0.5), g, 1.0)
    est, err = interaction_energy_oracle(rho, 2, 1.0, samples=2**16, seed=4)
    assert abs(est - interaction_energy(rho, t)) < 3 * err + 1e-3 * est


def test_oracle_rejects_high_dimension():
    g = make_grid(4, 1.0, 32)
    with pytest.raises(ValueError):
        interaction_energy_oracle(RadialDensity(g, np.ones(32)), 4, 1.0)


def test_oracle_deterministic_in_seed():
    g = make_grid(3, 3.0, 64)
    rho = sample_profile("gaussian", Params(3, 1.0, 0.5), g)
    a = interaction_energy_oracle(rho, 3, 1.0, samples=2**12, seed=7)
    b = interaction_energy_oracle(rho, 3, 1.0, samples=2**12, seed=7)
    assert a == b


def test_power_tail_matches_extended_grid():
    # a profile with an exact power tail, truncated at R and closed analytically
    N, lam, decay = 3, 1.5, 9.0
    g = make_grid(N, 5.0, 200)
    tail = power_tail(g, lam, decay)
    v = (1 + g.nodes**2) ** (-decay / 2)
    big = make_grid(N, 5.0 * 400, 4000, 1.0 + (g.stretch - 1))
    vb = (1 + big.nodes**2) ** (-decay / 2)
    ref_mass = big.weights @ vb
    # the tail closure is exact for v ~ r^-decay; (1 + r^2) differs by O(R^-2)
    approx = g.weights @ v + tail.mass(v[-1])
    assert approx == pytest.approx(ref_mass, rel=2e-3)


@pytest.mark.parametrize("N, lam", [(1, 1.0), (2, 2.0), (3, 4.0)])
def test_ball_pair_energy(N, lam):
    e = ball_pair_energy(N, lam, 1.0, 1.0)
    if (N, lam) == (1, 1.0):
        assert e == pytest.approx(8 / 3, rel=1e-12)
    if lam == 2.0:
        vol = math.pi
        mom = 2 * math.pi / 4
        assert e == pytest.approx(2 * vol * mom, rel=1e-12)
    assert ball_pair_energy(N, lam, 2.0, 0.5) == pytest.approx(2.0 ** (2 * N + lam) * ball_pair_energy(N, lam, 1.0, 0.25), rel=1e-10)
