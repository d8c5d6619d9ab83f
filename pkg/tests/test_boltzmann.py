import numpy as np
import pytest

from qlorentz.boltzmann import (BoltzmannKernel, CollisionSeriesResult, InitialData,
                                ParticleEnsemble, SeriesTailError, conservation_report,
                                density_estimate, mc_evolve, rotate, series_evolve)
from qlorentz.phase_space import TestFunction, default_suite
from qlorentz.potential import PotentialSpec
from qlorentz.scattering import build_tables, cross_section_from_function

SPEED = 1.5


@pytest.fixture(scope="module")
def tables():
    out = {}
    for dim in (2, 3):
        tm, cs, _ = build_tables(PotentialSpec.gaussian(0.25, 1.0, dim), [SPEED])
        out[dim] = (cs, float(tm.values[0, -1].imag))
    return out


def kernel_for(tables, dim, lam_T, T=1.0):
    cs, im = tables[dim]
    return BoltzmannKernel(lam_T / (T * cs.total[0]), cs, SPEED, im)


def initial(dim):
    u0 = np.zeros(dim)
    u0[0] = SPEED
    return InitialData(tuple(np.zeros(dim)), 0.5, tuple(u0))


def test_free_streaming_when_rate_zero(tables):
    k = kernel_for(tables, 2, 0.0)
    F0 = initial(2)
    ens = mc_evolve(F0, k, 2.0, 1000, seed=1)
    X0, V0 = F0.sample(np.random.default_rng(np.random.SeedSequence(1).spawn(1)[0]), 1000)
    assert np.array_equal(ens.X, X0 + 2.0 * V0)
    assert np.all(ens.n_collisions == 0)


@pytest.mark.parametrize("dim", [2, 3])
def test_poisson_laws(tables, dim):
    lamT, n = 1.0, 100_000
    k = kernel_for(tables, dim, lamT)
    ens = mc_evolve(initial(dim), k, 1.0, n, seed=7)
    p0 = np.exp(-lamT)
    frac = np.mean(ens.n_collisions == 0)
    assert abs(frac - p0) <= 3 * np.sqrt(p0 * (1 - p0) / n)
    assert abs(ens.n_collisions.mean() - lamT) <= 3 * np.sqrt(lamT / n)


def test_mc_deterministic_and_shell(tables):
    k = kernel_for(tables, 3, 1.0)
    a = mc_evolve(initial(3), k, 1.0, 5000, seed=3, shard_size=1024)
    b = mc_evolve(initial(3), k, 1.0, 5000, seed=3, shard_size=1024)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.V, b.V)
    rep = conservation_report(a, SPEED)
    assert rep["speed_conserved"] and rep["positive"]
    assert rep["mass"] == pytest.approx(1.0, abs=1e-12)


def test_mc_rejects_off_shell(tables):
    k = kernel_for(tables, 2, 1.0)
    with pytest.raises(ValueError):
        mc_evolve(InitialData((0.0, 0.0), 0.5, (1.0, 0.0)), k, 1.0, 10, seed=0)
    cs, _ = tables[2]
    with pytest.raises(KeyError):
        BoltzmannKernel(1.0, cs, 2.0)


def test_series_order_zero_closed_form(tables):
    k = kernel_for(tables, 2, 0.7)
    F0 = initial(2)
    J = TestFunction.make("gaussian", x0=[1.0, 0.0], sx=1.0, v0=[SPEED, 0.0], sv=1.0)
    res = series_evolve(F0, k, 1.0, 0, J, tol=1.0)
    # N(X; (1.5, 0), 0.25) against exp(-|X - (1, 0)|^2 / 2): variance sum 1.25
    expect = np.exp(-0.7) * (1 / 1.25) * np.exp(-0.25 / (2 * 1.25))
    assert res.total == pytest.approx(expect, rel=1e-12)


def test_series_rate_zero_is_free_streaming(tables):
    k = kernel_for(tables, 3, 0.0)
    J = default_suite(3, initial(3).u0, 0.5)[2]
    res = series_evolve(initial(3), k, 1.3, 4, J)
    assert res.total == pytest.approx(J.gaussian_average(np.array([1.3 * SPEED, 0, 0]), 0.25,
                                                         np.array(initial(3).u0)), rel=1e-14)


def test_series_tail_error(tables):
    k = kernel_for(tables, 2, 2.0)
    J = default_suite(2, initial(2).u0, 0.5)[0]
    with pytest.raises(SeriesTailError, match="m_max >="):
        series_evolve(initial(2), k, 1.0, 3, J)


@pytest.mark.parametrize("dim", [2, 3])
def test_series_matches_mc(tables, dim):
    k = kernel_for(tables, dim, 1.0)
    F0 = initial(dim)
    ens = mc_evolve(F0, k, 1.0, 100_000, seed=11)
    for J in default_suite(dim, F0.u0, F0.sigma):
        res = series_evolve(F0, k, 1.0, 10, J)
        mc, se = ens.estimate(J)
        assert abs(res.total - mc) <= 3 * se
        assert conservation_report(res)["positive"]


def test_damping_identity(tables):
    k = kernel_for(tables, 3, 1.3)
    assert k.damping(1.0) == pytest.approx(np.exp(-1.3), rel=1e-12)
    # optical theorem: exp(2 T rho0 Im T) within the optical residual
    assert k.optical_damping(1.0) == pytest.approx(k.damping(1.0), rel=1e-3)


def test_split_run_consistent(tables):
    k = kernel_for(tables, 2, 1.0)
    F0 = initial(2)
    one = mc_evolve(F0, k, 1.0, 50_000, seed=5)
    two = mc_evolve(mc_evolve(F0, k, 0.4, 50_000, seed=6), k, 0.6, 50_000, seed=7)
    assert two.T == pytest.approx(1.0)
    for f in (lambda e: e.X[:, 0], lambda e: e.X[:, 1] ** 2, lambda e: e.V[:, 0],
              lambda e: e.n_collisions.astype(float)):
        a, b = f(one), f(two)
        se = np.sqrt(a.var() / a.size + b.var() / b.size)
        assert abs(a.mean() - b.mean()) <= 3 * se


def test_isotropization(tables):
    k = kernel_for(tables, 3, 1.0)
    ens = mc_evolve(initial(3), k, 0.0, 40_000, seed=9)
    prev = np.inf
    for _ in range(4):
        ens = mc_evolve(ens, k, 0.75, 40_000, seed=10 + _)
        m = np.linalg.norm(ens.V.mean(axis=0))
        se = ens.V[:, 0].std() / np.sqrt(len(ens))
        assert m <= prev + 3 * se
        prev = m


def test_angular_table_normalised(tables):
    for dim in (2, 3):
        k = kernel_for(tables, dim, 1.0)
        assert k.norm_error < 1e-3
        u = np.linspace(0, 1, 11)
        x = k.inverse_cdf(u)
        assert np.all(np.diff(x) >= 0)


def test_isotropic_surrogate_scatter():
    cs = cross_section_from_function(lambda c: np.ones_like(c), 1.0, n_cos=65, dim=3)
    k = BoltzmannKernel(1.0, cs, 1.0)
    rng = np.random.default_rng(0)
    V = np.tile([1.0, 0.0, 0.0], (200_000, 1))
    out = k.scatter(V, rng.random(len(V)), rng.random(len(V)))
    assert np.allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-12)
    # cos theta uniform on [-1, 1]: variance 1/3
    assert abs(out[:, 0].mean()) < 4 * np.sqrt(1 / (3 * len(V)))


def test_rotate_preserves_angle():
    rng = np.random.default_rng(1)
    V = rng.normal(size=(100, 3))
    V *= 2.0 / np.linalg.norm(V, axis=1)[:, None]
    x = rng.uniform(-1, 1, 100)
    W = rotate(V, x, rng.random(100), 3)
    assert np.allclose(np.sum(V * W, axis=1) / 4.0, x, atol=1e-12)


def test_density_estimate_single_particle():
    ens = ParticleEnsemble(np.zeros((1, 2)), np.array([[1.0, 0.0]]), np.ones(1), np.zeros(1, int))
    ax = np.linspace(-3, 3, 61)
    H = density_estimate(ens, [ax, ax], [np.array([1.0]), np.array([0.0])], (0.5, 0.5))
    assert H.mass() == pytest.approx(1.0, abs=1e-6)
    i = np.unravel_index(np.argmax(H.values), H.values.shape)
    assert ax[i[0]] == 0.0 and ax[i[1]] == 0.0


def test_density_estimate_rate(tables):
    k = kernel_for(tables, 2, 0.0)
    F0 = initial(2)
    ax = np.linspace(-1, 4, 51)
    hx = 0.2
    var = F0.sigma**2 + hx**2
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    exact = np.exp(-((X - SPEED) ** 2 + Y**2) / (2 * var)) / (2 * np.pi * var)
    dist = []
    for n in (4000, 16000):
        errs = []
        for s in range(8):
            ens = mc_evolve(F0, k, 1.0, n, seed=100 + s)
            H = density_estimate(ens, [ax, ax], [np.array([SPEED]), np.array([0.0])], (hx, 0.2))
            errs.append(np.sum(np.abs(H.values[..., 0, 0] - exact)) * (ax[1] - ax[0]) ** 2)
        dist.append(np.mean(errs))
    assert dist[0] / dist[1] == pytest.approx(2.0, rel=0.5)


def test_ensemble_round_trip(tmp_path, tables):
    ens = mc_evolve(initial(2), kernel_for(tables, 2, 1.0), 1.0, 100, seed=2)
    ens.save(tmp_path / "ens")
    back = ParticleEnsemble.load(tmp_path / "ens")
    assert np.array_equal(back.X, ens.X) and np.array_equal(back.n_collisions, ens.n_collisions)
    assert back.seed == 2 and back.T == 1.0
    with pytest.raises(TypeError):
        conservation_report(object())
