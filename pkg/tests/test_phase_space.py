import numpy as np
import pytest

from qlorentz.phase_space import (PhaseSpaceDensity, TestFunction, default_suite, husimi,
                                  husimi_scales, read_density, rescale_macroscopic, weak_test,
                                  wigner_lattice, wigner_transform, write_density)
from qlorentz.potential import ObstacleConfig, PotentialSpec
from qlorentz.schrodinger import (BoxSpec, build_potential_field, evolve_split_step,
                                  gaussian_envelope, init_wavepacket)


def packet1d(s=1.5, c=2.0, u=0.7, side=60.0, n=512):
    box = BoxSpec(side, n, 1)
    return box, init_wavepacket(box, gaussian_envelope(s, 1, [c]), 1.0, [u])


def test_wigner_gaussian_closed_form():
    s, c, u = 1.5, 2.0, 0.7
    box, psi = packet1d(s, c, u)
    W, v = wigner_transform(psi)
    x = box.axis()
    exact = np.exp(-(x[:, None] - c) ** 2 / (2 * s**2) - 2 * s**2 * (v[None] - u) ** 2) / np.pi
    assert np.max(np.abs(W - exact)) < 1e-8


def test_wigner_x_marginal():
    box = BoxSpec(40.0, 64, 2)
    psi = init_wavepacket(box, gaussian_envelope(1.2, 2, [1.0, -0.5]), 1.0, [0.6, 0.3])
    # make it non-Gaussian: one scattering event
    V = build_potential_field(box, ObstacleConfig(np.array([[2.5, 0.0]]), 40.0, 0.0, 0),
                              PotentialSpec.gaussian(0.8, 1.0, 2))
    psi = evolve_split_step(psi, V, 0.05, 40)
    W, v = wigner_transform(psi)
    dv = v[1] - v[0]
    marg = W.sum(axis=(2, 3)) * dv**2
    assert np.max(np.abs(marg - np.abs(psi.amplitudes) ** 2)) < 1e-8


def test_wigner_lattice_validation():
    box, psi = packet1d(n=64, side=20.0)
    with pytest.raises(ValueError):
        wigner_transform(psi, v_axis=[0.123])


@pytest.mark.parametrize("l1,l2", [(1.0, 1.0), (3.0, 0.5), (2.0, 0.8)])
def test_husimi_gaussian_closed_form(l1, l2):
    s, c, u = 1.5, 2.0, 0.7
    box, psi = packet1d(s, c, u)
    H = husimi(psi, l1, l2, x_stride=4)
    x, v = H.X_axes[0], H.V_axes[0]
    vx, vv = s**2 + l1**2 / 2, 1 / (4 * s**2) + l2**2 / 2
    exact = np.exp(-(x[:, None] - c) ** 2 / (2 * vx) - (v[None] - u) ** 2 / (2 * vv)) \
        / (2 * np.pi * np.sqrt(vx * vv))
    assert np.max(np.abs(H.values - exact)) < 1e-8 * exact.max()


def test_husimi_oversmoothing_flattens_v_marginal():
    box, psi = packet1d()
    peaks = []
    for l2 in (0.5, 1.0, 2.0, 4.0):
        H = husimi(psi, 4.0, l2, v_axis=np.linspace(-8, 8, 161))
        peaks.append(H.marginal_V().max())
    assert np.all(np.diff(peaks) < 0)


def test_husimi_requires_coherent_scale():
    box, psi = packet1d()
    with pytest.raises(ValueError):
        husimi(psi, 0.5, 0.5)
    with pytest.raises(ValueError):
        husimi(psi, 0.1, 20.0)


def test_husimi_density_contract_on_evolved_field():
    box = BoxSpec(48.0, 128, 2)
    obs = ObstacleConfig(np.mod(np.array([[0.0, 0.3], [3.0, -1.0]]), 48.0), 48.0, 0.0, 0)
    V = build_potential_field(box, obs, PotentialSpec.gaussian(0.4, 1.0, 2))
    psi = init_wavepacket(box, gaussian_envelope(2.0, 2, [-6.0, 0.0]), 1.0, [1.5, 0.0])
    psi = evolve_split_step(psi, V, 0.05, 120)
    H = husimi(psi, 1.6, 0.7)
    assert H.min() >= -1e-12
    assert H.mass() == pytest.approx(1.0, abs=1e-6)


def test_rescale_and_initial_concentration():
    mu, sigma, u0 = 0.4, 0.5, np.array([1.0, 0.5])
    center = np.array([0.3, -0.2])
    errs = []
    for eps in (0.4, 0.2):
        l1, l2 = husimi_scales(eps, mu)
        side = max(2 * (abs(center).max() / eps + 6 * sigma / eps), 4 * np.pi / l2 * 1.01)
        box = BoxSpec(side, 256, 2)
        psi = init_wavepacket(box, gaussian_envelope(sigma, 2, center), eps, u0)
        H = rescale_macroscopic(husimi(psi, l1, l2), eps, mu)
        assert H.mass() == pytest.approx(1.0, abs=1e-6)
        X, Vm = H.mean()
        err = max(np.max(np.abs(X - center)), np.max(np.abs(Vm - u0)))
        assert err <= eps**mu
        errs.append(err)
    with pytest.raises(ValueError):
        rescale_macroscopic(H, 0.4, mu)


def gaussian_density(dim=1, n=121):
    x = np.linspace(-6, 6, n)
    v = np.linspace(-5, 7, n)
    vals = np.exp(-(x[:, None] - 0.5) ** 2 / 2 - (v[None] - 1.0) ** 2 / 2) / (2 * np.pi)
    return PhaseSpaceDensity([x], [v], vals, {})


def test_weak_test_separable_product():
    H = gaussian_density()
    J = TestFunction.make("gaussian", x0=[0.0], sx=1.0, v0=[1.5], sv=2.0)
    # product of two 1D Gaussian integrals
    gx = np.sqrt(1 / 2) * np.exp(-0.25 / 4)
    gv = np.sqrt(4 / 5) * np.exp(-0.25 / 10)
    assert weak_test(H, J) == pytest.approx(gx * gv, rel=1e-10)


def test_weak_test_resolution_convergence():
    J = TestFunction.make("cos_gauss", kx=[0.8], kv=[0.3], x0=[0.0], sx=2.0, v0=[0.0], sv=3.0)
    a = weak_test(gaussian_density(n=61), J)
    b = weak_test(gaussian_density(n=121), J)
    assert abs(a - b) < 1e-4


def test_gaussian_average_matches_quadrature():
    rng = np.random.default_rng(3)
    for J in default_suite(2, [1.2, 0.0], 0.5):
        mean = rng.normal(size=2)
        V = rng.normal(size=2)
        X = rng.normal(mean, 0.7, size=(400_000, 2))
        mc = J(X, V[None]).mean()
        assert J.gaussian_average(mean, 0.49, V) == pytest.approx(mc, abs=5e-3)


def test_test_function_bounds():
    pts = np.random.default_rng(0).normal(scale=3, size=(20000, 2))
    for J in default_suite(2, [1.0, 0.0], 1.0):
        sup, _ = J.bounds()
        assert np.max(np.abs(J(pts, pts[::-1]))) <= sup + 1e-12


def test_density_round_trip(tmp_path):
    H = gaussian_density(n=11)
    write_density(H, tmp_path / "h.txt")
    back = read_density(tmp_path / "h.txt")
    assert np.array_equal(back.values, H.values)
    assert np.array_equal(back.V_axes[0], H.V_axes[0])


def test_wigner_lattice_spacing():
    box = BoxSpec(10.0, 32, 1)
    lat = wigner_lattice(box)
    assert lat.size == 16 and np.allclose(np.diff(lat), 2 * np.pi / 10)
