import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from qlorentz.duhamel import (MAX_HISTORIES, CollisionHistory, HistoryBlowup, KernelEvalPlan,
                              alpha_kernel_K, count_histories, duhamel_decomposition,
                              duhamel_residual, enumerate_histories, eta_of_t,
                              exp_divided_difference, free_kernel_K, psi_A,
                              resummed_kernel_scriptK, semigroup_split)
from qlorentz.potential import ObstacleConfig, PotentialSpec
from qlorentz.schrodinger import BoxSpec, evolve_split_step, gaussian_envelope, init_wavepacket

momentum = st.lists(st.floats(-2.0, 2.0), min_size=2, max_size=2).map(np.array)


def test_single_momentum_is_free_phase():
    p = np.array([0.6, -0.3])
    assert free_kernel_K(2.5, [p]) == pytest.approx(np.exp(-1j * 2.5 * 0.5 * p @ p), rel=1e-15)


def test_one_collision_closed_form_and_quadrature():
    t, r0, r1 = 3.0, 0.9, 0.4
    e0, e1 = 0.5 * r0**2, 0.5 * r1**2
    closed = (-1j) * (np.exp(-1j * t * e0) - np.exp(-1j * t * e1)) / (-1j * (e0 - e1))
    assert free_kernel_K(t, [r0, r1]) == pytest.approx(closed, rel=1e-13)
    # -i int_0^t e^{-i s e0} e^{-i (t - s) e1} ds
    f = lambda s, part: (-1j * np.exp(-1j * s * e0 - 1j * (t - s) * e1)).__getattribute__(part)
    quad = integrate.quad(f, 0, t, args=("real",))[0] + 1j * integrate.quad(f, 0, t, args=("imag",))[0]
    assert free_kernel_K(t, [r0, r1]) == pytest.approx(quad, rel=1e-10)


def test_kernel_at_time_zero():
    assert free_kernel_K(0.0, [1.0]) == 1.0
    assert free_kernel_K(0.0, [1.0, 0.5]) == 0.0
    with pytest.raises(ValueError):
        free_kernel_K(-1.0, [1.0])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 2.5), min_size=2, max_size=5), st.floats(0.1, 10.0), st.randoms())
def test_permutation_invariance(radii, t, rnd):
    perm = list(radii)
    rnd.shuffle(perm)
    assert free_kernel_K(t, perm) == pytest.approx(free_kernel_K(t, radii), rel=1e-9, abs=1e-12)


def test_degenerate_energy_continuity():
    t, E = 4.0, 0.6
    delta = 1e-6
    generic = exp_divided_difference(t, [[E - delta / 2, E + delta / 2]])[0]
    confluent = exp_divided_difference(t, [[E, E]])[0]
    assert abs(generic - confluent) <= 1e-8
    # three coincident energies: (-it)^2 / 2 e^{-itE}
    assert exp_divided_difference(t, [[E, E, E]])[0] == pytest.approx((-1j * t) ** 2 / 2 * np.exp(-1j * t * E))


def test_alpha_representation_examples(rng):
    p = [np.array([0.7, 0.2])]
    assert alpha_kernel_K(3.0, p).value == pytest.approx(free_kernel_K(3.0, p), abs=1e-8)
    for _ in range(4):
        m = rng.integers(1, 5)
        ps = [rng.uniform(-1.5, 1.5, 3) for _ in range(m + 1)]
        t = rng.uniform(0.2, 10.0)
        kv = alpha_kernel_K(t, ps)
        assert abs(kv.value - free_kernel_K(t, ps)) <= 1e-6
        assert kv.tail_bound <= 1e-8


def test_alpha_representation_eta_invariance():
    ps = [1.1, 0.3, 0.8]
    a = alpha_kernel_K(5.0, ps, eta=0.2).value
    b = alpha_kernel_K(5.0, ps, eta=1.0).value
    assert abs(a - b) <= 1e-8


def test_eta_of_t():
    assert eta_of_t(0.5) == 1.0 and eta_of_t(4.0) == 0.25
    plan = KernelEvalPlan(4.0, [0.3, 0.9], "alpha-representation")
    assert plan.eta == 0.25
    assert plan.evaluate() == pytest.approx(free_kernel_K(4.0, [0.3, 0.9]), abs=1e-6)
    with pytest.raises(ValueError):
        KernelEvalPlan(1.0, [0.3], "trapezoid")


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(0.0, 2.0), min_size=2, max_size=5), st.floats(0.1, 8.0), st.data())
def test_semigroup_property(radii, t, data):
    n = len(radii)
    part = data.draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=n - 1))
    assert semigroup_split(t, radii, part) == pytest.approx(free_kernel_K(t, radii), abs=1e-6)


# -- resummed kernel ----------------------------------------------------------

P0, P1 = np.array([0.8, 0.1]), np.array([-0.2, 0.7])


def test_scriptK_zero_amplitude():
    r = resummed_kernel_scriptK(1.0, [P0, P1], PotentialSpec.gaussian(0.0, 1.0, 2))
    assert r.value == 0


def _onepair(s, a, b):
    return -1j * s * np.exp(-0.5j * s * (a + b)) * np.sinc(s * (a - b) / (2 * np.pi))


def brute_force_k2(spec, t, n=49, Q=7.0, ns=32):
    """k = 1 and k = 2 internal-collision terms by direct summation over internal momenta.

    k = 1: int dq K(t; p0, q, p1) V(p0 - q) V(q - p1).
    k = 2: the four-momentum kernel split with the semigroup identity into two
    one-collision kernels, so the double momentum sum becomes matrix products.
    """
    g = np.linspace(-Q, Q, n)
    h = g[1] - g[0]
    q = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    w = h * h / (2 * np.pi)
    E0, E1 = 0.5 * P0 @ P0, 0.5 * P1 @ P1
    Eq = 0.5 * np.sum(q * q, 1)
    V = lambda a, b: spec.fourier(np.linalg.norm(a - b, axis=-1))
    a, b = V(P0, q), V(q, P1)
    EE = np.column_stack([np.full_like(Eq, E0), Eq, np.full_like(Eq, E1)])
    k1 = np.sum(exp_divided_difference(t, EE) * a * b) * w
    M = V(q[:, None, :], q[None]) * w
    x, ws = np.polynomial.legendre.leggauss(ns)
    k2 = 0j
    for s, wi in zip(0.5 * t * (x + 1), 0.5 * t * ws):
        k2 += -1j * wi * ((_onepair(s, E0, Eq) * a * w) @ (M @ (_onepair(t - s, Eq, E1) * b)))
    return k1, k2


def test_scriptK_matches_internal_momentum_sum():
    spec = PotentialSpec.gaussian(0.3, 1.0, 2)
    t = 1.0
    first = free_kernel_K(t, [P0, P1]) * spec.fourier(np.linalg.norm(P0 - P1))
    k1, k2 = brute_force_k2(spec, t)
    r = resummed_kernel_scriptK(t, [P0, P1], spec, k_max=2, order=4)
    assert abs(r.value - (first + k1 + k2)) <= r.quad_error + r.tail_bound
    assert abs(k2) > 10 * (r.quad_error + r.tail_bound)     # the k = 2 term is resolved


def test_scriptK_first_order_consistency():
    t = 1.0
    dev = []
    for lam in (0.1, 0.05):
        spec = PotentialSpec.gaussian(lam, 1.0, 2)
        first = free_kernel_K(t, [P0, P1]) * spec.fourier(np.linalg.norm(P0 - P1))
        r = resummed_kernel_scriptK(t, [P0, P1], spec, k_max=2, order=4)
        assert r.first_order == pytest.approx(first)
        dev.append(abs(r.value - first))
    assert dev[0] / dev[1] == pytest.approx(4.0, rel=0.15)


def test_scriptK_validation():
    spec = PotentialSpec.gaussian(0.1, 1.0, 2)
    with pytest.raises(ValueError):
        resummed_kernel_scriptK(1.0, [P0], spec)
    with pytest.raises(ValueError):
        resummed_kernel_scriptK(0.0, [P0, P1], spec)


# -- histories -------------------------------------------------------------------

def test_collision_history_invariants():
    assert CollisionHistory((0, 1, 0)).recollision_free is False
    assert CollisionHistory((2, 0, 1)).recollision_free
    with pytest.raises(ValueError):
        CollisionHistory((1, 1))


@pytest.mark.parametrize("n,m", [(3, 2), (4, 3), (2, 3)])
def test_enumeration_counts(n, m):
    hs = enumerate_histories(n, m)
    assert len(hs) == count_histories(n, m)
    assert len(set(hs)) == len(hs)
    assert all(h.recollision_free for h in hs)
    full = enumerate_histories(n, m, no_recollision=False)
    assert len(full) == count_histories(n, m, no_recollision=False)


def test_enumeration_guard():
    with pytest.raises(HistoryBlowup):
        enumerate_histories(30, 3)
    assert count_histories(30, 3) > MAX_HISTORIES


def small_setup(lam=0.2, n=64, side=32.0):
    box = BoxSpec(side, n, 2)
    obs = ObstacleConfig(np.mod(np.array([[-2.0, 0.5], [2.0, -1.0]]), side), side, 0.0, 0)
    psi0 = init_wavepacket(box, gaussian_envelope(1.5, 2, [-6.0, 0.0]), 1.0, [1.5, 0.0])
    return box, obs, psi0, PotentialSpec.gaussian(lam, 1.0, 2)


def test_empty_history_is_free_evolution():
    box, obs, psi0, spec = small_setup()
    out = psi_A(3.0, (), obs, psi0, spec)
    free = evolve_split_step(psi0, np.zeros(box.shape), 0.1, 30).to_momentum()
    assert np.allclose(out.amplitudes, free.amplitudes, atol=1e-12)


def test_single_obstacle_phase_covariance():
    box, obs, psi0, spec = small_setup()
    one = obs.subset(0)
    j = 5                                          # shift by a whole number of grid cells
    a = np.array([j * box.spacing, 0.0])
    moved = psi_A(4.0, (0,), one.shifted(a), psi0, spec, dt=0.05)
    # translate the initial packet the other way, compute, then translate back
    back = psi0.copy()
    back.amplitudes = np.roll(psi0.amplitudes, -j, axis=0)
    ref = psi_A(4.0, (0,), one, back, spec, dt=0.05)
    KX, KY = box.k_coords()
    expect = ref.amplitudes * np.exp(-1j * (KX * a[0] + KY * a[1]))
    assert np.max(np.abs(moved.amplitudes - expect)) <= 1e-10 * np.max(np.abs(expect))


def test_residual_zero_amplitude():
    box, obs, psi0, spec = small_setup(lam=0.0)
    assert duhamel_residual(3.0, 1, obs, psi0, spec, dt=0.05) <= 1e-12


def test_residual_decreases_in_order():
    box, obs, psi0, spec = small_setup(lam=0.15)
    reps = [duhamel_decomposition(6.0, m0, obs, psi0, spec) for m0 in (1, 2, 3)]
    res = [r.residual for r in reps]
    assert res[0] > res[1] > res[2]
    for r in reps:
        assert r.partial_norm <= 1 + r.residual
