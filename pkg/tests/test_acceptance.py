"""Acceptance criteria.  Each test prints one PASS/FAIL line (collected in the terminal summary).

Run with ``pytest tests/test_acceptance.py -v``; the convergence ladder needs ``-m slow``.
"""
import json
from pathlib import Path

import numpy as np
import pytest

from qlorentz.boltzmann import BoltzmannKernel, InitialData, mc_evolve, series_evolve
from qlorentz.duhamel import alpha_kernel_K, duhamel_decomposition, free_kernel_K, semigroup_split
from qlorentz.harness import (ConfigError, ExperimentConfig, ladder_verdict, persist, run_cell,
                              run_convergence_study)
from qlorentz.phase_space import default_suite
from qlorentz.potential import ObstacleConfig, PotentialSpec
from qlorentz.scattering import (build_tables, on_shell_amplitude, optical_theorem_residual,
                                 partial_wave_total, phase_shift_oracle, total_cross_section)
from qlorentz.schrodinger import (BoxSpec, build_potential_field, default_dt, evolve_split_step,
                                  gaussian_envelope, init_wavepacket)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SEED = 20240611


# 1 -------------------------------------------------------------------------------
@pytest.mark.parametrize("dim", [2, 3])
def test_c1_optical_theorem(dim, criterion):
    spec = PotentialSpec.gaussian(0.3, 1.0, dim)
    res = {v: optical_theorem_residual(spec, v).residual for v in (0.8, 1.2, 1.5, 2.0, 2.5)}
    worst = max(res.values())
    assert criterion(1, worst <= 1e-3, f"optical residual {dim}D, 5 speeds: max {worst:.2e} <= 1e-3")


# 2 -------------------------------------------------------------------------------
@pytest.mark.parametrize("dim", [2, 3])
def test_c2_born_vs_partial_waves(dim, criterion):
    spec = PotentialSpec.gaussian(0.5, 1.0, dim)
    rel = []
    for v in (0.8, 1.5, 2.5):
        pw = partial_wave_total(phase_shift_oracle(spec, 0.5 * v * v), v, dim)
        rel.append(abs(total_cross_section(spec, v) - pw) / pw)
    # first Born: the relative deviation of T from V0_hat is O(lambda), so it halves with lambda
    v, c = 1.3, np.linspace(-1, 1, 7)
    dev = []
    for lam in (0.1, 0.05):
        s = PotentialSpec.gaussian(lam, 1.0, dim)
        born1 = s.fourier(v * np.sqrt(2 - 2 * c))
        dev.append(np.max(np.abs(on_shell_amplitude(s, v)(c) - born1)) / np.max(np.abs(born1)))
    ratio = dev[0] / dev[1]
    ok = max(rel) <= 1e-3 and abs(ratio - 2) <= 0.3
    assert criterion(2, ok, f"{dim}D sigma_tot vs partial waves max rel {max(rel):.2e}; "
                            f"first-Born deviation ratio {ratio:.3f} (~2)")


# 3 -------------------------------------------------------------------------------
def test_c3_alpha_representation(criterion):
    rng = np.random.default_rng(SEED)
    errs = []
    for case in range(20):
        m = int(rng.integers(1, 5))
        d = int(rng.integers(2, 4))
        ps = [rng.uniform(-1.5, 1.5, d) for _ in range(m + 1)]
        t = float(rng.uniform(0.2, 10.0))
        errs.append(abs(alpha_kernel_K(t, ps).value - free_kernel_K(t, ps)))
    worst = max(errs)
    assert criterion(3, worst <= 1e-6, f"alpha representation, 20 cases m<=4: max |diff| {worst:.2e}")


# 4 -------------------------------------------------------------------------------
def test_c4_semigroup(criterion):
    rng = np.random.default_rng(SEED + 1)
    errs = []
    for case in range(10):
        n = int(rng.integers(2, 6))
        ps = [rng.uniform(-1.5, 1.5, 2) for _ in range(n)]
        t = float(rng.uniform(0.2, 10.0))
        size = int(rng.integers(1, n))
        part = set(rng.choice(n, size=size, replace=False).tolist())
        errs.append(abs(semigroup_split(t, ps, part) - free_kernel_K(t, ps)))
    worst = max(errs)
    assert criterion(4, worst <= 1e-6, f"semigroup, 10 random partitions: max |diff| {worst:.2e}")


# 5 -------------------------------------------------------------------------------
def test_c5_duhamel_truncation(criterion):
    box = BoxSpec(40.0, 128, 2)
    rng = np.random.default_rng(11)
    obs = ObstacleConfig(np.mod(rng.uniform(-3, 3, size=(3, 2)), box.side), box.side, 0.0, 11)
    psi0 = init_wavepacket(box, gaussian_envelope(2.0, 2, [-8.0, 0.0]), 1.0, [1.5, 0.0])
    res = {}
    for lam in (0.2, 0.1):
        spec = PotentialSpec.gaussian(lam, 1.0, 2)
        res[lam] = [duhamel_decomposition(6.0, m0, obs, psi0, spec).residual for m0 in (1, 2, 3)]
    decreasing = all(r[0] > r[1] > r[2] for r in res.values())
    ratios = [a / b for a, b in zip(res[0.2], res[0.1])]
    scaling = all(2**m0 / 2 <= r <= 2**m0 * 2 for m0, r in zip((1, 2, 3), ratios))
    assert criterion(5, decreasing and scaling,
                     "Duhamel residual lambda=0.2: " + ", ".join(f"{r:.2e}" for r in res[0.2])
                     + "; halving ratios " + ", ".join(f"{r:.2f}" for r in ratios) + " (~2, 4, 8)")


# 6 -------------------------------------------------------------------------------
def test_c6_husimi_contract(criterion):
    cfg = ExperimentConfig.from_dict({
        "potential": {"profile": "gaussian", "amplitude": 0.3, "range": 1.0, "dim": 2},
        "epsilons": [0.5, 0.4, 0.3], "u0": [1.5, 0.0], "T": 0.5, "realizations": 2, "seed": SEED})
    mins, masses = [], []
    for i in range(len(cfg.epsilons)):
        for r in range(cfg.realizations):
            cell = run_cell(cfg.to_dict(), i, r)
            assert cell["error"] is None, cell["error"]
            mins.append(cell["diagnostics"]["husimi_min"])
            masses.append(cell["diagnostics"]["husimi_mass"])
    lo, dm = min(mins), max(abs(m - 1) for m in masses)
    ok = lo >= -1e-12 and dm <= 1e-6
    assert criterion(6, ok, f"Husimi on {len(mins)} evolved fields: min {lo:.1e}, |mass-1| <= {dm:.1e}")


# 7 -------------------------------------------------------------------------------
def test_c7_schrodinger(criterion):
    # free closed form
    box = BoxSpec(80.0, 256, 2)
    s, u, t = 1.5, np.array([1.0, -0.5]), 6.0
    out = evolve_split_step(init_wavepacket(box, gaussian_envelope(s, 2), 1.0, u),
                            np.zeros(box.shape), t / 50, 50)
    var = s**2 * (1 + t**2 / (4 * s**4))
    X, Y = box.coords()
    exact = np.exp(-((X - u[0] * t) ** 2 + (Y - u[1] * t) ** 2) / (2 * var)) / (2 * np.pi * var)
    free_err = np.max(np.abs(np.abs(out.amplitudes) ** 2 - exact)) / exact.max()
    # unitarity in a scattering configuration
    box = BoxSpec(32.0, 128, 2)
    spec = PotentialSpec.gaussian(0.5, 1.0, 2)
    obs = ObstacleConfig(np.mod(np.array([[2.0, 0.5], [-3.0, -1.0], [5.0, 2.0]]), 32.0), 32.0, 0.0, 0)
    V = build_potential_field(box, obs, spec)
    psi = init_wavepacket(box, gaussian_envelope(2.0, 2, [-6.0, 0.0]), 1.0, [1.2, 0.0])
    drift = abs(evolve_split_step(psi, V, default_dt(V, spec, 1.2), 1000).norm() - psi.norm())
    # second order in dt
    box = BoxSpec(32.0, 64, 2)
    V = build_potential_field(box, obs, spec)
    psi = init_wavepacket(box, gaussian_envelope(2.0, 2, [-6.0, 0.0]), 1.0, [1.2, 0.0])
    ref = evolve_split_step(psi, V, 4.0 / 640, 640).amplitudes
    err = [np.sqrt(np.sum(np.abs(evolve_split_step(psi, V, 4.0 / k, k).amplitudes - ref) ** 2) * box.cell)
           for k in (40, 80)]
    ratio = err[0] / err[1]
    ok = drift <= 1e-9 and free_err <= 1e-6 and abs(ratio - 4) <= 0.5
    assert criterion(7, ok, f"Schrodinger: norm drift {drift:.1e} over 1000 steps, free closed form "
                            f"{free_err:.1e}, dt halving ratio {ratio:.3f}")


# 8 -------------------------------------------------------------------------------
@pytest.mark.parametrize("dim", [2, 3])
def test_c8_series_vs_monte_carlo(dim, criterion):
    speed = 1.5
    tm, cs, _ = build_tables(PotentialSpec.gaussian(0.25, 1.0, dim), [speed])
    u0 = np.zeros(dim)
    u0[0] = speed
    F0 = InitialData(tuple(np.zeros(dim)), 0.5, tuple(u0))
    worst, worst_unc, ok = 0.0, 0.0, True
    for lam_T in (0.5, 1.0, 2.0):
        k = BoltzmannKernel(lam_T / cs.total[0], cs, speed, float(tm.values[0, -1].imag))
        ens = mc_evolve(F0, k, 1.0, 100_000, seed=SEED)
        for J in default_suite(dim, F0.u0, F0.sigma):
            series = series_evolve(F0, k, 1.0, 12, J).total
            mc, se = ens.estimate(J)
            z = abs(series - mc) / se
            worst = max(worst, z)
            ok &= z <= 3
        p = np.exp(-lam_T)
        frac = np.mean(ens.n_collisions == 0)
        z = abs(frac - p) / np.sqrt(p * (1 - p) / ens.n_collisions.size)
        worst_unc = max(worst_unc, z)
        ok &= z <= 3
    assert criterion(8, ok, f"{dim}D series vs MC (n=1e5, Lambda T in 0.5/1/2): max {worst:.2f} se; "
                            f"uncollided fraction max {worst_unc:.2f} sigma")


# 9 -------------------------------------------------------------------------------
@pytest.mark.slow
@pytest.mark.parametrize("name", ["ladder_2d.yaml", "ladder_3d.yaml"])
def test_c9_convergence_ladder(name, criterion, tmp_path):
    cfg = ExperimentConfig.from_yaml(CONFIGS / name)
    try:
        rec = run_convergence_study(cfg)
    except ConfigError as exc:
        criterion(9, False, f"{name}: not run: {exc}")
        raise
    persist(rec, tmp_path / "record.json")
    v = ladder_verdict(rec.summary)
    rows = "; ".join(f"eps {r['eps']:g}: {r['delta']:.4f}+-{r['delta_se']:.4f}" for r in rec.summary)
    assert criterion(9, v["passed"], f"{name}: {rows}; inversions {v['inversions']}, "
                                     f"drop x{v['drop']:.2f}")


# 10 ------------------------------------------------------------------------------
def test_c10_bit_identical_rerun(criterion):
    def outputs():
        tm, cs, _ = build_tables(PotentialSpec.gaussian(0.25, 1.0, 2), [1.5])
        k = BoltzmannKernel(1.0 / cs.total[0], cs, 1.5, float(tm.values[0, -1].imag))
        F0 = InitialData((0.0, 0.0), 0.5, (1.5, 0.0))
        ens = mc_evolve(F0, k, 1.0, 20_000, seed=SEED)
        J = default_suite(2, F0.u0, F0.sigma)[0]
        cfg = ExperimentConfig.from_dict({
            "potential": {"profile": "gaussian", "amplitude": 0.3, "range": 1.0, "dim": 2},
            "epsilons": [0.5], "u0": [1.5, 0.0], "T": 0.5, "realizations": 1, "seed": SEED})
        cell = run_cell(cfg.to_dict(), 0, 0)
        cell.pop("elapsed")
        return [cs.differential.tobytes(), tm.values.tobytes(), ens.X.tobytes(), ens.V.tobytes(),
                repr(series_evolve(F0, k, 1.0, 8, J).total).encode(),
                json.dumps(cell, sort_keys=True).encode()]
    a, b = outputs(), outputs()
    same = [x == y for x, y in zip(a, b)]
    assert criterion(10, all(same), f"rerun with same seeds: {sum(same)}/{len(same)} outputs "
                                    "bit-identical (tables, MC ensemble, series, study cell)")
