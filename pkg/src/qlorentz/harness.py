"""Experiment configuration, the low-density convergence study, run records and the CLI.

Configuration files are YAML (nested blocks, ``#`` comments).  Example::

    potential: {profile: gaussian, amplitude: 0.3, range: 1.0, dim: 2}
    epsilons: [0.4, 0.3, 0.2, 0.15]
    mu: 0.25
    rho0: 1.0            # macroscopic obstacle density (per unit Lebesgue volume)
    u0: [1.5, 0.0]
    T: 0.5
    sigma: 0.5           # |h|^2 has variance sigma^2 per axis
    realizations: 8
    seed: 1234
    output: runs/demo

Optional blocks: ``grid`` (points_per_range, margin, n_max), ``dt`` (safety,
steps_per_crossing), ``husimi`` (window, max_bytes), ``boltzmann`` (m_max, tol, n_particles),
``xsect`` (speeds, n_cos, etas), ``duhamel`` (n_obstacles, t, side, n, sigma,
m0_max), ``table`` (path of a precomputed cross-section table).

The number of worker processes comes from the QLORENTZ_WORKERS environment
variable (default 1).  Results never depend on it.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import boltzmann as bz
from .io import FormatError, write_table
from .phase_space import (default_suite, husimi, husimi_nbytes, husimi_scales, rescale_macroscopic,
                          weak_test)
from .potential import ObstacleConfig, PotentialSpec, sample_obstacles
from .schrodinger import (BoxSpec, EvolutionBlowup, default_dt, evolve_split_step,
                          gaussian_envelope, init_wavepacket, load_checkpoint, save_checkpoint,
                          build_potential_field, norm_and_energy)

WORKERS_ENV = "QLORENTZ_WORKERS"


class ConfigError(ValueError):
    pass


class IntegrityError(RuntimeError):
    pass


class StudyError(RuntimeError):
    pass


def workers_from_env() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer") from exc


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _sha256(obj) -> str:
    return hashlib.sha256(_canonical(obj).encode()).hexdigest()


DEFAULTS = {
    "mu": 0.25,
    "rho0": 1.0,
    "T": 0.5,
    "sigma": 0.5,
    "center": None,
    "realizations": 8,
    "seed": 0,
    "output": "runs/study",
    "table": None,
    "tests": "default",
    "grid": {"points_per_range": 4, "margin": 8.0, "n_max": 2048},
    "dt": {"safety": 0.02, "steps_per_crossing": 25},
    "husimi": {"window": 9.0, "max_bytes": 1.5e9},
    "boltzmann": {"m_max": None, "tol": 1e-4, "n_particles": 100_000, "mc_check": True},
    "xsect": {"speeds": None, "n_cos": 257, "etas": None},
    "duhamel": {"n_obstacles": 3, "t": 6.0, "side": 40.0, "n": 128, "sigma": 2.0, "m0_max": 3,
                "start": -8.0, "spread": 3.0},
}


@dataclass
class ExperimentConfig:
    potential: PotentialSpec
    epsilons: list
    mu: float
    rho0: float
    u0: tuple
    T: float
    sigma: float = 0.5
    center: tuple | None = None
    realizations: int = 8
    seed: int = 0
    output: str = "runs/study"
    table: str | None = None
    tests: str = "default"
    grid: dict = field(default_factory=dict)
    dt: dict = field(default_factory=dict)
    husimi: dict = field(default_factory=dict)
    boltzmann: dict = field(default_factory=dict)
    xsect: dict = field(default_factory=dict)
    duhamel: dict = field(default_factory=dict)
    base_dir: str | None = None

    def __post_init__(self):
        self.u0 = tuple(float(x) for x in self.u0)
        self.epsilons = [float(e) for e in self.epsilons]
        if self.center is None:
            self.center = (0.0,) * len(self.u0)
        self.center = tuple(float(x) for x in self.center)
        for key in ("grid", "dt", "husimi", "boltzmann", "xsect", "duhamel"):
            merged = dict(DEFAULTS[key])
            merged.update(getattr(self, key) or {})
            setattr(self, key, merged)
        self.validate()

    @property
    def dim(self) -> int:
        return self.potential.dim

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.u0))

    def validate(self):
        if not 0 < self.mu < 0.5:
            raise ConfigError("mu must lie in (0, 1/2)")
        if not self.epsilons or any(not 0 < e <= 1 for e in self.epsilons):
            raise ConfigError("epsilons must lie in (0, 1]")
        if len(self.u0) != self.dim or len(self.center) != self.dim:
            raise ConfigError("u0 / center dimension does not match the potential")
        if self.rho0 < 0 or self.T < 0 or self.sigma <= 0:
            raise ConfigError("rho0 and T must be non-negative, sigma positive")
        if self.realizations < 1:
            raise ConfigError("need at least one realization")
        if self.tests != "default":
            raise ConfigError(f"unknown test-function suite {self.tests!r}")

    # -- serialisation
    @classmethod
    def from_dict(cls, block: dict, base_dir=None) -> "ExperimentConfig":
        block = copy.deepcopy(block)
        unknown = set(block) - set(DEFAULTS) - {"potential", "epsilons", "u0"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("potential", "epsilons", "u0"):
            if key not in block:
                raise ConfigError(f"missing config key {key!r}")
        pot = PotentialSpec.from_dict(block.pop("potential"), base_dir)
        kw = {k: copy.deepcopy(v) for k, v in DEFAULTS.items() if k not in ("grid", "dt", "husimi",
                                                                           "boltzmann", "xsect", "duhamel")}
        kw.update(block)
        return cls(potential=pot, base_dir=str(base_dir) if base_dir else None, **kw)

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            block = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(block, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(block, path.parent)

    def to_dict(self) -> dict:
        return {"potential": self.potential.to_dict(), "epsilons": list(self.epsilons), "mu": self.mu,
                "rho0": self.rho0, "u0": list(self.u0), "T": self.T, "sigma": self.sigma,
                "center": list(self.center), "realizations": self.realizations, "seed": self.seed,
                "output": self.output, "table": self.table, "tests": self.tests,
                "grid": dict(self.grid), "dt": dict(self.dt), "husimi": dict(self.husimi),
                "boltzmann": dict(self.boltzmann), "xsect": dict(self.xsect),
                "duhamel": dict(self.duhamel)}

    def hash(self) -> str:
        return _sha256(self.to_dict())

    # -- derived quantities
    def micro_time(self, eps) -> float:
        return self.T / eps

    def micro_density(self, eps) -> float:
        return self.rho0 * eps

    def box_for(self, eps) -> BoxSpec:
        """Smallest power-of-two grid resolving the potential in a box the packet does not wrap."""
        g = self.grid
        s_micro = self.sigma / eps
        half = (self.speed * self.T + np.max(np.abs(self.center))) / eps + g["margin"] * s_micro
        l1, l2 = husimi_scales(eps, self.mu)
        side = max(2 * half, 2 * 2 * np.pi / l2 * 1.01)   # Husimi needs ell2 >= 2 dk
        h_max = min(self.potential.range / g["points_per_range"], l1 / 2)
        n = 1 << int(np.ceil(np.log2(side / h_max)))
        if n > g["n_max"]:
            raise ConfigError(f"eps = {eps:g} needs {n} points per side (n_max {g['n_max']})")
        box = BoxSpec(side, n, self.dim)
        box.validate(self.potential, self.u0)
        return box

    def check_husimi_memory(self, eps):
        """Lower estimate of the Husimi array for a field spread over the energy shell."""
        box = self.box_for(eps)
        l1, l2 = husimi_scales(eps, self.mu)
        reach = self.speed + 6 * eps / (2 * self.sigma)
        need = husimi_nbytes(box, l1, l2, -reach, reach)
        if need > self.husimi["max_bytes"]:
            raise ConfigError(f"eps = {eps:g}: Husimi array needs about {need / 1e9:.1f} GB "
                              f"(husimi.max_bytes {self.husimi['max_bytes'] / 1e9:.1f} GB)")
        return need

    def suite(self):
        return default_suite(self.dim, self.u0, self.sigma)

    def cell_seed(self, i_eps: int, realization: int) -> int:
        return int(np.random.SeedSequence([self.seed, i_eps, realization]).generate_state(1)[0])


# -- run records ----------------------------------------------------------------

@dataclass
class RunRecord:
    config: dict
    config_hash: str
    cells: list = field(default_factory=list)          # one dict per (eps, realization)
    reference: dict = field(default_factory=dict)      # per test id: series / mc values
    summary: list = field(default_factory=list)        # per eps
    diagnostics: dict = field(default_factory=dict)
    timestamps: dict = field(default_factory=dict)

    def content(self) -> dict:
        return {"config": self.config, "config_hash": self.config_hash, "cells": self.cells,
                "reference": self.reference, "summary": self.summary,
                "diagnostics": self.diagnostics, "timestamps": self.timestamps}

    def comparable(self) -> dict:
        """Content without timestamps (reproducibility comparisons)."""
        c = self.content()
        c.pop("timestamps")
        c["cells"] = [{k: v for k, v in cell.items() if k != "elapsed"} for cell in c["cells"]]
        return c


def persist(record: RunRecord, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = record.content()
    doc = {"format": "run_record", "sha256": _sha256(body), "record": body}
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, indent=1, sort_keys=True))
    tmp.replace(path)
    return path


def load(path) -> RunRecord:
    try:
        doc = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise IntegrityError(f"{path}: unreadable run record") from exc
    if not isinstance(doc, dict) or doc.get("format") != "run_record" or "record" not in doc:
        raise IntegrityError(f"{path}: not a run record")
    body = doc["record"]
    if _sha256(body) != doc.get("sha256"):
        raise IntegrityError(f"{path}: checksum mismatch")
    if _sha256(body["config"]) != body["config_hash"]:
        raise IntegrityError(f"{path}: config hash mismatch")
    return RunRecord(**body)


def merge(a: RunRecord, b: RunRecord) -> RunRecord:
    """Union of realization cells of two records with the same config hash."""
    if a.config_hash != b.config_hash:
        raise IntegrityError("cannot merge records with different config hashes")
    cells = {(c["eps"], c["realization"]): c for c in a.cells}
    for c in b.cells:
        cells.setdefault((c["eps"], c["realization"]), c)
    out = RunRecord(a.config, a.config_hash, [cells[k] for k in sorted(cells)],
                    a.reference or b.reference, [], dict(a.diagnostics), dict(a.timestamps))
    out.summary = summarize(out)
    return out


# -- study ---------------------------------------------------------------------

def build_reference_table(cfg: ExperimentConfig):
    """Cross-section table at the shell speed, loaded or computed."""
    from .scattering import build_tables, read_cross_sections, read_tmatrix
    if cfg.table:
        base = Path(cfg.base_dir or ".")
        cs = read_cross_sections(base / cfg.table)
        im_fwd = None
        tm_path = (base / cfg.table).with_name("tmatrix.txt")
        if tm_path.exists():
            tm = read_tmatrix(tm_path)
            i = int(np.argmin(np.abs(tm.speeds - cfg.speed)))
            im_fwd = float(tm.values[i, -1].imag)
        return cs, im_fwd, None
    kw = {"n_cos": cfg.xsect["n_cos"]}
    if cfg.xsect.get("etas"):
        kw["etas"] = tuple(cfg.xsect["etas"])
    tm, cs, opt = build_tables(cfg.potential, [cfg.speed], **kw)
    return cs, float(tm.values[0, -1].imag), opt[0]


def boltzmann_reference(cfg: ExperimentConfig, cs=None, im_fwd=None) -> dict:
    if cs is None:
        cs, im_fwd, _ = build_reference_table(cfg)
    kernel = bz.BoltzmannKernel.from_physical_density(cfg.rho0, cs, cfg.speed, im_fwd)
    F0 = bz.InitialData(cfg.center, cfg.sigma, cfg.u0)
    b = cfg.boltzmann
    out = {"rate": kernel.rate, "damping": kernel.damping(cfg.T),
           "optical_damping": kernel.optical_damping(cfg.T), "tests": {}}
    m_max = b["m_max"]
    if m_max is None:
        m_max = 0
        from scipy.stats import poisson
        while poisson.sf(m_max, kernel.rate * cfg.T) > b["tol"]:
            m_max += 1
    ens = bz.mc_evolve(F0, kernel, cfg.T, b["n_particles"], cfg.seed) if b["mc_check"] else None
    for J in cfg.suite():
        res = bz.series_evolve(F0, kernel, cfg.T, m_max, J, tol=b["tol"], seed=cfg.seed)
        entry = {"series": res.total, "quad_error": float(sum(res.quad_errors)) + res.tail_estimate,
                 "orders": res.orders}
        if ens is not None:
            entry["mc"], entry["mc_se"] = ens.estimate(J)
        out["tests"][J.id] = entry
    out["m_max"] = m_max
    return out


def run_cell(cfg_dict: dict, i_eps: int, realization: int) -> dict:
    """One (eps, realization) cell: sample, evolve, Husimi, weak tests."""
    cfg = ExperimentConfig.from_dict(cfg_dict)
    eps = cfg.epsilons[i_eps]
    seed = cfg.cell_seed(i_eps, realization)
    cell = {"eps": eps, "realization": realization, "seed": seed}
    t0 = time.perf_counter()
    try:
        box = cfg.box_for(eps)
        obs = sample_obstacles(box.side, cfg.micro_density(eps), seed, cfg.dim)
        h = gaussian_envelope(cfg.sigma, cfg.dim, cfg.center)
        psi0 = init_wavepacket(box, h, eps, cfg.u0)
        V = build_potential_field(box, obs, cfg.potential)
        dt = default_dt(V, cfg.potential, cfg.speed, cfg.dt["safety"], cfg.dt["steps_per_crossing"])
        t = cfg.micro_time(eps)
        steps = max(1, int(np.ceil(t / dt)))
        psi = evolve_split_step(psi0, V, t / steps, steps)
        n1, k1, p1 = norm_and_energy(psi, V)
        n0, k0, p0 = norm_and_energy(psi0, V)
        l1, l2 = husimi_scales(eps, cfg.mu)
        H = rescale_macroscopic(husimi(psi, l1, l2, window=cfg.husimi["window"]), eps, cfg.mu)
        cell["values"] = {J.id: weak_test(H, J) for J in cfg.suite()}
        cell["diagnostics"] = {"n_obstacles": len(obs), "box_side": box.side, "n": box.n,
                               "steps": steps, "dt": t / steps, "norm_drift": abs(n1 - n0),
                               "energy_drift": abs((k1 + p1) - (k0 + p0)),
                               "husimi_mass": H.mass(), "husimi_min": H.min(),
                               "mean_X": H.mean()[0].tolist(), "mean_V": H.mean()[1].tolist()}
        cell["error"] = None
    except (ValueError, RuntimeError, FloatingPointError, OverflowError) as exc:
        cell["values"] = None
        cell["error"] = f"{type(exc).__name__}: {exc}"
    cell["elapsed"] = time.perf_counter() - t0
    return cell


def summarize(record: RunRecord) -> list:
    """Per-eps realization means, standard errors and the discrepancy Delta(eps)."""
    cfg = record.config
    dim = len(cfg["u0"])
    grads = {J.id: J.bounds()[1] for J in default_suite(dim, cfg["u0"], cfg["sigma"])}
    rows = []
    for eps in cfg["epsilons"]:
        cells = [c for c in record.cells if c["eps"] == eps and c["values"] is not None]
        if not cells:
            rows.append({"eps": eps, "n": 0, "delta": None})
            continue
        per = {}
        for jid, ref in record.reference.get("tests", {}).items():
            v = np.array([c["values"][jid] for c in cells])
            # a single realization carries no spread estimate; report 0 rather than nan
            se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
            per[jid] = {"mean": float(v.mean()), "se": se, "ref": ref["series"],
                        "diff": float(abs(v.mean() - ref["series"])), "quad": ref["quad_error"]}
        if not per:
            rows.append({"eps": eps, "n": len(cells), "delta": None})
            continue
        worst = max(per, key=lambda j: per[j]["diff"])
        # Husimi smoothing adds variance eps^(2 mu) / 2 on each of the 2d phase-space
        # axes; second-order Taylor bias with |d^2 J| <~ g^2
        smooth = 0.5 * dim * eps ** (2 * cfg["mu"]) * grads.get(worst, 1.0) ** 2
        rows.append({"eps": eps, "n": len(cells), "delta": per[worst]["diff"],
                     "delta_se": per[worst]["se"], "worst_test": worst,
                     "budget": {"realization_spread": per[worst]["se"],
                                "smoothing_bias": smooth,
                                "quadrature": per[worst]["quad"]},
                     "tests": per})
        rows[-1]["budget_total"] = float(sum(rows[-1]["budget"].values()))
    return rows


def run_convergence_study(config: ExperimentConfig, workers: int | None = None,
                          reference: dict | None = None) -> RunRecord:
    workers = workers or workers_from_env()
    rec = RunRecord(config.to_dict(), config.hash())
    rec.timestamps["started"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    for eps in config.epsilons:
        config.check_husimi_memory(eps)   # resolution, no-wrap and memory checks before any work
    rec.reference = reference if reference is not None else boltzmann_reference(config)
    jobs = [(i, r) for i in range(len(config.epsilons)) for r in range(config.realizations)]
    cfg_dict = dict(config.to_dict())
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            futs = [ex.submit(run_cell, cfg_dict, i, r) for i, r in jobs]
            cells = [f.result() for f in futs]
    else:
        cells = [run_cell(cfg_dict, i, r) for i, r in jobs]
    rec.cells = cells
    failed = sum(c["error"] is not None for c in cells)
    rec.diagnostics["failed_cells"] = failed
    rec.summary = summarize(rec)
    rec.timestamps["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    if failed > 0.2 * len(cells):
        raise StudyError(f"{failed} of {len(cells)} cells failed; first: "
                         f"{next(c['error'] for c in cells if c['error'])}")
    return rec


def ladder_verdict(summary: list, factor: float = 2.0, inversions: int = 1) -> dict:
    """Nonincreasing Delta within error bars (allowing ``inversions``) and an overall drop."""
    rows = sorted([r for r in summary if r.get("delta") is not None], key=lambda r: -r["eps"])
    deltas = [r["delta"] for r in rows]
    errs = [2 * (r.get("delta_se") or 0.0) for r in rows]
    bad = sum(1 for a, b, ea, eb in zip(deltas, deltas[1:], errs, errs[1:])
              if b > a + np.hypot(ea, eb))
    drop = deltas[0] / deltas[-1] if len(deltas) > 1 and deltas[-1] > 0 else np.inf
    return {"deltas": deltas, "inversions": bad, "drop": drop,
            "passed": len(deltas) > 1 and bad <= inversions and drop >= factor}


# -- Duhamel check ---------------------------------------------------------------

def duhamel_table(cfg: ExperimentConfig, m0_max: int | None = None):
    """Residual vs m0 for a small obstacle cluster on the packet's path (2D)."""
    from .duhamel import duhamel_decomposition
    d = cfg.duhamel
    m0_max = m0_max or d["m0_max"]
    box = BoxSpec(d["side"], d["n"], cfg.dim)
    rng = np.random.default_rng(cfg.seed)
    pts = rng.uniform(-d["spread"], d["spread"], size=(d["n_obstacles"], cfg.dim))
    obs = ObstacleConfig(np.mod(pts, box.side), box.side, 0.0, cfg.seed)
    center = np.zeros(cfg.dim)
    center[0] = d["start"]
    psi0 = init_wavepacket(box, gaussian_envelope(d["sigma"], cfg.dim, center), 1.0, cfg.u0)
    rows = []
    for m0 in range(1, m0_max + 1):
        rep = duhamel_decomposition(d["t"], m0, obs, psi0, cfg.potential)
        rows.append([m0, rep.residual, rep.partial_norm, rep.exact_norm, rep.n_histories])
    return rows


# -- CLI -------------------------------------------------------------------------

VALIDATION_ERRORS = (ConfigError, FormatError, IntegrityError, KeyError, FileNotFoundError, ValueError)


def _parser():
    p = argparse.ArgumentParser(prog="qlorentz", description="Quantum Lorentz gas laboratory")
    sub = p.add_subparsers(dest="verb")
    x = sub.add_parser("xsect", help="T-matrix and cross-section tables")
    x.add_argument("--config", required=True)
    x.add_argument("--out", required=True)
    e = sub.add_parser("evolve", help="evolve one (eps, realization) cell and checkpoint it")
    e.add_argument("--config", required=True)
    e.add_argument("--eps-index", type=int, default=0)
    e.add_argument("--realization", type=int, default=0)
    e.add_argument("--out", required=True)
    h = sub.add_parser("husimi", help="Husimi density of a checkpoint")
    h.add_argument("--checkpoint", required=True)
    h.add_argument("--eps", type=float, required=True)
    h.add_argument("--mu", type=float, required=True)
    h.add_argument("--out", required=True)
    b = sub.add_parser("boltzmann", help="Boltzmann solvers")
    b.add_argument("mode", choices=["mc", "series"])
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--table", default=None)
    dc = sub.add_parser("duhamel-check", help="Duhamel truncation residual table")
    dc.add_argument("--config", required=True)
    dc.add_argument("--m0", type=int, default=3)
    dc.add_argument("--out", default=None)
    s = sub.add_parser("study", help="run the convergence study")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None)
    r = sub.add_parser("report", help="CSV summary of a run record")
    r.add_argument("--record", required=True)
    r.add_argument("--out", default=None)
    return p


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _cmd_xsect(a):
    from .scattering import build_tables, write_cross_sections, write_tmatrix
    cfg = ExperimentConfig.from_yaml(a.config)
    speeds = cfg.xsect["speeds"] or [cfg.speed]
    kw = {"n_cos": cfg.xsect["n_cos"], "workers": workers_from_env()}
    if cfg.xsect.get("etas"):
        kw["etas"] = tuple(cfg.xsect["etas"])
    tm, cs, opt = build_tables(cfg.potential, speeds, **kw)
    out = Path(a.out)
    write_tmatrix(tm, out / "tmatrix.txt")
    write_cross_sections(cs, out / "cross_sections.txt")
    rows = [[v, o.residual, o.absolute, o.im_forward, o.sigma_tot] for v, o in zip(cs.speeds, opt)]
    write_table(out / "optical.txt", "optical_residuals", {"potential": cfg.potential.to_dict()},
                ["speed", "relative", "absolute", "im_T_forward", "sigma_tot"], rows)
    return 0


def _cmd_evolve(a):
    cfg = ExperimentConfig.from_yaml(a.config)
    eps = cfg.epsilons[a.eps_index]
    seed = cfg.cell_seed(a.eps_index, a.realization)
    box = cfg.box_for(eps)
    obs = sample_obstacles(box.side, cfg.micro_density(eps), seed, cfg.dim)
    psi0 = init_wavepacket(box, gaussian_envelope(cfg.sigma, cfg.dim, cfg.center), eps, cfg.u0)
    V = build_potential_field(box, obs, cfg.potential)
    dt = default_dt(V, cfg.potential, cfg.speed, cfg.dt["safety"], cfg.dt["steps_per_crossing"])
    t = cfg.micro_time(eps)
    steps = max(1, int(np.ceil(t / dt)))
    psi = evolve_split_step(psi0, V, t / steps, steps)
    save_checkpoint(a.out, psi, t / steps, steps, seed, epsilon=eps, config_hash=cfg.hash())
    return 0


def _cmd_husimi(a):
    from .phase_space import write_density
    psi, _ = load_checkpoint(a.checkpoint)
    l1, l2 = husimi_scales(a.eps, a.mu)
    H = rescale_macroscopic(husimi(psi, l1, l2), a.eps, a.mu)
    write_density(H, a.out)
    return 0


def _cmd_boltzmann(a):
    from .scattering import read_cross_sections
    cfg = ExperimentConfig.from_yaml(a.config)
    if a.table:
        cs, im_fwd = read_cross_sections(a.table), None
    else:
        cs, im_fwd, _ = build_reference_table(cfg)
    kernel = bz.BoltzmannKernel.from_physical_density(cfg.rho0, cs, cfg.speed, im_fwd)
    F0 = bz.InitialData(cfg.center, cfg.sigma, cfg.u0)
    out = Path(a.out)
    if a.mode == "mc":
        ens = bz.mc_evolve(F0, kernel, cfg.T, cfg.boltzmann["n_particles"], cfg.seed)
        ens.save(out)
        return 0
    b = dict(cfg.boltzmann, mc_check=False)
    cfg.boltzmann = b
    ref = boltzmann_reference(cfg, cs, im_fwd)
    rows = [[i, v["series"], v["quad_error"]] for i, v in enumerate(ref["tests"].values())]
    write_table(out, "boltzmann_series", {"tests": list(ref["tests"]), "rate": ref["rate"],
                                          "T": cfg.T, "m_max": ref["m_max"]},
                ["test_index", "value", "error"], rows)
    return 0


def _cmd_duhamel(a):
    cfg = ExperimentConfig.from_yaml(a.config)
    rows = duhamel_table(cfg, a.m0)
    cols = ["m0", "residual", "partial_norm", "exact_norm", "n_histories"]
    if a.out:
        write_table(a.out, "duhamel_residuals", {"config_hash": cfg.hash()}, cols, rows)
    else:
        print("# columns: " + " ".join(cols))
        for r in rows:
            print(" ".join(repr(float(x)) for x in r))
    return 0


def _cmd_study(a):
    cfg = ExperimentConfig.from_yaml(a.config)
    rec = run_convergence_study(cfg)
    out = Path(a.out) if a.out else Path(cfg.output) / "record.json"
    persist(rec, out)
    v = ladder_verdict(rec.summary)
    print(json.dumps({"record": str(out), **{k: v[k] for k in ("deltas", "inversions", "drop", "passed")}}))
    return 0


def _cmd_report(a):
    rec = load(a.record)
    lines = ["eps,n,delta,delta_se,worst_test,realization_spread,smoothing_bias,quadrature"]
    for r in rec.summary:
        if r.get("delta") is None:
            lines.append(f"{r['eps']!r},{r['n']},,,,,,")
            continue
        b = r["budget"]
        lines.append(f"{r['eps']!r},{r['n']},{r['delta']!r},{r['delta_se']!r},\"{r['worst_test']}\","
                     f"{b['realization_spread']!r},{b['smoothing_bias']!r},{b['quadrature']!r}")
    text = "\n".join(lines) + "\n"
    if a.out:
        Path(a.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {"xsect": _cmd_xsect, "evolve": _cmd_evolve, "husimi": _cmd_husimi,
            "boltzmann": _cmd_boltzmann, "duhamel-check": _cmd_duhamel, "study": _cmd_study,
            "report": _cmd_report}


def cli_dispatch(argv=None) -> int:
    """Run one CLI verb.  Exit codes: 0 success, 1 validation error, 2 numerical failure."""
    parser = _parser()
    parser.__class__ = _Parser
    for action in parser._subparsers._group_actions if parser._subparsers else []:
        for sp in action.choices.values():
            sp.__class__ = _Parser
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(parser.format_usage() + f"error: {exc}\n")
        return 1
    if args.verb is None:
        sys.stderr.write(parser.format_usage())
        return 1
    try:
        return COMMANDS[args.verb](args)
    except VALIDATION_ERRORS as exc:
        sys.stderr.write(f"validation error: {exc}\n")
        return 1
    except (RuntimeError, FloatingPointError, ArithmeticError, EvolutionBlowup) as exc:
        sys.stderr.write(f"numerical failure: {type(exc).__name__}: {exc}\n")
        return 2


def main():
    sys.exit(cli_dispatch())
