"""Tabulated on-shell amplitudes and cross sections."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..conventions import shell_factor
from ..io import read_table, write_table
from .onshell import (DEFAULT_ETAS, angle_rule, on_shell_amplitude,
                      optical_theorem_residual, total_cross_section)


@dataclass(frozen=True)
class TMatrixTable:
    energies: np.ndarray          # E = v^2 / 2, sorted
    cos_angles: np.ndarray        # sorted grid in [-1, 1]
    values: np.ndarray            # complex (n_E, n_cos)
    residuals: np.ndarray         # extrapolation residual per energy
    eta_sequence: tuple
    dim: int = 3
    meta: dict = field(default_factory=dict)

    @property
    def speeds(self):
        return np.sqrt(2 * self.energies)


@dataclass(frozen=True)
class CrossSectionTable:
    speeds: np.ndarray
    cos_angles: np.ndarray
    differential: np.ndarray      # (n_speed, n_cos) per unit solid angle
    total: np.ndarray             # (n_speed,)
    quad_error: np.ndarray        # |total - solid-angle quadrature of the table|
    dim: int = 3
    meta: dict = field(default_factory=dict)

    def index_of(self, speed, rtol=1e-9):
        i = int(np.argmin(np.abs(self.speeds - speed)))
        if abs(self.speeds[i] - speed) > rtol * max(speed, 1.0):
            raise KeyError(f"speed {speed:g} not in cross-section table {self.speeds}")
        return i


def _one_speed(args):
    spec, speed, cos_grid, etas = args
    amp = on_shell_amplitude(spec, speed, etas)
    opt = optical_theorem_residual(spec, speed, amp)
    return amp(cos_grid), amp.residual, total_cross_section(spec, speed, amp), opt


def build_tables(spec, speeds, n_cos=257, etas=DEFAULT_ETAS, workers: int = 1):
    """(TMatrixTable, CrossSectionTable, optical residuals) on a speed grid.

    The angle grid is Gauss-Lobatto-like: uniform in cos theta including both
    end points, fine enough for inverse-CDF sampling.
    """
    speeds = np.sort(np.asarray(speeds, dtype=float))
    cos_grid = np.linspace(-1.0, 1.0, n_cos)
    jobs = [(spec, v, cos_grid, tuple(etas)) for v in speeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_one_speed, jobs))
    else:
        results = [_one_speed(j) for j in jobs]
    T = np.array([r[0] for r in results])
    resid = np.array([r[1] for r in results])
    tot = np.array([r[2] for r in results])
    opt = [r[3] for r in results]
    diff = 4 * np.pi * np.abs(T) ** 2 * shell_factor(speeds, spec.dim)[:, None]
    quad = np.abs(tot - np.array([_grid_total(d, cos_grid, spec.dim) for d in diff]))
    meta = {"potential": spec.to_dict()}
    tm = TMatrixTable(speeds**2 / 2, cos_grid, T, resid, tuple(etas), spec.dim, meta)
    cs = CrossSectionTable(speeds, cos_grid, diff, tot, quad, spec.dim, meta)
    return tm, cs, opt


def _grid_total(diff_row, cos_grid, dim):
    # solid-angle integral of a tabulated row (trapezoid in theta)
    if dim == 3:
        return 2 * np.pi * np.trapezoid(diff_row, cos_grid)
    theta = np.arccos(cos_grid)[::-1]
    return 2 * np.trapezoid(diff_row[::-1], theta)


CONVENTIONS = {
    "measure": "d^dx/(2pi)^(d/2)",
    "sigma_shell": "4pi|T|^2 |v|^(d-2)/2/(2pi)^(d/2)",
    "optical": "Im T(v,v) = -sigma_tot/2",
}


def write_tmatrix(table: TMatrixTable, path):
    E, C = np.meshgrid(table.energies, table.cos_angles, indexing="ij")
    sig = 4 * np.pi * np.abs(table.values) ** 2 * shell_factor(np.sqrt(2 * E), table.dim)
    rows = np.column_stack([E.ravel(), C.ravel(), table.values.real.ravel(),
                            table.values.imag.ravel(), sig.ravel()])
    meta = {"dim": table.dim, "speeds": table.speeds.tolist(),
            "cos_angles": table.cos_angles.tolist(), "eta_ladder": list(table.eta_sequence),
            "residuals": table.residuals.tolist(), "conventions": CONVENTIONS, **table.meta}
    return write_table(path, "tmatrix", meta, ["E", "cos_theta", "re_T", "im_T", "sigma_diff"], rows)


def read_tmatrix(path) -> TMatrixTable:
    meta, _, rows = read_table(path, "tmatrix")
    nE, nc = len(meta["speeds"]), len(meta["cos_angles"])
    vals = (rows[:, 2] + 1j * rows[:, 3]).reshape(nE, nc)
    extra = {k: v for k, v in meta.items()
             if k not in ("dim", "speeds", "cos_angles", "eta_ladder", "residuals", "conventions")}
    return TMatrixTable(rows[::nc, 0].copy(), np.asarray(meta["cos_angles"]), vals,
                        np.asarray(meta["residuals"]), tuple(meta["eta_ladder"]), meta["dim"], extra)


def write_cross_sections(table: CrossSectionTable, path):
    V, C = np.meshgrid(table.speeds, table.cos_angles, indexing="ij")
    tot = np.repeat(table.total, table.cos_angles.size)
    rows = np.column_stack([V.ravel(), C.ravel(), table.differential.ravel(), tot])
    meta = {"dim": table.dim, "speeds": table.speeds.tolist(),
            "cos_angles": table.cos_angles.tolist(), "total": table.total.tolist(),
            "quad_error": table.quad_error.tolist(), "conventions": CONVENTIONS, **table.meta}
    return write_table(path, "cross_sections", meta,
                       ["speed", "cos_theta", "sigma_diff", "sigma_tot"], rows)


def read_cross_sections(path) -> CrossSectionTable:
    meta, _, rows = read_table(path, "cross_sections")
    ns, nc = len(meta["speeds"]), len(meta["cos_angles"])
    extra = {k: v for k, v in meta.items()
             if k not in ("dim", "speeds", "cos_angles", "total", "quad_error", "conventions")}
    return CrossSectionTable(np.asarray(meta["speeds"]), np.asarray(meta["cos_angles"]),
                             rows[:, 2].reshape(ns, nc), np.asarray(meta["total"]),
                             np.asarray(meta["quad_error"]), meta["dim"], extra)


def cross_section_from_function(diff_fn, speed, n_cos=257, dim=3, meta=None) -> CrossSectionTable:
    """Single-speed table from an explicit differential cross section (surrogates, tests)."""
    cos_grid = np.linspace(-1.0, 1.0, n_cos)
    x, w = angle_rule(dim, 256)
    tot = float(np.sum(w * diff_fn(x)))
    row = np.asarray(diff_fn(cos_grid), dtype=float)
    return CrossSectionTable(np.array([float(speed)]), cos_grid, row[None], np.array([tot]),
                             np.array([abs(tot - _grid_total(row, cos_grid, dim))]), dim,
                             dict(meta or {}))
