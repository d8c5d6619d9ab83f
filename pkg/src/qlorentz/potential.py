"""Single-obstacle radial potentials and random obstacle configurations."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import j0

from .conventions import measure_factor, solid_angle

PROFILES = ("gaussian", "yukawa", "tabulated")
MAX_OBSTACLES = 50_000_000


class NormNotConverged(RuntimeError):
    """Raised when a weighted Sobolev norm does not settle under grid refinement."""


@dataclass(frozen=True)
class PotentialSpec:
    """Radial obstacle potential V0.

    ``gaussian``:  amplitude * exp(-r^2 / (2 range^2))
    ``yukawa``:    amplitude * exp(-r/range) / (r/range), with r clamped below at ``core``
    ``tabulated``: monotone cubic interpolation of (r, V0) samples, zero past the table
    """

    profile: str
    amplitude: float
    range: float = 1.0
    dim: int = 3
    core: float | None = None
    table_r: tuple = field(default=(), repr=False)
    table_v: tuple = field(default=(), repr=False)
    table_path: str | None = None

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown potential profile {self.profile!r}")
        if not self.range > 0:
            raise ValueError("potential range must be positive")
        if self.dim not in (2, 3):
            raise ValueError("only d = 2 and d = 3 are supported")
        if self.profile == "tabulated":
            r = np.asarray(self.table_r, dtype=float)
            if r.size < 4 or np.any(np.diff(r) <= 0):
                raise ValueError("tabulated radii must be strictly increasing (>= 4 rows)")

    # --- constructors -----------------------------------------------------
    @classmethod
    def gaussian(cls, amplitude, width=1.0, dim=3):
        return cls("gaussian", float(amplitude), float(width), dim)

    @classmethod
    def yukawa(cls, amplitude, screening=1.0, dim=3, core=None):
        return cls("yukawa", float(amplitude), float(screening), dim, core)

    @classmethod
    def from_table(cls, path, amplitude=1.0, dim=3):
        """Load two-column text (r, V0(r)); ``amplitude`` rescales the values."""
        data = np.loadtxt(path, ndmin=2)
        if data.shape[1] != 2:
            raise ValueError(f"{path}: expected two columns (r, V0)")
        r, v = data[:, 0], data[:, 1] * amplitude
        rng = float(r[np.argmax(np.abs(r * v))]) if np.any(v) else float(r[-1])
        return cls("tabulated", float(amplitude), max(rng, r[1]), dim,
                   table_r=tuple(r), table_v=tuple(v), table_path=str(path))

    def scaled(self, factor: float) -> "PotentialSpec":
        """Same profile with the amplitude multiplied by ``factor``."""
        tv = tuple(np.asarray(self.table_v) * factor) if self.table_v else ()
        return PotentialSpec(self.profile, self.amplitude * factor, self.range, self.dim,
                             self.core, self.table_r, tv, self.table_path)

    # --- config block -----------------------------------------------------
    def to_dict(self) -> dict:
        out = {"profile": self.profile, "amplitude": self.amplitude,
               "range": self.range, "dim": self.dim}
        if self.core is not None:
            out["core"] = self.core
        if self.profile == "tabulated":
            out["table"] = self.table_path
        return out

    @classmethod
    def from_dict(cls, block: dict, base_dir: str | Path | None = None) -> "PotentialSpec":
        profile = block["profile"]
        dim = int(block.get("dim", 3))
        if profile == "tabulated":
            path = Path(block["table"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            return cls.from_table(path, float(block.get("amplitude", 1.0)), dim)
        core = block.get("core")
        return cls(profile, float(block["amplitude"]), float(block.get("range", 1.0)), dim,
                   None if core is None else float(core))

    # --- evaluation -------------------------------------------------------
    @property
    def core_radius(self) -> float:
        return self.core if self.core is not None else 1e-3 * self.range

    @property
    def cutoff_radius(self) -> float:
        """Radius beyond which |V0| < 1e-16 * |amplitude| (table end for tabulated)."""
        if self.profile == "gaussian":
            return self.range * np.sqrt(2 * 37.0)
        if self.profile == "yukawa":
            return self.range * 34.0
        return float(self.table_r[-1])

    def tail_radius(self, tol: float = 1e-12) -> float:
        """Smallest radius beyond which |V0| < tol * |amplitude| (table end for tabulated)."""
        if self.profile == "gaussian":
            return self.range * np.sqrt(2 * np.log(1 / tol))
        if self.profile == "tabulated":
            return float(self.table_r[-1])
        lo, hi = self.core_radius, self.range
        while np.exp(-hi / self.range) * self.range / hi > tol:
            hi *= 2
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if np.exp(-mid / self.range) * self.range / mid > tol:
                lo = mid
            else:
                hi = mid
        return hi

    def __call__(self, r):
        return eval_position(self, r)

    def fourier(self, p):
        return eval_momentum(self, p)


def _interp(spec: PotentialSpec):
    return PchipInterpolator(np.asarray(spec.table_r), np.asarray(spec.table_v), extrapolate=False)


def eval_position(spec: PotentialSpec, r, clamp: float | None = None):
    """V0 at radius ``r`` (array-valued).  ``clamp`` overrides the Yukawa core radius."""
    r = np.abs(np.asarray(r, dtype=float))
    if not np.all(np.isfinite(r)):
        raise ValueError("radius must be finite")
    lam, a = spec.amplitude, spec.range
    if spec.profile == "gaussian":
        return lam * np.exp(-(r**2) / (2 * a**2))
    if spec.profile == "yukawa":
        rc = np.maximum(r, spec.core_radius if clamp is None else clamp)
        return lam * np.exp(-rc / a) * (a / rc)
    rmax = spec.table_r[-1]
    out = _interp(spec)(np.minimum(r, rmax))
    beyond = r > rmax
    if np.any(beyond):
        warnings.warn(f"tabulated potential queried beyond r={rmax}; using 0", stacklevel=2)
        out = np.where(beyond, 0.0, out)
    return np.nan_to_num(out)


def radial_kernel(z, dim: int):
    """Angular average of exp(-i p.x) for |p||x| = z, times the measure constant."""
    z = np.asarray(z, dtype=float)
    if dim == 3:
        return np.sqrt(2 / np.pi) * np.sinc(z / np.pi)
    return j0(z)


def _gl_panels(edges, order=16):
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = np.asarray(edges[:-1]), np.asarray(edges[1:])
    nodes = (0.5 * (b - a)[:, None] * x + 0.5 * (a + b)[:, None]).ravel()
    weights = (0.5 * (b - a)[:, None] * w).ravel()
    return nodes, weights


def hankel(values_fn, rmax, p, dim, panels=None, order=16):
    """Radial transform  int_0^rmax r^(d-1) g(r) K_d(p r) dr  by panelled Gauss-Legendre."""
    edges = np.linspace(0.0, rmax, 65) if panels is None else panels
    r, w = _gl_panels(edges, order)
    g = values_fn(r) * r ** (dim - 1) * w
    p = np.atleast_1d(np.asarray(p, dtype=float))
    out = np.empty(p.shape)
    for sl in np.array_split(np.arange(p.size), max(1, p.size // 256)):
        out[sl] = radial_kernel(np.outer(p[sl], r), dim) @ g
    return out


def eval_momentum(spec: PotentialSpec, p):
    """Fourier transform V0_hat(|p|) in the rescaled-measure convention (real)."""
    p = np.abs(np.asarray(p, dtype=float))
    lam, a, d = spec.amplitude, spec.range, spec.dim
    if spec.profile == "gaussian":
        return lam * a**d * np.exp(-(a**2) * p**2 / 2)
    if spec.profile == "yukawa":
        if d == 3:
            base = lam * a * np.sqrt(2 / np.pi) / (p**2 + a**-2)
        else:
            base = lam * a / np.sqrt(p**2 + a**-2)
        rc = spec.core_radius
        # exact correction for the clamped core
        corr = hankel(lambda r: lam * a * (np.exp(-rc / a) / rc - np.exp(-r / a) / np.maximum(r, 1e-300)),
                      rc, p.ravel(), d, panels=np.linspace(0, rc, 5), order=24)
        return base + corr.reshape(p.shape)
    r = np.asarray(spec.table_r)
    edges = np.concatenate([[0.0], r]) if r[0] > 0 else r
    interp = _interp(spec)
    vals = hankel(lambda x: np.nan_to_num(interp(np.maximum(x, r[0]))), r[-1], p.ravel(), d,
                  panels=edges, order=16)
    return vals.reshape(p.shape)


def weighted_sobolev_norm(spec: PotentialSpec, M: int, N: int, rtol: float = 1e-8) -> float:
    """|| <x>^M <grad>^N V0 ||_2 in the rescaled measure.

    N = 0 is evaluated directly in position space; N > 0 goes through the radial
    transform of <p>^N V0_hat.  Both are repeated on a refined grid and the result
    must agree to ``rtol``.
    """
    if not (0 <= M <= 8 and 0 <= N <= 8):
        raise ValueError("surrogate norm orders are limited to 0..8")
    if spec.amplitude == 0:
        return 0.0
    d = spec.dim
    const = measure_factor(d) * solid_angle(d)

    def attempt(scale):
        R = spec.cutoff_radius * (1 + 0.5 * (scale - 1)) + 2.0 * M
        if spec.profile == "yukawa":
            rc = spec.core_radius
            edges = np.concatenate([[0.0], np.geomspace(rc, R, int(96 * scale))])
        else:
            edges = np.linspace(0.0, R, int(96 * scale) + 1)
        if N == 0:
            r, w = _gl_panels(edges, 16)
            vals = eval_position(spec, r)
        else:
            P = _momentum_extent(spec, N) * (1 + 0.5 * (scale - 1))
            pe = np.linspace(0.0, P, int(128 * scale) + 1)
            r, w = _gl_panels(edges, 16)
            vals = hankel(lambda q: (1 + q**2) ** (N / 2) * eval_momentum(spec, q), P, r, d,
                          panels=pe)
        return np.sqrt(const * np.sum(w * r ** (d - 1) * (1 + r**2) ** M * vals**2))

    coarse, fine = attempt(1.0), attempt(2.0)
    if abs(fine - coarse) > rtol * abs(fine):
        raise NormNotConverged(
            f"norm (M={M}, N={N}) not converged: {coarse!r} vs {fine!r}")
    return float(fine)


def _momentum_extent(spec, N):
    if spec.profile == "gaussian":
        return np.sqrt(2 * 40.0 + 2 * N * np.log(10.0 / spec.range + 10)) / spec.range
    return 60.0 / spec.range


@dataclass
class ObstacleConfig:
    centers: np.ndarray
    box_side: float
    density: float
    seed: int

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def __len__(self):
        return len(self.centers)

    def shifted(self, offset) -> "ObstacleConfig":
        c = np.mod(self.centers + np.asarray(offset, dtype=float), self.box_side)
        return ObstacleConfig(c, self.box_side, self.density, self.seed)

    def subset(self, index) -> "ObstacleConfig":
        return ObstacleConfig(self.centers[np.atleast_1d(index)], self.box_side,
                              self.density, self.seed)


def sample_obstacles(box_side: float, density: float, seed: int, dim: int = 3) -> ObstacleConfig:
    """round(density * L^d) i.i.d. uniform centres in [0, L)^d."""
    if not box_side > 0:
        raise ValueError("box_side must be positive")
    if density < 0:
        raise ValueError("density must be non-negative")
    expected = density * box_side**dim
    if not np.isfinite(expected) or expected > MAX_OBSTACLES:
        raise OverflowError(f"{expected:.3g} obstacles requested (limit {MAX_OBSTACLES})")
    n = int(round(expected))
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, box_side, size=(n, dim))
    return ObstacleConfig(centers, float(box_side), float(density), int(seed))
