"""Split-step Fourier evolution of i dpsi/dt = (-Delta/2 + V) psi on a periodic box.

Grid coordinates are centred: x_j = -L/2 + j h.  Wave functions are
normalised in Lebesgue measure, sum |psi|^2 h^d = 1, so |psi|^2 is a
probability density.  Momentum-space amplitudes use the unitary DFT scaled so
that sum |psi_hat|^2 dk^d = 1 with dk = 2 pi / L.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.fft as sfft

from .io import load_array, save_array
from .potential import ObstacleConfig, PotentialSpec, eval_position


class ClippedEnvelope(ValueError):
    """The initial envelope does not fit inside the box."""


class EvolutionBlowup(FloatingPointError):
    pass


@dataclass(frozen=True)
class BoxSpec:
    side: float
    n: int
    dim: int = 3

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError("grid points per side must be a power of two")
        if self.dim not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        if not self.side > 0:
            raise ValueError("box side must be positive")

    @property
    def spacing(self) -> float:
        return self.side / self.n

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def cell(self) -> float:
        return self.spacing**self.dim

    @property
    def dk(self) -> float:
        return 2 * np.pi / self.side

    @property
    def nyquist(self) -> float:
        return np.pi / self.spacing

    def axis(self):
        return -0.5 * self.side + self.spacing * np.arange(self.n)

    def k_axis(self):
        return 2 * np.pi * sfft.fftfreq(self.n, self.spacing)

    def coords(self):
        return np.meshgrid(*([self.axis()] * self.dim), indexing="ij", sparse=True)

    def k_coords(self):
        return np.meshgrid(*([self.k_axis()] * self.dim), indexing="ij", sparse=True)

    def k_squared(self):
        return sum(k * k for k in self.k_coords())

    def validate(self, spec: PotentialSpec | None = None, u0=None):
        """Resolution checks: 4 points per potential range, |u0| < 2/3 Nyquist."""
        if spec is not None and self.spacing > spec.range / 4:
            raise ValueError(f"grid spacing {self.spacing:g} does not resolve range {spec.range:g}")
        if u0 is not None and np.linalg.norm(u0) >= 2 / 3 * self.nyquist:
            raise ValueError(f"|u0| = {np.linalg.norm(u0):g} too close to Nyquist {self.nyquist:g}")


@dataclass
class WaveField:
    box: BoxSpec
    amplitudes: np.ndarray
    representation: str = "position"
    renorm: float = 1.0
    time: float = 0.0

    def to_momentum(self) -> "WaveField":
        if self.representation == "momentum":
            return self
        amp = sfft.fftn(self.amplitudes) * self.box.cell / (2 * np.pi) ** (self.box.dim / 2)
        return replace(self, amplitudes=amp, representation="momentum")

    def to_position(self) -> "WaveField":
        if self.representation == "position":
            return self
        amp = sfft.ifftn(self.amplitudes) * (2 * np.pi) ** (self.box.dim / 2) / self.box.cell
        return replace(self, amplitudes=amp, representation="position")

    def norm(self) -> float:
        if self.representation == "position":
            return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.box.cell))
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.box.dk**self.box.dim))

    def copy(self) -> "WaveField":
        return replace(self, amplitudes=self.amplitudes.copy())


def gaussian_envelope(sigma: float, dim: int, center=None):
    """L2-normalised h(X) with |h|^2 a Gaussian of variance sigma^2 per axis."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)

    def h(*X):
        r2 = sum((x - ci) ** 2 for x, ci in zip(X, c))
        return (2 * np.pi * sigma**2) ** (-dim / 4) * np.exp(-r2 / (4 * sigma**2))
    h.sigma = sigma
    h.center = c
    return h


def init_wavepacket(box: BoxSpec, h, epsilon: float, u0, tol=1e-6) -> WaveField:
    """eps^{d/2} h(eps x) exp(i u0.x) on the centred grid, renormalised to unit norm."""
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    u0 = np.asarray(u0, dtype=float).reshape(box.dim)
    sigma = getattr(h, "sigma", None)
    if sigma is not None:
        extent = (sigma + np.max(np.abs(getattr(h, "center", 0.0)))) / epsilon
        if extent > box.side / 4:
            raise ClippedEnvelope(f"envelope width {extent:g} exceeds L/4 = {box.side / 4:g}")
    X = box.coords()
    psi = epsilon ** (box.dim / 2) * h(*[epsilon * x for x in X])
    phase = sum(u * x for u, x in zip(u0, X))
    psi = psi * np.exp(1j * phase)
    n = np.sqrt(np.sum(np.abs(psi) ** 2) * box.cell)
    if abs(n - 1) > tol:
        raise ClippedEnvelope(f"grid norm {n:.8f} before renormalisation; envelope clipped")
    return WaveField(box, psi / n, "position", float(n))


def build_potential_field(box: BoxSpec, obstacles: ObstacleConfig, spec: PotentialSpec,
                          tail_tol=1e-12) -> np.ndarray:
    """Periodic sum of V0 copies centred at the obstacles.

    Each obstacle contributes on the patch of grid points within the tail
    radius; indices wrap, so lattice images are included whenever that radius
    exceeds L/2.
    """
    if abs(obstacles.box_side - box.side) > 1e-12 * box.side:
        raise ValueError("obstacle box does not match the grid box")
    if spec.range > box.side / 2:
        raise ValueError("potential range exceeds half the box")
    field = np.zeros(box.shape)
    if len(obstacles) == 0 or spec.amplitude == 0:
        return field
    R = spec.tail_radius(tail_tol)
    h, n, L = box.spacing, box.n, box.side
    half = int(np.ceil(R / h))
    offsets = np.arange(-half, half + 1)
    x0 = box.axis()[0]
    wraps = 2 * half + 1 > n
    for c in np.atleast_2d(obstacles.centers):
        # nearest grid index to the obstacle (centres live in [0, L), grid starts at -L/2)
        idx, dist = [], []
        for ci in c:
            j0 = int(np.floor((ci - x0) / h))
            js = j0 + offsets
            idx.append(np.mod(js, n))
            dist.append(x0 + js * h - ci - L * np.round((x0 + j0 * h - ci) / L))
        r2 = sum(np.meshgrid(*[d * d for d in dist], indexing="ij", sparse=True))
        vals = eval_position(spec, np.sqrt(r2))
        if wraps:
            np.add.at(field, np.ix_(*idx), vals)
        else:
            field[np.ix_(*idx)] += vals
    return field


def default_dt(potential_field, spec: PotentialSpec | None = None, speed: float = 0.0,
               safety: float = 0.02, steps_per_crossing: int = 25) -> float:
    """dt with dt * max|V| <= safety and ``steps_per_crossing`` steps per potential crossing."""
    vmax = float(np.max(np.abs(potential_field))) if np.size(potential_field) else 0.0
    dt = safety / vmax if vmax > 0 else np.inf
    if spec is not None and speed > 0:
        dt = min(dt, spec.range / (steps_per_crossing * speed))
    return float(dt) if np.isfinite(dt) else 0.1


def evolve_split_step(psi: WaveField, potential_field, dt: float, steps: int,
                      check_every: int = 1) -> WaveField:
    """Strang splitting e^{-iV dt/2} e^{-i p^2 dt/2} e^{-iV dt/2}, ``steps`` times.

    Negative ``dt`` runs the evolution backwards.  Inner half steps are merged.
    """
    V = np.asarray(potential_field, dtype=float)
    if V.ndim and V.shape != psi.box.shape:
        raise ValueError("potential grid does not match wave-function grid")
    vmax = float(np.max(np.abs(V))) if V.size else 0.0
    if abs(dt) * vmax > 0.1:
        raise ValueError(f"dt * max|V| = {abs(dt) * vmax:.3g} > 0.1")
    box = psi.box
    kin = np.exp(-0.5j * dt * box.k_squared())
    half = np.exp(-0.5j * dt * V)
    full = half * half
    u = psi.to_position().amplitudes.astype(complex, copy=True)
    if steps <= 0:
        return WaveField(box, u, "position", psi.renorm, psi.time)
    u *= half
    for s in range(steps):
        u = sfft.ifftn(sfft.fftn(u, overwrite_x=True) * kin, overwrite_x=True)
        u *= full if s < steps - 1 else half
        if check_every and (s + 1) % check_every == 0 and not np.isfinite(u.flat[np.argmax(np.abs(u))]):
            raise EvolutionBlowup(f"non-finite amplitudes at step {s + 1}")
    if not np.all(np.isfinite(u)):
        raise EvolutionBlowup(f"non-finite amplitudes after step {steps}")
    return WaveField(box, u, "position", psi.renorm, psi.time + dt * steps)


def evolve_to_times(psi: WaveField, potential_field, dt: float, times):
    """Yield (t, field) at each requested time (rounded to whole steps)."""
    cur, t_cur = psi, psi.time
    for t in sorted(times):
        n = int(round((t - t_cur) / dt))
        cur = evolve_split_step(cur, potential_field, dt, n)
        t_cur = cur.time
        yield t, cur


def norm_and_energy(psi: WaveField, potential_field):
    """(norm, <p^2/2>, <V>)."""
    pos = psi.to_position()
    mom = psi.to_momentum()
    dens = np.abs(pos.amplitudes) ** 2 * pos.box.cell
    norm = float(np.sqrt(np.sum(dens)))
    kin = float(np.sum(np.abs(mom.amplitudes) ** 2 * 0.5 * pos.box.k_squared())
                * pos.box.dk**pos.box.dim)
    pot = float(np.sum(np.asarray(potential_field) * dens))
    return norm, kin, pot


def save_checkpoint(path, psi: WaveField, dt: float = 0.0, steps: int = 0, seed=None, **extra):
    meta = {"n": psi.box.n, "dim": psi.box.dim, "side": psi.box.side, "dt": dt, "steps": steps,
            "time": psi.time, "seed": seed, "representation": psi.representation,
            "renorm": psi.renorm, **extra}
    return save_array(path, psi.amplitudes, meta)


def load_checkpoint(path) -> tuple[WaveField, dict]:
    arr, meta = load_array(path)
    box = BoxSpec(meta["side"], meta["n"], meta["dim"])
    return WaveField(box, arr, meta["representation"], meta["renorm"], meta["time"]), meta


def no_wrap_time(box: BoxSpec, sigma_micro: float, speed: float, margin: float = 6.0) -> float:
    """Latest time before a packet of spatial width ``sigma_micro`` moving at ``speed`` wraps."""
    room = box.side / 2 - margin * sigma_micro
    return room / speed if speed > 0 else np.inf
