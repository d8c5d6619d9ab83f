"""On-shell T-matrix, cross sections and the optical-theorem check.

T_scat(u, v) is the eta -> 0+ limit of B_eta(|v|^2/2, u, v) with |u| = |v|.
For each eta on a ladder the Born series is summed channel by channel at the
single radius |v|, so one solve yields T at every scattering angle.  The
channel coefficients are then extrapolated to eta = 0 by the polynomial
through all ladder points; the gap to the next-lower degree is the recorded
residual.

Cross sections carry the on-shell surface factor of the rescaled momentum
measure: sigma_shell = 4 pi |T|^2 * |v|^(d-2) / 2 / (2 pi)^(d/2) per unit solid
angle, which makes Im T(v, v) = -sigma_tot / 2 exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..conventions import shell_factor
from .basis import basis, channel_weight, projected_kernel
from .born import BornDivergence, RadialBornSolver

DEFAULT_ETAS = (0.2, 0.1, 0.05, 0.025)
INTERLEAVED_ETAS = (0.15, 0.075, 0.0375, 0.01875)
ABS_FLOOR = 1e-14


class ExtrapolationError(RuntimeError):
    """The eta -> 0 extrapolation did not behave; use a finer ladder."""


class CrossSectionQuadratureError(RuntimeError):
    """Solid-angle quadrature of the differential cross section not converged."""


def on_shell_channels(spec, speed, eta, side="right", tol=1e-16, k_max=400):
    """Channel coefficients t_l with B_eta(v^2/2, u, v) = sum_l t_l B_l(cos theta)."""
    solver = RadialBornSolver(spec, 0.5 * speed * speed, eta, [speed])
    k = solver.external[0]
    ls = np.arange(solver.lmax + 1)
    # k = 0 term: V0_hat(|u - v|) in channel form
    coeffs = (channel_weight(ls, spec.dim) * projected_kernel(spec, [k], [k], solver.lmax)[:, 0, 0]
              ).astype(complex)
    it = solver.iter_channel_terms(k, k, side)
    prev, growth = None, 0
    for n in range(k_max):
        term = next(it)
        coeffs = coeffs + term
        mag = float(np.max(np.abs(term)))
        if prev is not None and mag > prev:
            growth += 1
            if growth >= 3:
                raise BornDivergence(
                    f"Born series diverging for amplitude {spec.amplitude:g} at speed {speed:g}")
        else:
            growth = 0
        prev = mag
        if mag < tol * max(np.max(np.abs(coeffs)), ABS_FLOOR):
            return coeffs, n + 1
    raise BornDivergence(f"Born series not converged in {k_max} terms (amplitude {spec.amplitude:g})")


def extrapolate(etas, values):
    """Polynomial extrapolation to eta = 0 through every ladder point.

    Returns (value, residual, residual_history) where the history lists the
    change between successive-degree extrapolants; it must shrink.
    """
    etas = np.asarray(etas, dtype=float)
    values = np.asarray(values)
    order = np.argsort(etas)
    etas, values = etas[order], values[order]
    n = etas.size
    ests = []
    for deg in range(1, n):
        V = np.vander(etas[:deg + 1], deg + 1)
        ests.append(np.linalg.solve(V, values[:deg + 1])[-1])
    ests = np.asarray(ests)
    hist = np.max(np.abs(np.diff(ests, axis=0)).reshape(len(ests) - 1, -1), axis=1) \
        if len(ests) > 1 else np.array([np.inf])
    return ests[-1], float(hist[-1]), hist


@dataclass
class OnShellAmplitude:
    speed: float
    coeffs: np.ndarray               # eta -> 0 channel coefficients
    residual: float                  # extrapolation residual (channel max)
    etas: tuple
    ladder: np.ndarray = field(repr=False, default=None)   # per-eta coefficients
    dim: int = 3

    def __call__(self, cos_theta):
        return np.tensordot(self.coeffs, basis(np.arange(self.coeffs.size), cos_theta, self.dim),
                            axes=(0, 0))

    def at_eta(self, i, cos_theta):
        return np.tensordot(self.ladder[i], basis(np.arange(self.coeffs.size), cos_theta, self.dim),
                            axes=(0, 0))

    @property
    def forward(self) -> complex:
        return complex(self(1.0))


def on_shell_amplitude(spec, speed, etas=DEFAULT_ETAS, side="right") -> OnShellAmplitude:
    """Extrapolated on-shell amplitude for all angles at one speed."""
    if not speed > 0:
        raise ValueError("speed must be positive")
    if spec.amplitude == 0:
        return OnShellAmplitude(float(speed), np.zeros(1, complex), 0.0, tuple(etas),
                                np.zeros((len(etas), 1), complex), spec.dim)
    per = [on_shell_channels(spec, speed, e, side)[0] for e in etas]
    L = max(c.size for c in per)
    ladder = np.array([np.pad(c, (0, L - c.size)) for c in per])
    coeffs, resid, hist = extrapolate(etas, ladder)
    if len(hist) > 1 and np.any(np.diff(hist) > 0) and hist[-1] > 1e-12 * np.max(np.abs(coeffs)):
        raise ExtrapolationError(
            f"extrapolation residuals {hist} not decreasing at speed {speed:g}; "
            "refine the eta ladder")
    return OnShellAmplitude(float(speed), coeffs, resid, tuple(etas), ladder, spec.dim)


def t_matrix_on_shell(spec, speed, cos_theta, etas=DEFAULT_ETAS, side="right"):
    """(T_scat(speed, cos theta), extrapolation residual)."""
    amp = on_shell_amplitude(spec, speed, etas, side)
    return amp(cos_theta), amp.residual


def _sigma_from_T(T, speed, dim):
    return 4 * np.pi * np.abs(T) ** 2 * shell_factor(speed, dim)


def diff_cross_section(spec, speed, cos_theta, amplitude: OnShellAmplitude | None = None):
    """sigma_shell(|v|, cos theta) per unit solid angle."""
    amp = amplitude or on_shell_amplitude(spec, speed)
    return _sigma_from_T(amp(cos_theta), speed, spec.dim)


def angle_rule(dim, n):
    """(cos theta nodes, solid-angle weights) exact for polynomial / Fourier degree ~2n."""
    if dim == 3:
        x, w = np.polynomial.legendre.leggauss(n)
        return x, 2 * np.pi * w
    # full circle, trapezoid in theta; both half-circles map to the same cos
    th = (np.arange(n) + 0.5) * np.pi / n
    return np.cos(th), np.full(n, 2 * np.pi / n)


def total_cross_section(spec, speed, amplitude: OnShellAmplitude | None = None, rtol=1e-4):
    """Solid-angle quadrature of the differential cross section."""
    amp = amplitude or on_shell_amplitude(spec, speed)
    n = amp.coeffs.size + 8
    vals = []
    for m in (n, 2 * n):
        x, w = angle_rule(spec.dim, m)
        vals.append(float(np.sum(w * _sigma_from_T(amp(x), speed, spec.dim))))
    err = abs(vals[1] - vals[0])
    if err > rtol * max(abs(vals[1]), ABS_FLOOR):
        raise CrossSectionQuadratureError(f"solid-angle quadrature error {err:.3g}")
    return vals[1]


@dataclass
class OpticalCheck:
    residual: float
    absolute: bool          # True when sigma_tot is below the numeric floor
    im_forward: float
    sigma_tot: float


def optical_theorem_residual(spec, speed, amplitude: OnShellAmplitude | None = None,
                             floor=1e-12) -> OpticalCheck:
    """|2 Im T(v, v) + sigma_tot| / sigma_tot  (absolute when sigma_tot < floor)."""
    amp = amplitude or on_shell_amplitude(spec, speed)
    sig = total_cross_section(spec, speed, amp)
    im = amp.forward.imag
    gap = abs(2 * im + sig)
    if sig < floor:
        return OpticalCheck(gap, True, im, sig)
    return OpticalCheck(gap / sig, False, im, sig)
