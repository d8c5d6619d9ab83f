"""Phase shifts of a radial potential by the variable-phase method.

The accumulated phase delta_l(r) obeys

    delta_l'(r) = -(1/k) U(r) [ j_l(kr) cos delta - n_l(kr) sin delta ]^2,   U = 2 V0

with Riccati-Bessel ĵ, n̂ normalised to sin / -cos at large kr (spherical in
3D, sqrt(pi kr / 2) J_m, Y_m in 2D).  The value at the matching radius is the
phase shift.  This is an independent route to the on-shell amplitude: no
momentum-space quadrature or resolvent is involved.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import jv, spherical_jn, spherical_yn, yv

from .basis import basis


class TailError(RuntimeError):
    """The potential has not decayed at the matching radius."""


def _riccati(l, x, dim):
    if dim == 3:
        return x * spherical_jn(l, x), x * spherical_yn(l, x)
    s = np.sqrt(np.pi * x / 2)
    return s * jv(l, x), s * yv(l, x)


def _start_radius(l, k, dim):
    # where the regular solution is ~1e-16 of its asymptotic size
    if l == 0:
        return 1e-8
    nu = l + 0.5 if dim == 3 else l
    log_dfact = math.lgamma(nu + 1) + nu * math.log(2) - 0.5 * math.log(math.pi) \
        if dim == 3 else math.lgamma(nu + 1) + nu * math.log(2)
    x0 = math.exp((math.log(1e-16) + log_dfact) / (nu + 0.5))
    return max(x0 / k, 1e-8)


def matching_radius(spec):
    return spec.cutoff_radius


def phase_shift(spec, k: float, l: int, rtol=1e-12, atol=1e-15) -> float:
    """delta_l at wavenumber k (|v| = k) for angular momentum l >= 0."""
    dim = spec.dim
    R = matching_radius(spec)
    r0 = _start_radius(l, k, dim)
    if r0 >= R:
        return 0.0

    def rhs(r, y):
        j, n = _riccati(l, k * r, dim)
        s = j * np.cos(y[0]) - n * np.sin(y[0])
        return [-(2.0 / k) * spec(r) * s * s]

    # integrate piecewise so the step control sees the potential's structure
    edges = np.unique(np.concatenate([[r0], np.geomspace(max(r0, 1e-3 * spec.range), R, 12)]))
    y = [0.0]
    for a, b in zip(edges[:-1], edges[1:]):
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise RuntimeError(f"phase-shift integration failed for l={l}: {sol.message}")
        y = [sol.y[0, -1]]
    return float(y[0])


def phase_shift_oracle(spec, energy: float, l_max: int | None = None, tol: float = 1e-8,
                       hard_limit: int = 200):
    """Phase shifts delta_0..delta_lmax at kinetic energy E = k^2 / 2.

    With ``l_max=None`` channels are added until |delta_l| < tol for two
    successive l beyond k * range.  A given ``l_max`` must satisfy the same bound.
    """
    if not energy > 0:
        raise ValueError("energy must be positive")
    R = matching_radius(spec)
    tail = abs(spec(np.array([R]))[0]) * R
    if tail > 1e-10 * max(abs(spec.amplitude), 1e-300):
        raise TailError(f"|V0| at matching radius {R:g} is {tail / R:.3g}; not decayed")
    k = math.sqrt(2 * energy)
    if spec.amplitude == 0:
        return np.zeros((l_max or 0) + 1)
    out = []
    l = 0
    while True:
        out.append(phase_shift(spec, k, l))
        if l_max is not None:
            if l == l_max:
                break
        elif l > k * spec.range + 2 and abs(out[-1]) < tol and abs(out[-2]) < tol:
            break
        if l >= hard_limit:
            raise RuntimeError("phase shifts not decaying within the channel limit")
        l += 1
    deltas = np.array(out)
    if l_max is not None and abs(deltas[-1]) >= tol:
        raise ValueError(f"|delta_{l_max}| = {abs(deltas[-1]):.2e} >= {tol}; raise l_max")
    return deltas


def partial_wave_amplitude(deltas, speed, cos_theta, dim=3):
    """On-shell T in the rescaled-measure normalisation.

    3D:  T = -1 / (k sqrt(2 pi)) * sum_l (2l+1) e^{i d_l} sin d_l P_l(cos theta)
    2D:  T = -1 / pi * sum_{m in Z} e^{i d_m} sin d_m e^{i m theta}
    The constants follow from matching the first-order phase shifts to
    V0_hat(|u - v|).
    """
    deltas = np.asarray(deltas, dtype=float)
    ls = np.arange(deltas.size)
    amp = np.exp(1j * deltas) * np.sin(deltas)
    B = basis(ls, cos_theta, dim)
    if dim == 3:
        c = (2 * ls + 1) / (speed * np.sqrt(2 * np.pi))
    else:
        c = np.where(ls == 0, 1.0, 2.0) / np.pi
    return -np.tensordot(c * amp, B, axes=(0, 0))


def partial_wave_total(deltas, speed, dim=3):
    """Total cross section in the rescaled-measure normalisation (= -2 Im T forward)."""
    deltas = np.asarray(deltas, dtype=float)
    ls = np.arange(deltas.size)
    s2 = np.sin(deltas) ** 2
    if dim == 3:
        return float(np.sum((2 * ls + 1) * s2) * 2 / (speed * np.sqrt(2 * np.pi)))
    return float(np.sum(np.where(ls == 0, 1.0, 2.0) * s2) * 2 / np.pi)


def physical_total(deltas, speed, dim=3):
    """Textbook cross section (area in 3D, length in 2D)."""
    deltas = np.asarray(deltas, dtype=float)
    ls = np.arange(deltas.size)
    s2 = np.sin(deltas) ** 2
    if dim == 3:
        return float(4 * np.pi / speed**2 * np.sum((2 * ls + 1) * s2))
    return float(4 / speed * np.sum(np.where(ls == 0, 1.0, 2.0) * s2))


def born_phase_shift(spec, k, l, n=4000):
    """First-order phase shift -(1/k) int U ĵ_l^2 dr by Gauss-Legendre panels."""
    R = matching_radius(spec)
    x, w = np.polynomial.legendre.leggauss(32)
    edges = np.linspace(0.0, R, n // 32 + 1)
    a, b = edges[:-1, None], edges[1:, None]
    r = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    wr = (0.5 * (b - a) * w).ravel()
    j, _ = _riccati(l, k * r, spec.dim)
    return float(-(2.0 / k) * np.sum(wr * spec(r) * j * j))
