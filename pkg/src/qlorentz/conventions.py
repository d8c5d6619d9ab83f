"""Fourier and measure conventions shared by every module.

All d-dimensional space and momentum integrals use the rescaled measure

    dx = d*x / (2 pi)^(d/2)

so the Fourier pair is

    f_hat(p) = int dx f(x) exp(-i p.x),    f(x) = int dp f_hat(p) exp(+i p.x)

and the transform is unitary.  One-dimensional integrals (time, the spectral
parameter alpha) use the plain Lebesgue measure.  Units: hbar = m = 1, so the
free Hamiltonian is -Delta/2 and a momentum p carries kinetic energy p**2/2.

Consequences used elsewhere
---------------------------
* Gaussian:  lam * exp(-|x|^2 / (2 a^2))  ->  lam * a^d * exp(-a^2 |p|^2 / 2)
* A radial function g(|x|) has  g_hat(p) = int_0^inf r^(d-1) g(r) K_d(p r) dr
  with K_3(z) = sin(z)/z * sqrt(2/pi) and K_2(z) = J_0(z).
* Standard-normalised T operator:  <p|T|r>_std = (2 pi)^(-d/2) T(p, r).
* Cross section on the energy shell, per unit solid angle:
      sigma_shell = 4 pi |T|^2 * |v|^(d-2) / 2 / (2 pi)^(d/2)
  and the optical theorem reads  Im T(v, v) = -sigma_tot / 2.
* A physical number density rho (obstacles per Lebesgue volume) enters the
  collision rate as  rho * (2 pi)^(d/2) * sigma_tot.
"""
from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def measure_factor(dim: int) -> float:
    """(2 pi)^(-d/2): converts a Lebesgue integral to the rescaled measure."""
    return TWO_PI ** (-dim / 2.0)


def shell_factor(speed, dim: int = 3):
    """Surface factor produced by integrating delta(u^2 - v^2) in the rescaled measure.

    ``int du delta(u^2 - v^2) g(u) = shell_factor * int dOmega g(|v| omega)``.
    """
    return np.asarray(speed, dtype=float) ** (dim - 2) / 2.0 * measure_factor(dim)


def density_to_measure(rho: float, dim: int = 3) -> float:
    """Obstacles per Lebesgue volume -> obstacles per rescaled volume."""
    return rho * TWO_PI ** (dim / 2.0)


def solid_angle(dim: int) -> float:
    return 4.0 * np.pi if dim == 3 else TWO_PI


def gaussian_l2_norm(amplitude: float, width: float, dim: int = 3) -> float:
    """L2 norm (rescaled measure) of amplitude * exp(-|x|^2 / (2 width^2))."""
    return abs(amplitude) * (np.pi * width**2) ** (dim / 4.0) * TWO_PI ** (-dim / 4.0)
