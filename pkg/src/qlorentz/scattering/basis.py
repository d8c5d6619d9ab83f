"""Angular-momentum reduction of rotation-invariant momentum kernels.

For a radial V0 the kernel V0_hat(|p - q|) is diagonal in angular momentum.
With gamma the angle between p and q,

    V0_hat(|p - q|) = sum_l  c_l * W_l(|p|, |q|) * B_l(cos gamma)

where in d = 3 the basis is Legendre P_l, c_l = (2l+1)/(4 pi) and
W_l = 2 pi int_{-1}^{1} V0_hat P_l dx;  in d = 2 the basis is cos(l gamma),
c_0 = 1/(2 pi), c_l = 1/pi, and W_l = int_0^{2 pi} V0_hat cos(l phi) dphi.
The same W_l is the Funk-Hecke eigenvalue of the angular integral, so an
integral operator with an isotropic weight acts on each l separately.
"""
from __future__ import annotations

import numpy as np
from scipy.special import eval_legendre, ive


def channel_weight(l, dim):
    l = np.asarray(l)
    if dim == 3:
        return (2 * l + 1) / (4 * np.pi)
    return np.where(l == 0, 1.0 / (2 * np.pi), 1.0 / np.pi)


def basis(l, cos_theta, dim):
    """B_l(cos theta) for every l (leading axis) and angle (trailing axes)."""
    l = np.atleast_1d(l)
    x = np.clip(np.asarray(cos_theta, dtype=float), -1.0, 1.0)
    shape = (-1,) + (1,) * x.ndim
    if dim == 3:
        return eval_legendre(l.reshape(shape), x)
    return np.cos(l.reshape(shape) * np.arccos(x))


def expand(coeffs, cos_theta, dim):
    """sum_l coeffs[l] * B_l(cos theta)."""
    coeffs = np.asarray(coeffs)
    l = np.arange(coeffs.shape[0])
    return np.tensordot(coeffs, basis(l, cos_theta, dim), axes=(0, 0))


def _angle_rule(dim, n):
    if dim == 3:
        x, w = np.polynomial.legendre.leggauss(n)
        return x, 2 * np.pi * w
    phi = (np.arange(n) + 0.5) * np.pi / n
    return np.cos(phi), np.full(n, 2 * np.pi / n)


def scaled_bessel_i(lmax, z, dim):
    """e^{-z} i_l(z) (dim 3, modified spherical) or e^{-z} I_l(z) (dim 2), l = 0..lmax.

    The ratios i_l / i_{l-1} come from the backward continued fraction, which
    neither overflows nor loses accuracy for large l; only l = 0 needs a
    special function.
    """
    z = np.asarray(z, dtype=float)
    start = lmax + 40 + int(np.sqrt(40 * (np.max(z, initial=0.0) + 1)) + np.max(z, initial=0.0) / 2)
    ratio = np.zeros_like(z)
    ratios = np.empty((lmax,) + z.shape)
    for l in range(start, 0, -1):
        c = 2 * l + 1 if dim == 3 else 2 * l
        ratio = z / (c + z * ratio)
        if l <= lmax:
            ratios[l - 1] = ratio
    out = np.empty((lmax + 1,) + z.shape)
    if dim == 3:
        zs = np.where(z > 0, z, 1.0)
        out[0] = np.where(z > 0, -np.expm1(-2 * zs) / (2 * zs), 1.0)
    else:
        out[0] = ive(0, z)
    for l in range(1, lmax + 1):
        out[l] = out[l - 1] * ratios[l - 1]
    return out


def projected_kernel(spec, p, q, lmax, n_angle=None, analytic=True):
    """W_l(p_i, q_j) for l = 0..lmax; shape (lmax + 1, len(p), len(q)).

    Gaussian profiles use the closed form (modified Bessel functions); other
    profiles are projected by quadrature over the relative angle.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))[:, None]
    q = np.atleast_1d(np.asarray(q, dtype=float))[None, :]
    dim = spec.dim
    ls = np.arange(lmax + 1)
    if analytic and spec.profile == "gaussian":
        lam, a = spec.amplitude, spec.range
        z = a * a * p * q
        env = np.exp(-0.5 * a * a * (p - q) ** 2)
        pref = 4 * np.pi * lam * a**3 if dim == 3 else 2 * np.pi * lam * a**2
        return pref * env * scaled_bessel_i(lmax, z, dim)
    n_angle = n_angle or max(96, 2 * lmax + 32)
    x, w = _angle_rule(dim, n_angle)
    B = basis(ls, x, dim) * w  # (L, n)
    out = np.empty((lmax + 1, p.shape[0], q.shape[1]))
    chunk = max(1, 2_000_000 // (n_angle * q.shape[1]))
    for s in range(0, p.shape[0], chunk):
        pp = p[s:s + chunk]
        k = np.sqrt(np.maximum(pp[..., None] ** 2 + q[..., None] ** 2
                               - 2 * pp[..., None] * q[..., None] * x, 0.0))
        vals = spec.fourier(k)  # (np, nq, n)
        out[:, s:s + chunk] = np.einsum("ijn,ln->lij", vals, B)
    return out
