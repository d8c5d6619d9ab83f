"""The shifted Born operator acting on a momentum function.

    (B f)(p) = int dq V0_hat(p - q) f(q) / (alpha - (q + u)^2 / 2 + i eta)

evaluated on a spherical (polar in 2D) grid centred at q = -u, so the
near-singular shell |q + u| = sqrt(2 alpha) is a coordinate surface and the
radial panels can be graded towards it.
"""
from __future__ import annotations

import numpy as np

from ..conventions import measure_factor
from .born import QuadratureError, radial_rule


def _sphere_rule(dim, n_polar):
    if dim == 3:
        x, w = np.polynomial.legendre.leggauss(n_polar)
        n_phi = 2 * n_polar
        phi = 2 * np.pi * np.arange(n_phi) / n_phi
        st = np.sqrt(1 - x * x)
        dirs = np.stack([np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)),
                         np.repeat(x[:, None], n_phi, 1)], -1).reshape(-1, 3)
        wts = np.repeat(w, n_phi) * (2 * np.pi / n_phi)
        return dirs, wts
    phi = 2 * np.pi * np.arange(2 * n_polar) / (2 * n_polar)
    return np.stack([np.cos(phi), np.sin(phi)], -1), np.full(phi.size, np.pi / n_polar)


def shell_grid(alpha, eta, qmax, dim, n_polar=24, order=12, scale=1):
    """Nodes (relative to -u) and weights including the resolvent factor."""
    r, wr = radial_rule(alpha, eta, qmax, order=order, panel=qmax / (12 * scale), scale=1.0)
    dirs, wa = _sphere_rule(dim, n_polar * scale)
    nodes = (r[:, None, None] * dirs[None]).reshape(-1, dim)
    res = 1.0 / (alpha - 0.5 * r * r + 1j * eta)
    w = (wr * r ** (dim - 1) * res)[:, None] * wa[None]
    return nodes, measure_factor(dim) * w.ravel()


def _apply(spec, alpha, eta, u, f, p, qmax, n_polar, scale):
    qp, w = shell_grid(alpha, eta, qmax, spec.dim, n_polar, scale=scale)
    q = qp - u
    fw = f(q) * w
    out = np.empty(len(p), dtype=complex)
    for i, pi in enumerate(p):
        out[i] = np.sum(spec.fourier(np.linalg.norm(pi - q, axis=1)) * fw)
    return out


def apply_born_operator(spec, alpha, eta, u, f, p, qmax=None, n_polar=24, rtol=1e-6,
                        return_residual=False):
    """Values of (B f)(p) at the momentum points ``p`` (shape (n, d)).

    ``f`` is a callable on arrays of momentum vectors.  The quadrature is
    repeated with every panel and the angular rule refined once; disagreement
    beyond ``rtol`` raises ``QuadratureError`` carrying the residual.
    """
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    dim = spec.dim
    u = np.asarray(u, dtype=float).reshape(dim)
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if spec.amplitude == 0:
        z = np.zeros(len(p), dtype=complex)
        return (z, 0.0) if return_residual else z
    if qmax is None:
        qmax = 12.0 / spec.range + np.linalg.norm(u) + np.sqrt(2 * max(alpha, 0.0))
    coarse = _apply(spec, alpha, eta, u, f, p, qmax, n_polar, 1)
    fine = _apply(spec, alpha, eta, u, f, p, qmax, n_polar, 2)
    scale = max(np.max(np.abs(fine)), 1e-300)
    resid = float(np.max(np.abs(fine - coarse)) / scale)
    if resid > rtol:
        err = QuadratureError(f"Born operator quadrature residual {resid:.3g} > {rtol:g}")
        err.residual = resid
        raise err
    return (fine, resid) if return_residual else fine


def tensor_grid_born_operator(spec, alpha, eta, u, f, p, qmax=10.0, n=64):
    """Naive Gauss-Legendre tensor-grid quadrature; only sensible for alpha << 0."""
    dim = spec.dim
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = qmax * x, qmax * w
    mesh = np.stack(np.meshgrid(*([x] * dim), indexing="ij"), -1).reshape(-1, dim)
    wt = np.prod(np.stack(np.meshgrid(*([w] * dim), indexing="ij"), -1).reshape(-1, dim), axis=1)
    u = np.asarray(u, dtype=float)
    res = 1.0 / (alpha - 0.5 * np.sum((mesh + u) ** 2, axis=1) + 1j * eta)
    fw = f(mesh) * res * wt * measure_factor(dim)
    p = np.atleast_2d(np.asarray(p, dtype=float))
    return np.array([np.sum(spec.fourier(np.linalg.norm(pi - mesh, axis=1)) * fw) for pi in p])


def green_route_gaussian_input(spec, alpha, eta, u, width, q0, p, n_herm=36, n_rad=160):
    """Independent 3D evaluation of (B f)(p) for f(q) = s^3 exp(-s^2 |q - q0|^2 / 2).

    Goes through position space: the resolvent becomes the outgoing Green
    function -(2 pi)^{1/2} e^{i kappa |x| - i u.x} / |x| with
    kappa^2 = 2 (alpha + i eta), the convolution with the Gaussian f reduces
    to one radial integral, and the outer Fourier transform of V0 times the
    result is done by Gauss-Hermite quadrature against the Gaussian V0.
    """
    if spec.dim != 3 or spec.profile != "gaussian":
        raise ValueError("position-space route implemented for 3D gaussian potentials")
    s = float(width)
    a = spec.range
    u = np.asarray(u, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    kappa = np.sqrt(2 * (alpha + 1j * eta))
    if kappa.imag < 0:
        kappa = -kappa
    # outer nodes: V0(x) = lam exp(-x^2 / 2a^2)  ->  Hermite weight exp(-t^2), x = sqrt(2) a t
    t, wt = np.polynomial.hermite.hermgauss(n_herm)
    X = np.stack(np.meshgrid(t, t, t, indexing="ij"), -1).reshape(-1, 3) * np.sqrt(2) * a
    W = np.prod(np.stack(np.meshgrid(wt, wt, wt, indexing="ij"), -1).reshape(-1, 3), axis=1)
    W = W * (np.sqrt(2) * a) ** 3 * spec.amplitude * (2 * np.pi) ** -1.5
    g = _g_check(X, s, q0, u, kappa, n_rad)
    p = np.atleast_2d(np.asarray(p, dtype=float))
    return np.exp(-1j * p @ X.T) @ (W * g)


def _g_check(X, s, q0, u, kappa, n_rad, chunk=2048):
    """g(x) = int dy f_check(y) G(x - y) for the Gaussian input."""
    xr = np.linalg.norm(X, axis=1)
    rmax = xr.max() + 12 * s
    gx, gw = np.polynomial.legendre.leggauss(32)
    edges = np.linspace(0.0, rmax, n_rad // 32 * 4 + 1)
    a_, b_ = edges[:-1, None], edges[1:, None]
    r = (0.5 * (b_ - a_) * gx + 0.5 * (a_ + b_)).ravel()
    w = (0.5 * (b_ - a_) * gw).ravel()
    out = np.empty(len(X), dtype=complex)
    k = q0 + u
    for sl in range(0, len(X), chunk):
        x = X[sl:sl + chunk]
        c = x / s**2 - 1j * k
        C = np.sqrt(np.sum(c * c, axis=1))[:, None]
        C = np.where(np.abs(C) < 1e-12, 1e-12, C)
        base = -r[None] ** 2 / (2 * s**2) + 1j * kappa * r[None] - (xr[sl:sl + chunk, None] ** 2) / (2 * s**2)
        sinh_term = (np.exp(base + r[None] * C) - np.exp(base - r[None] * C)) / (2 * C)
        radial = sinh_term @ w
        out[sl:sl + chunk] = -2 * np.exp(1j * x @ q0) * radial
    return out
