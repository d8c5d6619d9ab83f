"""Born series for the internally resummed obstacle vertex B_eta(alpha, p, r).

    B_eta(alpha, p, r) = sum_k int dq_1..dq_k V0_hat(p - q_1)
                         prod_j  V0_hat(q_j - q_{j+1}) / (alpha - q_j^2/2 + i eta)

with q_{k+1} = r.  The k-th term is evaluated channel by channel: the starting
vector V0_hat(q - r) is expanded in angular momentum, each channel is iterated
with a radial matrix, and the last factor V0_hat(p - q_k) is applied as a row
vector.  The radial rule is Gauss-Legendre on panels graded geometrically
towards the resonant shell |q| = sqrt(2 alpha), so the near-singular
denominator of width ~eta/|q| is resolved for every eta in (0, 1].
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..conventions import measure_factor
from .basis import basis, channel_weight, projected_kernel


class BornDivergence(RuntimeError):
    """The Born series terms grow; the amplitude is too large for the expansion."""


class QuadratureError(RuntimeError):
    """A quadrature failed to converge under refinement."""


def momentum_extent(spec) -> float:
    """|q| beyond which V0_hat is negligible (relative 1e-17)."""
    a = spec.range
    if spec.profile == "gaussian":
        return np.sqrt(2 * 39.0) / a
    probe = np.geomspace(0.1 / a, 4000.0 / a, 400)
    vals = np.abs(spec.fourier(probe))
    ref = np.abs(spec.fourier(np.array([0.0])))[0] or vals.max()
    small = np.nonzero(vals < 1e-9 * ref)[0]
    return float(probe[small[0]]) if small.size else float(probe[-1])


def radial_rule(alpha, eta, qmax, order=16, panel=None, grading=2.0, scale=1.0):
    """Nodes/weights on [0, qmax] refined around sqrt(2 alpha).

    ``scale`` > 1 refines every panel (used for convergence checks).
    """
    panel = panel or qmax / 24
    edges = [0.0]
    if alpha > 0:
        qs = np.sqrt(2 * alpha)
        qmax = max(qmax, qs + 8 * panel)
        w0 = max(0.25 * eta / max(qs, 1e-12), 1e-10)
        widths = [0.0]
        w = w0
        while w < max(qs, qmax - qs):
            widths.append(w)
            w *= grading
        left = [qs - x for x in widths if qs - x > 0][::-1]
        right = [qs + x for x in widths[1:] if qs + x < qmax]
        # uniform panels between the graded zone and the ends
        if left:
            edges.extend(np.linspace(0.0, left[0], max(2, int(np.ceil(left[0] / panel)) + 1))[1:])
            edges.extend(left[1:])
        edges.extend(right)
        tail0 = edges[-1]
        edges.extend(np.linspace(tail0, qmax, max(2, int(np.ceil((qmax - tail0) / panel)) + 1))[1:])
    else:
        edges = list(np.linspace(0.0, qmax, int(np.ceil(qmax / panel)) + 1))
    edges = np.unique(np.asarray(edges))
    if scale != 1.0:
        sub = int(round(scale))
        edges = np.unique(np.concatenate([np.linspace(a, b, sub + 1) for a, b in zip(edges[:-1], edges[1:])]))
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1], edges[1:]
    nodes = (0.5 * (b - a)[:, None] * x + 0.5 * (a + b)[:, None]).ravel()
    weights = (0.5 * (b - a)[:, None] * w).ravel()
    return nodes, weights


@dataclass
class BornResult:
    value: complex
    terms: list = field(default_factory=list)

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def last_term(self) -> float:
        return abs(self.terms[-1]) if self.terms else 0.0

    def ratios(self):
        mags = np.abs(np.asarray(self.terms))
        return mags[1:] / np.where(mags[:-1] == 0, np.inf, mags[:-1])


class RadialBornSolver:
    """Channel-resolved Born iteration at fixed (alpha, eta).

    The solver is built for a set of external radii that may appear as p or r;
    ``lmax`` is chosen so that every discarded channel of V0_hat(q - r) is below
    ``ltol`` relative to the s-wave.
    """

    def __init__(self, spec, alpha, eta, external, lmax=None, ltol=1e-15,
                 order=16, scale=1.0, n_angle=None):
        if not 0 < eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        self.spec = spec
        self.alpha = float(alpha)
        self.eta = float(eta)
        self.dim = spec.dim
        qmax = max(momentum_extent(spec), 1.5 * float(np.max(external, initial=0.0)))
        self.q, self.w = radial_rule(self.alpha, self.eta, qmax, order=order,
                                     panel=min(qmax / 24, 0.35 / spec.range), scale=scale)
        self.external = np.unique(np.atleast_1d(np.asarray(external, dtype=float)))
        self.lmax = lmax if lmax is not None else self._choose_lmax(ltol, n_angle)
        res = 1.0 / (self.alpha - 0.5 * self.q**2 + 1j * self.eta)
        self.measure = measure_factor(self.dim) * self.w * self.q ** (self.dim - 1) * res
        W_qq = projected_kernel(spec, self.q, self.q, self.lmax, n_angle)
        self.A = W_qq * self.measure[None, None, :]
        W_qe = projected_kernel(spec, self.q, self.external, self.lmax, n_angle)
        # start vectors (channel-weighted) and closing rows for every external radius
        self.start = W_qe * channel_weight(np.arange(self.lmax + 1), self.dim)[:, None, None]
        self.rows = np.transpose(W_qe, (0, 2, 1)) * self.measure[None, None, :]

    def shell_free(self, alpha) -> bool:
        """True when the grid needs no refinement at ``alpha`` (no resonant shell inside it)."""
        return alpha <= 0 or np.sqrt(2 * alpha) > self.q[-1] + 8 * (self.q[-1] / 24)

    def retarget(self, alpha) -> "RadialBornSolver":
        """Copy at a new ``alpha`` on the same grid; both energies must be shell-free."""
        if not (self.shell_free(self.alpha) and self.shell_free(alpha)):
            raise ValueError("retarget needs shell-free energies on both ends")
        new = copy.copy(self)
        new.alpha = float(alpha)
        res = 1.0 / (new.alpha - 0.5 * self.q**2 + 1j * self.eta)
        new.measure = measure_factor(self.dim) * self.w * self.q ** (self.dim - 1) * res
        ratio = new.measure / self.measure
        new.A = self.A * ratio[None, None, :]
        new.rows = self.rows * ratio[None, None, :]
        return new

    def _choose_lmax(self, ltol, n_angle):
        trial = 120 if self.dim == 3 else 160
        W = projected_kernel(self.spec, self.q, self.external, trial, n_angle)
        mag = np.abs(W).reshape(trial + 1, -1).max(axis=1)
        ref = mag[0] if mag[0] > 0 else 1.0
        keep = np.nonzero(mag > ltol * ref)[0]
        return int(keep[-1]) + 2 if keep.size else 2

    def _idx(self, radius):
        i = int(np.argmin(np.abs(self.external - radius)))
        if not np.isclose(self.external[i], radius, rtol=1e-14, atol=1e-14):
            raise KeyError(f"radius {radius} not among the solver's external radii")
        return i

    def iter_channel_terms(self, p_abs, r_abs, side="right"):
        """Yield the per-channel series terms t[l] for k = 1, 2, ...

        ``side='right'`` iterates from V0_hat(q - r); ``side='left'`` iterates the
        transposed recursion from V0_hat(p - q).  Both give the same numbers up to
        round-off but use different association orders.
        """
        ip, ir = self._idx(p_abs), self._idx(r_abs)
        if side == "right":
            vec = self.start[:, :, ir, None].astype(complex)       # (L, nq, 1)
            row = self.rows[:, ip, None, :]                        # (L, 1, nq)
            while True:
                yield (row @ vec)[:, 0, 0]
                vec = self.A @ vec
        else:
            vec = self.rows[:, ip, None, :].astype(complex)
            col = self.start[:, :, ir, None]
            while True:
                yield (vec @ col)[:, 0, 0]
                vec = vec @ self.A

    def channel_terms(self, p_abs, r_abs, k_max, side="right"):
        """Array t[k - 1, l] of the first ``k_max`` channel terms."""
        it = self.iter_channel_terms(p_abs, r_abs, side)
        return np.array([next(it) for _ in range(k_max)])

    def resolvent_sum(self, p_abs, r_abs):
        """Channel coefficients of sum_{k>=1} via a direct linear solve (no truncation)."""
        ip, ir = self._idx(p_abs), self._idx(r_abs)
        out = np.empty(self.lmax + 1, dtype=complex)
        eye = np.eye(self.q.size)
        for l in range(self.lmax + 1):
            x = np.linalg.solve(eye - self.A[l], self.start[l, :, ir])
            out[l] = self.rows[l, ip] @ x
        return out

    def vertex(self, p, r, k_max=60, tol=1e-14, side="right"):
        """B_eta(alpha, p, r) for momentum vectors (or radii with cos angle) p, r."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        r = np.atleast_1d(np.asarray(r, dtype=float))
        pa, ra = float(np.linalg.norm(p)), float(np.linalg.norm(r))
        cosg = float(p @ r / (pa * ra)) if pa > 0 and ra > 0 else 1.0
        return series_from_channels(self, pa, ra, cosg, k_max, tol, side)


def series_from_channels(solver, pa, ra, cosg, k_max, tol, side="right"):
    spec = solver.spec
    diff = np.sqrt(max(pa * pa + ra * ra - 2 * pa * ra * cosg, 0.0))
    t0 = complex(spec.fourier(np.array([diff]))[0])
    terms = [t0]
    total = t0
    if k_max == 0:
        return BornResult(total, terms)
    B = basis(np.arange(solver.lmax + 1), np.array(cosg), solver.dim)
    chan = solver.iter_channel_terms(pa, ra, side)
    growth = 0
    for k in range(k_max):
        term = complex(next(chan) @ B)
        terms.append(term)
        total += term
        prev = abs(terms[-2])
        growth = growth + 1 if prev > 0 and abs(term) > prev else 0
        if growth >= 3:
            raise BornDivergence(
                f"Born series diverging for amplitude {spec.amplitude:g} "
                f"(|term_{k + 1}| = {abs(term):.3g})")
        if abs(term) < tol:
            break
    return BornResult(total, terms)


@lru_cache(maxsize=64)
def _cached_solver(spec, alpha, eta, external, lmax, scale):
    return RadialBornSolver(spec, alpha, eta, np.array(external), lmax=lmax, scale=scale)


def born_series_B(spec, alpha, eta, p, r, k_max=60, tol=1e-14, side="right", scale=1.0):
    """Sum of the k-fold iterated kernels of B_eta(alpha, p, r), truncated at ``k_max``.

    Stops once a term falls below ``tol`` in magnitude.  Raises ``BornDivergence``
    after three consecutive growing terms.
    """
    if k_max < 0:
        raise ValueError("k_max must be non-negative")
    p = np.atleast_1d(np.asarray(p, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if spec.amplitude == 0:
        return BornResult(0j, [0j])
    ext = tuple(sorted({round(float(np.linalg.norm(p)), 15), round(float(np.linalg.norm(r)), 15)}))
    solver = _cached_solver(spec, float(alpha), float(eta), ext, None, float(scale))
    pa, ra = float(np.linalg.norm(p)), float(np.linalg.norm(r))
    cosg = float(p @ r / (pa * ra)) if pa > 0 and ra > 0 else 1.0
    return series_from_channels(solver, round(pa, 15), round(ra, 15), cosg, k_max, tol, side)


def born_spectral_radius(spec, alpha, eta, **kw) -> float:
    """Largest |eigenvalue| of the channel iteration matrices.

    The Born terms eventually shrink by this factor per order; the series
    converges iff it is below 1.  It scales linearly with the amplitude.
    """
    solver = RadialBornSolver(spec, alpha, eta, [1.0], **kw)
    return float(max(np.max(np.abs(np.linalg.eigvals(A))) for A in solver.A))


def divergence_threshold(spec, alphas=(0.125, 0.5, 1.125, 2.0), eta=0.025) -> float:
    """Smallest amplitude (same sign and profile) at which some tested alpha diverges."""
    if spec.amplitude == 0:
        raise ValueError("threshold is defined by scaling a nonzero amplitude")
    rho = max(born_spectral_radius(spec, a, eta) for a in alphas)
    return abs(spec.amplitude) / rho
