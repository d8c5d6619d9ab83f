"""Linear Boltzmann equation on the energy shell: Monte Carlo and collision series.

    d_T F + V.grad_X F = int dU Sigma(U, V) F(X, U) - Lambda F(X, V)

with Sigma = rho0 sigma_shell and Lambda = rho0 sigma_tot(|V|).  The dynamics is
elastic, so velocities live on the sphere |V| = |u0| and the kernel reduces to
an angular density in the scattering angle.  ``rho0`` is a density in the
rescaled measure; use ``BoltzmannKernel.from_physical_density`` for obstacles
per unit Lebesgue volume.

Both solvers share one inverse-CDF map u -> cos(theta) (3D) or u -> theta (2D),
so the series is a deterministic quadrature of exactly the expectation the
Monte Carlo estimates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.stats import poisson, qmc

from .conventions import density_to_measure
from .io import load_array, save_array
from .phase_space import PhaseSpaceDensity, TestFunction
from .scattering.tables import CrossSectionTable

N_CDF = 256


class SeriesTailError(RuntimeError):
    pass


@dataclass
class BoltzmannKernel:
    rho0: float
    cross: CrossSectionTable
    speed: float
    im_forward: float | None = None       # Im T(u0, u0), for the damping identity
    norm_error: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.rho0 < 0:
            raise ValueError("rho0 must be non-negative")
        self.index = self.cross.index_of(self.speed)
        self.dim = self.cross.dim
        self.sigma_tot = float(self.cross.total[self.index])
        self._build_table()

    @classmethod
    def from_physical_density(cls, rho_phys, cross, speed, im_forward=None):
        return cls(density_to_measure(rho_phys, cross.dim), cross, speed, im_forward)

    @property
    def rate(self) -> float:
        """Jump rate Lambda = rho0 sigma_tot."""
        return self.rho0 * self.sigma_tot

    def _build_table(self):
        cos = np.asarray(self.cross.cos_angles)
        row = np.asarray(self.cross.differential[self.index], dtype=float)
        if self.dim == 3:
            x, dens = cos, 2 * np.pi * row
        else:
            # theta in [0, pi], both half-circles
            x, dens = np.arccos(cos)[::-1], 2 * row[::-1]
        if not np.any(dens > 0) and self.sigma_tot == 0:
            # no scattering (rate 0): the angular law is never sampled, keep it uniform
            dens = np.ones_like(dens)
        pdf = PchipInterpolator(x, np.clip(dens, 0.0, None))
        cdf = pdf.antiderivative()
        nodes = np.linspace(x[0], x[-1], N_CDF)
        c = cdf(nodes) - cdf(nodes[0])
        total = float(c[-1])
        if not total > 0:
            raise ValueError("angular density vanishes; cross-section table is empty")
        c /= total
        keep = np.concatenate([[True], np.diff(c) > 1e-15])
        self._icdf = PchipInterpolator(c[keep], nodes[keep])
        self._pdf = lambda y: pdf(y) / total
        self._lo, self._hi = x[0], x[-1]
        # relative gap between the interpolated density and the tabulated total
        self.norm_error = abs(total - self.sigma_tot) / self.sigma_tot if self.sigma_tot else 0.0
        if self.norm_error > 1e-3:
            raise ValueError(f"angular density integrates to {total:g}, table total {self.sigma_tot:g}")

    def angular_pdf(self, x):
        """Normalised density in cos(theta) (3D) or theta in [0, pi] (2D)."""
        return self._pdf(x)

    def density_integral(self) -> float:
        xs, ws = np.polynomial.legendre.leggauss(200)
        a, b = self._lo, self._hi
        return float(0.5 * (b - a) * np.sum(ws * self._pdf(0.5 * (b - a) * xs + 0.5 * (a + b))))

    def inverse_cdf(self, u):
        return np.clip(self._icdf(np.asarray(u, dtype=float)), self._lo, self._hi)

    def damping(self, T: float) -> float:
        return float(np.exp(-self.rate * T))

    def optical_damping(self, T: float) -> float | None:
        if self.im_forward is None:
            return None
        return float(np.exp(2 * T * self.rho0 * self.im_forward))

    def scatter(self, V, u_angle, u_aux):
        """New velocities at the same speed from uniforms (u_angle, u_aux)."""
        return rotate(V, self.inverse_cdf(u_angle), u_aux, self.dim)


def rotate(V, x, u_aux, dim):
    """Deflect the rows of V by the angle encoded in x (cos theta in 3D, theta in 2D).

    ``u_aux`` in [0, 1) is the azimuth fraction (3D) or the sign of the turn (2D).
    """
    V = np.asarray(V, dtype=float)
    if dim == 2:
        th = np.where(np.asarray(u_aux) < 0.5, x, -x)
        c, s = np.cos(th), np.sin(th)
        return np.stack([c * V[..., 0] - s * V[..., 1], s * V[..., 0] + c * V[..., 1]], -1)
    spd = np.linalg.norm(V, axis=-1, keepdims=True)
    w = V / spd
    # helper axis least aligned with w
    ax = np.zeros_like(w)
    ax[np.arange(w.shape[0]), np.argmin(np.abs(w), axis=-1)] = 1.0
    e1 = np.cross(w, ax)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(w, e1)
    cth = np.asarray(x)[..., None]
    sth = np.sqrt(np.clip(1 - cth**2, 0.0, None))
    phi = 2 * np.pi * np.asarray(u_aux)[..., None]
    out = cth * w + sth * (np.cos(phi) * e1 + np.sin(phi) * e2)
    out /= np.linalg.norm(out, axis=-1, keepdims=True)
    return out * spd


@dataclass(frozen=True)
class InitialData:
    """F0(X, V) = N(X; center, sigma^2 I) delta(V - u0), i.e. |h|^2 for a Gaussian h."""
    center: tuple
    sigma: float
    u0: tuple

    @property
    def dim(self) -> int:
        return len(self.u0)

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.u0))

    def sample(self, rng, n):
        X = np.asarray(self.center, dtype=float) + self.sigma * rng.standard_normal((n, self.dim))
        V = np.tile(np.asarray(self.u0, dtype=float), (n, 1))
        return X, V


@dataclass
class ParticleEnsemble:
    X: np.ndarray
    V: np.ndarray
    weights: np.ndarray
    n_collisions: np.ndarray
    seed: int | None = None
    T: float = 0.0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.X.shape[0]

    def estimate(self, J: TestFunction):
        """(mean, standard error) of sum_i w_i J(X_i, V_i) with sum w = 1."""
        vals = J(self.X, self.V)
        n = len(self)
        mean = float(np.sum(self.weights * vals))
        se = float(np.std(vals * self.weights * n, ddof=1) / np.sqrt(n)) if n > 1 else np.inf
        return mean, se

    def save(self, path):
        d = self.X.shape[1]
        arr = np.column_stack([self.X, self.V, self.weights, self.n_collisions])
        cols = [f"X{i}" for i in range(d)] + [f"V{i}" for i in range(d)] + ["weight", "n_collisions"]
        return save_array(path, arr, {"columns": cols, "dim": d, "seed": self.seed, "T": self.T,
                                      **self.meta})

    @classmethod
    def load(cls, path):
        arr, meta = load_array(path)
        d = meta["dim"]
        extra = {k: v for k, v in meta.items() if k not in ("columns", "dim", "seed", "T", "shape", "dtype")}
        return cls(arr[:, :d].copy(), arr[:, d:2 * d].copy(), arr[:, 2 * d].copy(),
                   arr[:, 2 * d + 1].astype(int), meta["seed"], meta["T"], extra)


def _evolve_shard(X, V, ncoll, kernel: BoltzmannKernel, T, rng):
    lam = kernel.rate
    left = np.full(X.shape[0], float(T))
    active = np.arange(X.shape[0])
    if lam <= 0 or T <= 0:
        return X + T * V, V, ncoll
    while active.size:
        tau = rng.exponential(1.0 / lam, active.size)
        step = np.minimum(tau, left[active])
        X[active] += step[:, None] * V[active]
        left[active] -= step
        hit = left[active] > 0          # the clock rang before T
        idx = active[hit]
        if idx.size:
            u = rng.random((idx.size, 2))
            V[idx] = kernel.scatter(V[idx], u[:, 0], u[:, 1])
            ncoll[idx] += 1
        active = idx
    return X, V, ncoll


def mc_evolve(F0, kernel: BoltzmannKernel, T: float, n_particles: int, seed: int,
              shard_size: int = 1 << 15) -> ParticleEnsemble:
    """Energy-shell jump process: free streaming with exponential(Lambda) scattering times.

    ``F0`` is an ``InitialData``, a callable ``(rng, n) -> (X, V)``, or a
    ``ParticleEnsemble`` to continue (its particles are advanced, weights kept).
    Shards draw from independent streams spawned from ``seed``; the shard layout
    depends only on ``n_particles`` so results do not depend on scheduling.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    if isinstance(F0, ParticleEnsemble):
        X0, V0, w0, c0 = F0.X.copy(), F0.V.copy(), F0.weights.copy(), F0.n_collisions.copy()
        n_particles = len(F0)
    else:
        X0 = V0 = None
    speed_ok = kernel.cross.index_of(kernel.speed) is not None
    if not speed_ok:
        raise KeyError("kernel speed missing from the cross-section table")
    n_shards = max(1, int(np.ceil(n_particles / shard_size)))
    children = np.random.SeedSequence(seed).spawn(n_shards)
    Xs, Vs, Cs = [], [], []
    for k, child in enumerate(children):
        rng = np.random.default_rng(child)
        lo, hi = k * shard_size, min((k + 1) * shard_size, n_particles)
        if X0 is None:
            X, V = (F0.sample(rng, hi - lo) if hasattr(F0, "sample") else F0(rng, hi - lo))
            X, V = np.array(X, dtype=float), np.array(V, dtype=float)
            c = np.zeros(hi - lo, dtype=int)
        else:
            X, V, c = X0[lo:hi], V0[lo:hi], c0[lo:hi]
        if np.max(np.abs(np.linalg.norm(V, axis=1) - kernel.speed)) > 1e-9 * max(kernel.speed, 1.0):
            raise ValueError("initial velocities are not on the kernel's energy shell")
        X, V, c = _evolve_shard(X, V, c, kernel, T, rng)
        Xs.append(X), Vs.append(V), Cs.append(c)
    w = w0 if X0 is not None else np.full(n_particles, 1.0 / n_particles)
    T_total = T + (F0.T if isinstance(F0, ParticleEnsemble) else 0.0)
    return ParticleEnsemble(np.concatenate(Xs), np.concatenate(Vs), w, np.concatenate(Cs),
                            seed, T_total, {"rate": kernel.rate})


# -- deterministic collision series ------------------------------------------

@dataclass
class CollisionSeriesResult:
    orders: list              # contribution of m collisions to int J F_T
    weights: list             # Poisson weights e^{-Lambda T} (Lambda T)^m / m!
    averages: list            # conditional averages given m collisions
    quad_errors: list
    damping: float
    total: float
    tail_estimate: float
    min_node_value: float     # smallest weight carried by any quadrature node of F_T (>= 0)
    meta: dict = field(default_factory=dict)


def _chain_average(kernel, F0: InitialData, T, J, durations, u_angle, u_aux):
    """Mean of E_X J over nodes: durations (n, m+1), uniforms (n, m) each."""
    n, m1 = durations.shape
    V = np.tile(np.asarray(F0.u0, dtype=float), (n, 1))
    disp = durations[:, :1] * V
    for j in range(m1 - 1):
        V = kernel.scatter(V, u_angle[:, j], u_aux[:, j])
        disp = disp + durations[:, j + 1:j + 2] * V
    mean = np.asarray(F0.center, dtype=float) + disp
    return J.gaussian_average(mean, F0.sigma**2, V)


def _order_one(kernel, F0, T, J, n_time=16, n_angle=64, n_aux=24):
    s, ws = np.polynomial.legendre.leggauss(n_time)
    s, ws = 0.5 * (s + 1), 0.5 * ws
    u, wu = np.polynomial.legendre.leggauss(n_angle)
    u, wu = 0.5 * (u + 1), 0.5 * wu
    if kernel.dim == 3:
        a = (np.arange(n_aux) + 0.5) / n_aux
        wa = np.full(n_aux, 1.0 / n_aux)
    else:
        a, wa = np.array([0.25, 0.75]), np.array([0.5, 0.5])
    S, U, A = np.meshgrid(s, u, a, indexing="ij")
    W = (ws[:, None, None] * wu[None, :, None] * wa[None, None, :]).ravel()
    dur = np.column_stack([T * S.ravel(), T * (1 - S.ravel())])
    vals = _chain_average(kernel, F0, T, J, dur, U.ravel()[:, None], A.ravel()[:, None])
    est = float(np.sum(W * vals))
    # error proxy: the same product rule at half the angular order
    u2, wu2 = np.polynomial.legendre.leggauss(n_angle // 2)
    u2, wu2 = 0.5 * (u2 + 1), 0.5 * wu2
    S2, U2, A2 = np.meshgrid(s, u2, a, indexing="ij")
    W2 = (ws[:, None, None] * wu2[None, :, None] * wa[None, None, :]).ravel()
    dur2 = np.column_stack([T * S2.ravel(), T * (1 - S2.ravel())])
    est2 = float(np.sum(W2 * _chain_average(kernel, F0, T, J, dur2, U2.ravel()[:, None],
                                             A2.ravel()[:, None])))
    return est, abs(est - est2), float(W.min())


def _order_qmc(kernel, F0, T, J, m, seed, log2n=15, reps=8):
    """Randomised Sobol average over the time simplex and m scattering angles."""
    dim = (m + 1) + 2 * m
    ests = []
    for r, child in enumerate(np.random.SeedSequence([seed, m]).spawn(reps)):
        pts = qmc.Sobol(dim, scramble=True, seed=np.random.default_rng(child)).random_base2(log2n)
        e = -np.log1p(-pts[:, :m + 1])          # exponential spacings -> uniform on the simplex
        dur = T * e / e.sum(axis=1, keepdims=True)
        ua = pts[:, m + 1:2 * m + 1]
        ux = pts[:, 2 * m + 1:]
        ests.append(float(np.mean(_chain_average(kernel, F0, T, J, dur, ua, ux))))
    ests = np.array(ests)
    return float(ests.mean()), float(ests.std(ddof=1) / np.sqrt(reps)), 2.0**-log2n / reps


def series_evolve(F0: InitialData, kernel: BoltzmannKernel, T: float, m_max: int,
                  J: TestFunction, tol: float = 1e-4, seed: int = 0) -> CollisionSeriesResult:
    """sum_m e^{-Lambda T} Lambda^m int_simplex da int prod p(w_{j-1} -> w_j) E_X J.

    Order 0 is closed form, order 1 uses a product Gauss rule (time x angle x
    azimuth), higher orders randomised Sobol points with a fixed seed.  The
    remaining Poisson mass beyond ``m_max`` times sup|J| is the tail estimate.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    if m_max < 0:
        raise ValueError("m_max must be non-negative")
    if abs(F0.speed - kernel.speed) > 1e-9 * max(kernel.speed, 1.0):
        raise ValueError("initial velocity is not on the kernel's energy shell")
    lam = kernel.rate
    mu = lam * T
    weights = [float(poisson.pmf(m, mu)) for m in range(m_max + 1)] if mu > 0 else \
        [1.0] + [0.0] * m_max
    averages, errs, node_w = [], [], [1.0]
    u0 = np.asarray(F0.u0, dtype=float)
    c0 = np.asarray(F0.center, dtype=float)
    for m in range(m_max + 1):
        if m == 0:
            a, e = float(J.gaussian_average(c0 + T * u0, F0.sigma**2, u0)), 0.0
        elif weights[m] == 0.0:
            a, e = 0.0, 0.0
        elif m == 1:
            a, e, wmin = _order_one(kernel, F0, T, J)
            node_w.append(weights[m] * wmin)
        else:
            a, e, wmin = _order_qmc(kernel, F0, T, J, m, seed)
            node_w.append(weights[m] * wmin)
        averages.append(a)
        errs.append(e)
    orders = [w * a for w, a in zip(weights, averages)]
    sup_J = J.bounds()[0]
    tail = float(poisson.sf(m_max, mu) * sup_J) if mu > 0 else 0.0
    if tail > tol:
        k = m_max
        while poisson.sf(k, mu) * sup_J > tol:
            k += 1
        raise SeriesTailError(f"tail estimate {tail:.2e} > {tol:g}; use m_max >= {k}")
    quad = [w * e for w, e in zip(weights, errs)]
    return CollisionSeriesResult(orders, weights, averages, quad, kernel.damping(T),
                                 float(np.sum(orders)), tail, float(min(node_w)),
                                 {"rate": lam, "T": T, "m_max": m_max, "test_function": J.id,
                                  "optical_damping": kernel.optical_damping(T)})


# -- diagnostics ---------------------------------------------------------------

def density_estimate(ensemble: ParticleEnsemble, X_axes, V_axes, bandwidths,
                     chunk: int = 4096) -> PhaseSpaceDensity:
    """Gaussian kernel density estimate on a product (X, V) grid, normalised to unit mass."""
    X_axes = [np.asarray(a, dtype=float) for a in X_axes]
    V_axes = [np.asarray(a, dtype=float) for a in V_axes]
    hx, hv = (float(b) for b in bandwidths)
    d = len(X_axes)
    for axes, h in ((X_axes, hx), (V_axes, hv)):
        for a in axes:
            if a.size > 1 and h < a[1] - a[0]:
                raise ValueError("bandwidth below grid spacing")

    def kern(vals, axis, h):
        z = (axis[None, :] - vals[:, None]) / h
        return np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * h)

    nX = int(np.prod([a.size for a in X_axes]))
    nV = int(np.prod([a.size for a in V_axes]))
    out = np.zeros((nX, nV))
    for lo in range(0, len(ensemble), chunk):
        sl = slice(lo, lo + chunk)
        A = np.ones((ensemble.X[sl].shape[0], 1))
        for i in range(d):
            A = (A[:, :, None] * kern(ensemble.X[sl, i], X_axes[i], hx)[:, None, :]).reshape(A.shape[0], -1)
        B = np.ones_like(A[:, :1])
        for i in range(d):
            B = (B[:, :, None] * kern(ensemble.V[sl, i], V_axes[i], hv)[:, None, :]).reshape(B.shape[0], -1)
        out += (A * ensemble.weights[sl, None]).T @ B
    vals = out.reshape([a.size for a in X_axes] + [a.size for a in V_axes])
    dens = PhaseSpaceDensity(X_axes, V_axes, vals, {"kind": "kde", "bandwidths": [hx, hv]})
    raw = dens.mass()
    if raw <= 0:
        raise ValueError("no particle mass on the grid")
    dens.values = vals / raw
    dens.scale_meta["raw_mass"] = raw
    return dens


def conservation_report(obj, speed: float | None = None) -> dict:
    """Mass, shell-speed and positivity diagnostics for an ensemble or a series result."""
    if isinstance(obj, ParticleEnsemble):
        spd = np.linalg.norm(obj.V, axis=1)
        ref = speed if speed is not None else float(np.median(spd))
        dev = float(np.max(np.abs(spd - ref))) if spd.size else 0.0
        return {"mass": float(np.sum(obj.weights)), "speed_deviation": dev,
                "speed_conserved": dev <= 1e-12 * max(ref, 1.0),
                "positive": bool(np.all(obj.weights >= 0)),
                "mean_collisions": float(np.mean(obj.n_collisions))}
    if isinstance(obj, CollisionSeriesResult):
        return {"poisson_mass": float(np.sum(obj.weights)), "tail": obj.tail_estimate,
                "positive": bool(min(obj.weights) >= 0 and obj.min_node_value >= 0),
                "damping": obj.damping}
    raise TypeError(f"no conservation report for {type(obj).__name__}")
