"""Collision-history (Duhamel) expansion of the Lorentz-gas propagator.

Free kernel
    K(t; r_0..r_m) = (-i)^m int_{s_0+..+s_m=t} prod_j exp(-i s_j r_j^2/2)
is the divided difference of E -> exp(-i t E) over the energies r_j^2/2.  It is
evaluated through the Opitz formula: the top-right entry of exp(-i t Z) with Z
bidiagonal (energies on the diagonal, ones above).  That form is exact for
coinciding energies as well, so no special branch is needed beyond the fully
degenerate shortcut.

Per-history wave functions psi_A use the resolvent identity R0 T_a R0 = R0 V_a R_a
(T_a the single-obstacle vertex, R_a the resolvent of H0 + V_a).  In the time
domain this turns the alpha integral of a history into the top level of the
triangular hierarchy

    i d/dt xi_j = (H0 + V_{a_j}) xi_j + V_{a_{j+1}} xi_{j+1},   xi_m(0) = psi0,

with V_{a_0} = 0.  Every level is advanced with the same Strang splitting as
the full evolution; the potential half-steps are pointwise exponentials of the
bidiagonal level-coupling matrix.  Summed over all histories (recollisions
included) the hierarchy reproduces the full split-step propagator at the same
dt, so the truncation residual is free of time-step error to leading order.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.integrate import quad
from scipy.interpolate import BarycentricInterpolator
from scipy.linalg import expm

from .potential import ObstacleConfig, PotentialSpec
from .schrodinger import WaveField, build_potential_field, default_dt, evolve_split_step

DEGENERATE_TOL = 1e-12
MAX_HISTORIES = 10_000


class KernelQuadratureError(RuntimeError):
    pass


class HistoryBlowup(RuntimeError):
    """Too many collision histories requested."""


def eta_of_t(t: float) -> float:
    """Regularisation eta(t) = min(1, 1/t)."""
    return 1.0 if t <= 1 else 1.0 / t


def _energies(momenta) -> np.ndarray:
    """Kinetic energies r^2/2 of a list of momenta (vectors or radii)."""
    return np.array([0.5 * float(np.dot(p, p)) for p in map(np.atleast_1d, momenta)])


def exp_divided_difference(t: float, energies) -> np.ndarray:
    """Divided difference of exp(-i t E) over the last axis of ``energies``.

    Batched over leading axes.
    """
    E = np.asarray(energies, dtype=float)
    m = E.shape[-1] - 1
    if m == 0:
        return np.exp(-1j * t * E[..., 0])
    flat = E.reshape(-1, m + 1)
    out = np.empty(flat.shape[0], dtype=complex)
    spread = flat.max(axis=1) - flat.min(axis=1)
    deg = spread < DEGENERATE_TOL
    if np.any(deg):
        Eb = flat[deg].mean(axis=1)
        out[deg] = (-1j * t) ** m / math.factorial(m) * np.exp(-1j * t * Eb)
    gen = ~deg
    if np.any(gen):
        Z = np.zeros((int(gen.sum()), m + 1, m + 1), dtype=complex)
        idx = np.arange(m + 1)
        Z[:, idx, idx] = -1j * t * flat[gen]
        Z[:, idx[:-1], idx[1:]] = -1j * t
        out[gen] = expm(Z)[:, 0, m]
    return out.reshape(E.shape[:-1])


def free_kernel_K(t: float, momenta) -> complex:
    """K(t; r_0..r_m) for a list of momenta (vectors or radii)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    E = _energies(momenta)
    if E.ndim != 1:
        raise ValueError("expected a single list of momenta")
    if t == 0:
        return complex(1.0 if E.size == 1 else 0.0)
    return complex(exp_divided_difference(t, E))


@dataclass
class KernelValue:
    value: complex
    abserr: float
    tail_bound: float
    window: tuple


def alpha_kernel_K(t: float, momenta, eta: float | None = None, tol: float = 1e-8,
                   max_widen: int = 6) -> KernelValue:
    """(i/2pi) e^{eta t} int dalpha e^{-i alpha t} prod_j 1/(alpha - E_j + i eta).

    Adaptive oscillatory quadrature (QAWO) on a window around the energies,
    Fourier-integral quadrature (QAWF) on both tails.  The window is widened
    until the tail error estimate drops below ``tol``.
    """
    if t <= 0:
        raise ValueError("the alpha representation needs t > 0")
    eta = eta_of_t(t) if eta is None else float(eta)
    if not eta > 0:
        raise ValueError("eta must be positive")
    E = np.atleast_1d(_energies(momenta))

    def g(a):
        return np.prod(1.0 / (a - E + 1j * eta))

    def parts(fn, a, b, weight, sign=1.0):
        if np.isinf(b):
            kw = dict(weight=weight, wvar=t, limlst=200)
            re = quad(lambda x: fn(x).real, a, b, **kw)
            im = quad(lambda x: fn(x).imag, a, b, **kw)
            return sign * (re[0] + 1j * im[0]), re[1] + im[1]
        # QAWO on one wide interval can step over the eta-wide peaks; panel it
        val, err = 0j, 0.0
        for lo_, hi_ in zip(edges[:-1], edges[1:]):
            kw = dict(weight=weight, wvar=t, limit=200, epsabs=1e-13)
            re = quad(lambda x: fn(x).real, lo_, hi_, **kw)
            im = quad(lambda x: fn(x).imag, lo_, hi_, **kw)
            val += re[0] + 1j * im[0]
            err += re[1] + im[1]
        return sign * val, err

    width = max(20.0, 40 * eta)
    for _ in range(max_widen):
        lo, hi = E.min() - width, E.max() + width
        edges = _alpha_edges(E, eta, lo, hi)
        c_in, e_in = parts(g, lo, hi, "cos")
        s_in, f_in = parts(g, lo, hi, "sin")
        c_r, e_r = parts(g, hi, np.inf, "cos")
        s_r, f_r = parts(g, hi, np.inf, "sin")
        gl = lambda b: g(-b)  # noqa: E731
        c_l, e_l = parts(gl, -lo, np.inf, "cos")
        s_l, f_l = parts(gl, -lo, np.inf, "sin", sign=-1.0)
        tail = e_r + f_r + e_l + f_l
        if tail * np.exp(eta * t) / (2 * np.pi) < tol:
            break
        width *= 4
    else:
        raise KernelQuadratureError(f"alpha tail bound {tail:.2e} above {tol:g}")
    integral = (c_in + c_r + c_l) - 1j * (s_in + s_r + s_l)
    pref = 1j / (2 * np.pi) * np.exp(eta * t)
    return KernelValue(complex(pref * integral), abs(pref) * (e_in + f_in), abs(pref) * tail, (lo, hi))


def semigroup_split(t: float, momenta, part, rtol: float = 1e-11) -> complex:
    """-i int_0^t K(s; r_I) K(t - s; r_J) ds for the index set I = ``part``, J its complement."""
    momenta = list(momenta)
    I = sorted(set(part))
    J = [j for j in range(len(momenta)) if j not in I]
    if not I or not J:
        raise ValueError("both parts of the partition must be non-empty")
    EI = _energies([momenta[i] for i in I])
    EJ = _energies([momenta[j] for j in J])

    def f(s):
        k1 = complex(exp_divided_difference(s, EI)) if s > 0 else complex(EI.size == 1)
        k2 = complex(exp_divided_difference(t - s, EJ)) if t - s > 0 else complex(EJ.size == 1)
        return k1 * k2

    re = quad(lambda s: f(s).real, 0, t, epsabs=1e-13, epsrel=rtol, limit=400)[0]
    im = quad(lambda s: f(s).imag, 0, t, epsabs=1e-13, epsrel=rtol, limit=400)[0]
    return -1j * (re + 1j * im)


@dataclass(frozen=True)
class KernelEvalPlan:
    t: float
    momenta: tuple
    method: str = "simplex-recursive"
    eta: float | None = None

    def __post_init__(self):
        if self.method not in ("simplex-recursive", "alpha-representation"):
            raise ValueError(f"unknown kernel method {self.method!r}")
        if self.method == "alpha-representation" and self.eta is None:
            object.__setattr__(self, "eta", eta_of_t(self.t))

    def evaluate(self) -> complex:
        if self.method == "simplex-recursive":
            return free_kernel_K(self.t, self.momenta)
        return alpha_kernel_K(self.t, self.momenta, self.eta).value


# -- resummed kernel ---------------------------------------------------------

@dataclass
class ResummedKernel:
    value: complex
    first_order: complex          # K(t; p) prod V0_hat, the alpha integral done exactly
    quad_error: float             # quadrature error of the same rule on the first-order part
    tail_bound: float
    n_alpha: int


def _alpha_edges(E, eta, lo, hi, extra=()):
    """Panel edges on [lo, hi], graded geometrically (from eta/4) around each energy."""
    pts = {lo, hi, *extra}
    for e in E:
        w = 0.25 * eta
        while w < 2 * (hi - lo):
            pts.update((e - w, e + w))
            w *= 2
    pts = np.array(sorted(x for x in pts if lo <= x <= hi))
    keep = [pts[0]]
    for x in pts[1:-1]:
        if x - keep[-1] > 0.1 * eta:
            keep.append(x)
    keep.append(pts[-1])
    return np.array(keep)


def resummed_kernel_scriptK(t: float, external_momenta, spec: PotentialSpec,
                            eta: float | None = None, k_max: int = 60, order: int = 6,
                            tol: float = 1e-8) -> ResummedKernel:
    """Alpha integral with every V0_hat replaced by the vertex B_eta(alpha, p_{j-1}, p_j).

    The first-order part (all vertices replaced by V0_hat) is the free kernel
    times prod V0_hat and is added in closed form; the remainder decays at least
    like |alpha|^{-(m+2)}.  It is integrated with Gauss-Legendre panels graded
    around the energies (at most one oscillation per panel) on a window, and
    beyond it through a polynomial model in 1/alpha integrated by Fourier-integral
    quadrature.  Born-series divergence propagates.
    """
    from .scattering.born import RadialBornSolver, series_from_channels

    ps = [np.atleast_1d(np.asarray(p, dtype=float)) for p in external_momenta]
    m = len(ps) - 1
    if not 1 <= m <= 3:
        raise ValueError("resummed kernel supports 1 <= m <= 3")
    if t <= 0:
        raise ValueError("t must be positive")
    eta = eta_of_t(t) if eta is None else float(eta)
    E = np.array([0.5 * p @ p for p in ps])
    vhat = np.array([complex(spec.fourier(np.array([np.linalg.norm(ps[j - 1] - ps[j])]))[0])
                     for j in range(1, m + 1)])
    first = free_kernel_K(t, ps) * np.prod(vhat)
    if spec.amplitude == 0:
        return ResummedKernel(0j, 0j, 0.0, 0.0, 0)
    radii = tuple(sorted({round(float(np.linalg.norm(p)), 15) for p in ps}))
    base = RadialBornSolver(spec, -1.0, eta, radii)
    q_top = base.q[-1] * (1 + 8 / 24)
    inner_hi = 0.5 * q_top**2
    pairs = []
    for j in range(1, m + 1):
        pa, ra = float(np.linalg.norm(ps[j - 1])), float(np.linalg.norm(ps[j]))
        cosg = float(ps[j - 1] @ ps[j] / (pa * ra)) if pa > 0 and ra > 0 else 1.0
        pairs.append((round(pa, 15), round(ra, 15), cosg))

    def vertices(alpha):
        if base.shell_free(alpha):
            solver = base.retarget(alpha)
        else:
            solver = RadialBornSolver(spec, alpha, eta, radii, lmax=base.lmax)
        return np.array([series_from_channels(solver, pa, ra, c, k_max, 1e-15).value
                         for pa, ra, c in pairs])

    def remainder(alpha):
        res = 1.0 / (alpha - E + 1j * eta)
        return np.prod(res) * (np.prod(vertices(alpha)) - np.prod(vhat)), np.prod(res) * np.prod(vhat)

    pref = 1j / (2 * np.pi) * np.exp(eta * t)
    xg, wg = np.polynomial.legendre.leggauss(order)
    # the negative side is cheap (one grid for all alpha < 0), the positive side
    # needs a fresh radial grid per node until the shell leaves the kernel support
    lam_lo = max(1.25 * inner_hi, 50.0)
    lam_hi = max(E.max() + 40 * eta, 2 * E.max() + 10.0)
    edges = _alpha_edges(np.append(E, 0.0), eta, -lam_lo, lam_hi)
    # at most one oscillation of e^{-i alpha t} per panel
    period = 2 * np.pi / t
    edges = np.unique(np.concatenate(
        [np.linspace(a, b, int(np.ceil((b - a) / period)) + 1) for a, b in zip(edges[:-1], edges[1:])]))
    a, b = edges[:-1], edges[1:]
    nodes = (0.5 * (b - a)[:, None] * xg + 0.5 * (a + b)[:, None]).ravel()
    weights = (0.5 * (b - a)[:, None] * wg).ravel()
    phase = np.exp(-1j * nodes * t) * weights
    rem = np.empty(nodes.size, dtype=complex)
    g1 = np.empty(nodes.size, dtype=complex)
    for i, al in enumerate(nodes):
        rem[i], g1[i] = remainder(al)
    window = np.sum(phase * rem)

    def fourier_tail(fn, sgn):
        # int_{lam}^inf e^{-i sgn x t} fn(sgn x) dx
        lam = lam_hi if sgn > 0 else lam_lo
        f = lambda x: fn(sgn * x)  # noqa: E731
        kw = dict(weight="cos", wvar=t, limlst=200)
        c = quad(lambda x: f(x).real, lam, np.inf, **kw)[0] + 1j * quad(lambda x: f(x).imag, lam, np.inf, **kw)[0]
        kw["weight"] = "sin"
        si = quad(lambda x: f(x).real, lam, np.inf, **kw)[0] + 1j * quad(lambda x: f(x).imag, lam, np.inf, **kw)[0]
        return c - 1j * sgn * si

    # far tails: the remainder is smooth in s = lam/|alpha|; interpolate |alpha|^{m+2} rem
    n_s = 16
    s_nodes = 0.5 * (1 + np.cos(np.pi * (np.arange(n_s) + 0.5) / n_s))
    far, tail = 0j, 0.0
    for sgn in (1.0, -1.0):
        lam = lam_hi if sgn > 0 else lam_lo
        al = sgn * lam / s_nodes
        h = np.array([remainder(x)[0] for x in al]) * np.abs(al) ** (m + 2)
        full = BarycentricInterpolator(s_nodes, h)
        half = BarycentricInterpolator(s_nodes[::2], h[::2])
        model = lambda x, P=full, L=lam: P(L / abs(x)) / abs(x) ** (m + 2)  # noqa: E731
        coarse = lambda x, P=half, L=lam: P(L / abs(x)) / abs(x) ** (m + 2)  # noqa: E731
        f_full = fourier_tail(model, sgn)
        far += f_full
        tail += abs(pref) * abs(f_full - fourier_tail(coarse, sgn))
    value = first + pref * (window + far)
    # the first-order part is known exactly, so the same rule applied to it
    # (tails by Fourier-integral quadrature) measures the window quadrature error
    gV = lambda x: np.prod(1.0 / (x - E + 1j * eta)) * np.prod(vhat)  # noqa: E731
    first_rule = pref * (np.sum(phase * g1) + fourier_tail(gV, 1.0) + fourier_tail(gV, -1.0))
    quad_err = abs(first_rule - first)
    if tail > tol:
        raise KernelQuadratureError(f"alpha tail estimate {tail:.2e} above {tol:g}")
    return ResummedKernel(complex(value), complex(first), float(quad_err), float(tail),
                          int(nodes.size + 2 * n_s))


# -- collision histories -----------------------------------------------------

@dataclass(frozen=True)
class CollisionHistory:
    centers: tuple = ()

    def __post_init__(self):
        c = tuple(int(x) for x in self.centers)
        object.__setattr__(self, "centers", c)
        if any(a == b for a, b in zip(c, c[1:])):
            raise ValueError(f"adjacent centers must differ: {c}")
        if any(x < 0 for x in c):
            raise ValueError("center labels must be non-negative")

    def __len__(self):
        return len(self.centers)

    @property
    def recollision_free(self) -> bool:
        return len(set(self.centers)) == len(self.centers)


def count_histories(n_obstacles: int, m_max: int, no_recollision: bool = True) -> int:
    if no_recollision:
        return sum(math.perm(n_obstacles, m) for m in range(m_max + 1))
    return 1 + sum(n_obstacles * (n_obstacles - 1) ** (m - 1) for m in range(1, m_max + 1))


def enumerate_histories(n_obstacles: int, m_max: int, no_recollision: bool = True):
    """All histories with at most ``m_max`` centers, ordered by length then labels."""
    n = count_histories(n_obstacles, m_max, no_recollision)
    if n > MAX_HISTORIES:
        raise HistoryBlowup(f"{n} histories exceed the cap of {MAX_HISTORIES}")
    out = []
    for m in range(m_max + 1):
        if no_recollision:
            seqs = itertools.permutations(range(n_obstacles), m)
        else:
            seqs = (s for s in itertools.product(range(n_obstacles), repeat=m)
                    if all(a != b for a, b in zip(s, s[1:])))
        out.extend(CollisionHistory(s) for s in seqs)
    return out


class HistoryPropagator:
    """Joint split-step evolution of the hierarchies of a set of histories.

    Levels shared between histories (identical suffixes) are evolved once.
    Node keys are label tuples; the label -1 marks the free top level.
    """

    def __init__(self, box, obstacles: ObstacleConfig, spec: PotentialSpec, histories,
                 tail_tol: float = 1e-12):
        self.box = box
        self.histories = list(histories)
        labels = sorted({c for h in self.histories for c in h.centers})
        if labels and labels[-1] >= len(obstacles):
            raise IndexError("history refers to a missing obstacle")
        self.fields = {a: build_potential_field(box, obstacles.subset([a]), spec, tail_tol)
                       for a in labels}
        self.total = build_potential_field(box, obstacles, spec, tail_tol)
        nodes = set()
        for h in self.histories:
            key = (-1,) + h.centers
            nodes.update(key[k:] for k in range(len(key)))
        # deeper nodes first only matters for readability; updates are simultaneous
        self.nodes = sorted(nodes, key=lambda k: (len(k), k))
        self.index = {k: i for i, k in enumerate(self.nodes)}

    def vmax(self) -> float:
        mags = [np.max(np.abs(v)) for v in self.fields.values()]
        return float(max(mags + [np.max(np.abs(self.total))]))

    def _coupling(self, key, tau):
        """Row 0 of exp(-i tau M_key) on the grid, one array per suffix of ``key``."""
        r = len(key) - 1
        shape = self.box.shape
        zero = np.zeros(shape)
        diag = [zero if a < 0 else self.fields[a] for a in key]
        sup = [self.fields[a] for a in key[1:]]
        out = np.zeros((r + 1,) + shape, dtype=complex)
        mask = np.zeros(shape, dtype=bool)
        for v in diag + sup:
            mask |= v != 0
        out[0] = 1.0
        if r == 0:
            out[0] = np.exp(-1j * tau * diag[0])
            return out
        npts = int(mask.sum())
        if npts == 0:
            return out
        M = np.zeros((npts, r + 1, r + 1), dtype=complex)
        i = np.arange(r + 1)
        M[:, i, i] = np.stack([d[mask] for d in diag], axis=1)
        M[:, i[:-1], i[1:]] = np.stack([s[mask] for s in sup], axis=1)
        row = expm(-1j * tau * M)[:, 0, :]
        for k in range(r + 1):
            out[k][mask] = row[:, k]
        return out

    def run(self, psi0: WaveField, t: float, dt: float) -> dict:
        """psi_A(t) (position representation) for every history."""
        if t < 0:
            raise ValueError("t must be non-negative")
        steps = max(1, int(np.ceil(t / dt - 1e-9)))
        dt = t / steps
        if dt * self.vmax() > 0.1:
            raise ValueError(f"dt * max|V| = {dt * self.vmax():.3g} > 0.1")
        n = len(self.nodes)
        xi = np.zeros((n,) + self.box.shape, dtype=complex)
        u0 = psi0.to_position().amplitudes
        for k in self.nodes:
            if len(k) == 1:
                xi[self.index[k]] = u0
        sub = [[self.index[k[j:]] for j in range(len(k))] for k in self.nodes]
        half = [self._coupling(k, dt / 2) for k in self.nodes]
        full = [self._coupling(k, dt) for k in self.nodes]
        kin = np.exp(-0.5j * dt * self.box.k_squared())
        axes = tuple(range(1, self.box.dim + 1))

        def pot(xi, E):
            new = np.empty_like(xi)
            for i in range(n):
                acc = E[i][0] * xi[sub[i][0]]
                for j in range(1, len(sub[i])):
                    acc += E[i][j] * xi[sub[i][j]]
                new[i] = acc
            return new

        xi = pot(xi, half)
        for s in range(steps):
            xi = sfft.ifftn(sfft.fftn(xi, axes=axes) * kin, axes=axes)
            xi = pot(xi, full if s < steps - 1 else half)
        if not np.all(np.isfinite(xi)):
            raise FloatingPointError("non-finite hierarchy amplitudes")
        out = {}
        for h in self.histories:
            amp = xi[self.index[(-1,) + h.centers]]
            out[h] = WaveField(self.box, amp, "position", psi0.renorm, psi0.time + t)
        self.dt, self.steps = dt, steps
        return out


def _packet_speed(psi0: WaveField) -> float:
    mom = psi0.to_momentum()
    prob = np.abs(mom.amplitudes) ** 2
    prob = prob / prob.sum()
    ks = mom.box.k_coords()
    return float(np.sqrt(sum(np.sum(prob * k * k) for k in ks)))


def validated_dt(psi0: WaveField, obstacles, spec, dt=None) -> float:
    V = build_potential_field(psi0.box, obstacles, spec)
    fields = [build_potential_field(psi0.box, obstacles.subset([a]), spec) for a in range(len(obstacles))]
    vmax = max([np.max(np.abs(V))] + [np.max(np.abs(f)) for f in fields])
    if dt is None:
        dt = default_dt(np.array([vmax]), spec, _packet_speed(psi0))
    if dt * vmax > 0.1:
        raise ValueError(f"dt * max|V| = {dt * vmax:.3g} > 0.1")
    return float(dt)


def psi_A(t: float, history, obstacles: ObstacleConfig, psi0: WaveField, spec: PotentialSpec,
          eta: float | None = None, dt: float | None = None) -> WaveField:
    """Fully expanded wave function of one collision history, momentum representation.

    The time-domain hierarchy is exact for every eta > 0 (the alpha
    representation is an identity), so ``eta`` is only validated.
    """
    history = history if isinstance(history, CollisionHistory) else CollisionHistory(tuple(history))
    if len(history) > 3:
        raise ValueError("histories are limited to three centers")
    if eta is not None and not eta > 0:
        raise ValueError("eta must be positive")
    if len(history) == 0:
        steps = max(1, int(np.ceil(t / (dt or 0.1) - 1e-9)))
        return evolve_split_step(psi0, 0.0, t / steps, steps).to_momentum()
    dt = validated_dt(psi0, obstacles, spec, dt)
    prop = HistoryPropagator(psi0.box, obstacles, spec, [history])
    return prop.run(psi0, t, dt)[history].to_momentum()


@dataclass
class DuhamelReport:
    t: float
    m0: int
    residual: float
    exact_norm: float
    partial_norm: float
    order_norms: list               # ||psi_m^no-rec|| for m < m0
    n_histories: int
    dt: float
    steps: int
    meta: dict = field(default_factory=dict)


def duhamel_decomposition(t: float, m0: int, obstacles: ObstacleConfig, psi0: WaveField,
                          spec: PotentialSpec, dt: float | None = None) -> DuhamelReport:
    """Exact split-step evolution against the no-recollision sum over m < m0."""
    if m0 < 1:
        raise ValueError("m0 must be at least 1")
    n_obs = len(obstacles)
    histories = enumerate_histories(n_obs, m0 - 1)
    dt = validated_dt(psi0, obstacles, spec, dt)
    prop = HistoryPropagator(psi0.box, obstacles, spec, histories)
    waves = prop.run(psi0, t, dt)
    exact = evolve_split_step(psi0, prop.total, prop.dt, prop.steps).amplitudes
    cell = psi0.box.cell
    orders = [np.zeros(psi0.box.shape, dtype=complex) for _ in range(m0)]
    for h in histories:                      # fixed enumeration order: deterministic sums
        orders[len(h)] += waves[h].amplitudes
    partial = np.sum(orders, axis=0)
    l2 = lambda a: float(np.sqrt(np.sum(np.abs(a) ** 2) * cell))  # noqa: E731
    return DuhamelReport(t, m0, l2(exact - partial), l2(exact), l2(partial),
                         [l2(o) for o in orders], len(histories), prop.dt, prop.steps)


def duhamel_residual(t: float, m0: int, obstacles: ObstacleConfig, psi0: WaveField,
                     spec: PotentialSpec, dt: float | None = None) -> float:
    return duhamel_decomposition(t, m0, obstacles, psi0, spec, dt).residual
