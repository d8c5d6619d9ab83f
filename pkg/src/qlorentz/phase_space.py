"""Wigner and Husimi phase-space densities, macroscopic rescaling, weak tests.

Densities are normalised in Lebesgue phase-space measure dx dv, so the Wigner
function here is (2 pi)^(-d) times the textbook integral and integrates to
||psi||^2.  The Husimi function at scales (l1, l2) is the Wigner function
convolved with Gaussians of variance l1^2/2 (in x) and l2^2/2 (in v).  For
l1 * l2 >= 1 it equals the coherent-state density at scale 1/l2 followed by an
extra x-smoothing of variance (l1^2 - l2^-2)/2, which is how it is computed:
positivity is then manifest.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .io import read_table, write_table
from .schrodinger import WaveField


# --------------------------------------------------------------------------- Wigner
def wigner_lattice(box):
    """Momentum lattice on which the discrete Wigner function is exact."""
    m = np.arange(-box.n // 4, box.n // 4)
    return 2 * np.pi * m / box.side


def wigner_transform(psi: WaveField, v_axis=None, imag_tol=1e-10):
    """W(x, v) on the full x grid and the v lattice values in ``v_axis``.

    The z integral is restricted to the minimum-image window |z| < L/2 and
    done by FFT over the half-offset y = z/2 for every x.  Returns
    (W, v_axis) with W shaped (n,)*d + (len(v_axis),)*d.
    """
    box = psi.box
    d, n = box.dim, box.n
    lattice = wigner_lattice(box)
    if v_axis is None:
        v_axis = lattice
    v_axis = np.asarray(v_axis, dtype=float)
    if np.max(np.abs(v_axis)) > np.pi / (2 * box.spacing) + 1e-12:
        raise ValueError("v grid exceeds the Wigner Nyquist momentum pi / (2h)")
    sel = np.rint((v_axis - lattice[0]) / (2 * np.pi / box.side)).astype(int)
    if np.any(np.abs(lattice[np.clip(sel, 0, lattice.size - 1)] - v_axis) > 1e-9) or \
            np.any(sel < 0) or np.any(sel >= lattice.size):
        raise ValueError("v grid must lie on the lattice 2 pi m / L, |m| < n/4")
    u = psi.to_position().amplitudes
    # symmetric offsets -n/4..n/4; both ends carry weight 1/2 and alias to one DFT bin
    ys = np.arange(-n // 4, n // 4 + 1)
    edge = np.ones(ys.size)
    edge[[0, -1]] = 0.5
    # phase factor e^{2 i v y h} with v = 2 pi m / L, y h: DFT over y of length n/2
    idx = np.indices((n,) * d).reshape(d, -1).T
    out = np.empty((n**d,) + (v_axis.size,) * d)
    yy = np.stack(np.meshgrid(*([ys] * d), indexing="ij"), -1).reshape(-1, d)
    const = (2 * np.pi) ** (-d) * 2**d * box.cell
    chunk = max(1, 2_000_000 // yy.shape[0])
    for s in range(0, idx.shape[0], chunk):
        xi = idx[s:s + chunk]
        plus = tuple(np.mod(xi[:, None, k] + yy[None, :, k], n) for k in range(d))
        minus = tuple(np.mod(xi[:, None, k] - yy[None, :, k], n) for k in range(d))
        prod = np.conj(u[plus]) * u[minus]
        prod = prod.reshape((-1,) + (ys.size,) * d)
        for k in range(d):
            shape = [1] * (d + 1)
            shape[k + 1] = ys.size
            prod = prod * edge.reshape(shape)
            first = [slice(None)] * (d + 1)
            first[k + 1] = 0
            prod[tuple(first)] += np.take(prod, -1, axis=k + 1)
            prod = np.delete(prod, -1, axis=k + 1)
        # sum_y prod(y) e^{2 i v y h}: inverse DFT of length n/2 per axis
        spec = sfft.ifftn(np.fft.ifftshift(prod, axes=tuple(range(1, d + 1))),
                          axes=tuple(range(1, d + 1))) * (n // 2) ** d
        spec = np.fft.fftshift(spec, axes=tuple(range(1, d + 1)))
        vals = spec[(slice(None),) + np.ix_(*([sel] * d))] * const
        if np.max(np.abs(vals.imag)) > imag_tol * max(np.max(np.abs(vals.real)), 1e-300):
            raise ValueError("Wigner transform has a non-negligible imaginary part")
        out[s:s + chunk] = vals.real
    return out.reshape((n,) * d + (v_axis.size,) * d), v_axis


# --------------------------------------------------------------------------- density type
@dataclass
class PhaseSpaceDensity:
    X_axes: list                   # one 1D axis per dimension (uniform)
    V_axes: list
    values: np.ndarray             # shape (nX,)*d + (nV,)*d
    scale_meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.X_axes)

    def cell(self) -> float:
        dx = np.prod([a[1] - a[0] if a.size > 1 else 1.0 for a in self.X_axes])
        dv = np.prod([a[1] - a[0] if a.size > 1 else 1.0 for a in self.V_axes])
        return float(dx * dv)

    def mass(self) -> float:
        return float(np.sum(self.values) * self.cell())

    def min(self) -> float:
        return float(np.min(self.values))

    def marginal_V(self):
        d = self.dim
        dx = np.prod([a[1] - a[0] for a in self.X_axes])
        return self.values.sum(axis=tuple(range(d))) * dx

    def marginal_X(self):
        d = self.dim
        dv = np.prod([a[1] - a[0] for a in self.V_axes])
        return self.values.sum(axis=tuple(range(d, 2 * d))) * dv

    def mean(self):
        """(<X>, <V>)."""
        d = self.dim
        m = self.mass()
        mx = self.marginal_X()
        mv = self.marginal_V()
        cx = [a[1] - a[0] for a in self.X_axes]
        cv = [a[1] - a[0] for a in self.V_axes]
        gx = np.meshgrid(*self.X_axes, indexing="ij")
        gv = np.meshgrid(*self.V_axes, indexing="ij")
        X = np.array([np.sum(g * mx) * np.prod(cx) for g in gx]) / m
        V = np.array([np.sum(g * mv) * np.prod(cv) for g in gv]) / m
        return X, V


def write_density(density: PhaseSpaceDensity, path):
    meta = {"dim": density.dim, "X_axes": [a.tolist() for a in density.X_axes],
            "V_axes": [a.tolist() for a in density.V_axes],
            "shape": list(density.values.shape), "scale_meta": density.scale_meta}
    return write_table(path, "phase_space_density", meta, ["value"],
                       density.values.reshape(-1, 1))


def read_density(path) -> PhaseSpaceDensity:
    meta, _, rows = read_table(path, "phase_space_density")
    return PhaseSpaceDensity([np.asarray(a) for a in meta["X_axes"]],
                             [np.asarray(a) for a in meta["V_axes"]],
                             rows[:, 0].reshape(meta["shape"]), meta["scale_meta"])


# --------------------------------------------------------------------------- Husimi
def _fold(coeffs_idx, values, size, d):
    """Scatter-add mode values into an array of length ``size`` per axis (periodic fold)."""
    arr = np.zeros((size,) * d, dtype=complex)
    np.add.at(arr, tuple(np.mod(i, size) for i in coeffs_idx), values)
    return arr


def default_x_stride(box, ell1: float) -> int:
    """Largest power-of-two subsampling keeping >= 3 position points per ell1 width."""
    h, n = box.spacing, box.n
    target = max(ell1 / 3, h)
    stride = 1
    while stride * 2 * h <= target and n % (stride * 2) == 0:
        stride *= 2
    return stride


def husimi_nbytes(box, ell1: float, ell2: float, v_lo: float, v_hi: float) -> int:
    """Size of the float64 array ``husimi`` returns for momenta in [v_lo, v_hi] per axis."""
    nc = box.n // default_x_stride(box, ell1)
    dv = ell2 / 3
    nv = int(np.ceil((v_hi + 6 * ell2) / dv) - np.floor((v_lo - 6 * ell2) / dv)) + 1
    return 8 * nc**box.dim * nv**box.dim


def husimi(psi: WaveField, ell1: float, ell2: float, v_axis=None, x_stride: int | None = None,
           window: float = 9.0) -> PhaseSpaceDensity:
    """Husimi density at scales (ell1, ell2) on a coarse (x, v) grid.

    ``v_axis`` is a 1D momentum axis used along every dimension (default: three
    points per ell2 smoothing width over the occupied momentum range);
    ``x_stride`` subsamples the position grid (default: >= 3 points per ell1
    width).  Requires ell1 * ell2 >= 1, where the result is a probability density.
    """
    box = psi.box
    d, n, h = box.dim, box.n, box.spacing
    if ell1 < 2 * h:
        raise ValueError(f"ell1 = {ell1:g} below two grid spacings")
    if ell2 < 2 * box.dk:
        raise ValueError(f"ell2 = {ell2:g} below two momentum spacings")
    if ell1 * ell2 < 1 - 1e-12:
        raise ValueError("ell1 * ell2 < 1: below the coherent scale the Husimi function "
                         "need not be a density")
    ell0 = 1.0 / ell2                       # coherent-state scale
    extra_var = 0.5 * (ell1**2 - ell0**2)   # remaining x smoothing
    mom = psi.to_position()
    k = box.k_axis()
    a = sfft.fftn(mom.amplitudes) / n**d
    a = a * np.exp(-1j * sum(kk * box.axis()[0] for kk in box.k_coords()))
    if v_axis is None:
        # occupied range: drop at most 1e-10 of the mass in each tail of every marginal
        dens = np.abs(a) ** 2
        order = np.argsort(k)
        lo, hi = np.inf, -np.inf
        for ax in range(d):
            marg = dens.sum(axis=tuple(j for j in range(d) if j != ax))[order]
            cdf = np.cumsum(marg) / marg.sum()
            lo = min(lo, k[order][np.searchsorted(cdf, 1e-10)])
            hi = max(hi, k[order][min(np.searchsorted(cdf, 1 - 1e-10), n - 1)])
        lo, hi = lo - 6 * ell2, hi + 6 * ell2
        dv = ell2 / 3
        v_axis = np.arange(np.floor(lo / dv), np.ceil(hi / dv) + 1) * dv
    v_axis = np.asarray(v_axis, dtype=float)
    if x_stride is None:
        x_stride = default_x_stride(box, ell1)
    nc = n // x_stride
    # |c|^2 has spectrum ~ exp(-ell0^2 q^2 / 4) inside twice the coherent window; the x smoothing
    # then removes q > q_smooth, so content folded back above q_smooth is harmless
    q_content = min(2 * window, 2 * np.sqrt(37.0)) / ell0
    q_smooth = np.sqrt(2 * 37.0 / extra_var) if extra_var > 0 else np.inf
    band = 0.5 * (q_content + min(q_smooth, q_content))
    ni = nc
    while np.pi / (box.side / ni) < band and ni < n:
        ni *= 2
    q_i = 2 * np.pi * sfft.fftfreq(ni, box.side / ni)
    smooth_i = np.exp(-0.5 * extra_var * sum(q * q for q in np.meshgrid(*([q_i] * d), indexing="ij",
                                                                       sparse=True)))
    m_all = np.rint(k / box.dk).astype(int)
    pref = (4 * np.pi * ell0**2) ** (d / 4) * (2 * np.pi) ** (-d / 2)
    out = np.empty((nc,) * d + (v_axis.size,) * d)
    vgrid = np.stack(np.meshgrid(*([v_axis] * d), indexing="ij"), -1).reshape(-1, d)
    x0 = box.axis()[0]
    for iv, v in enumerate(vgrid):
        # modes inside the coherent window around v
        sel = [np.nonzero(np.abs(k - v[j]) < window / ell0)[0] for j in range(d)]
        if any(s.size == 0 for s in sel):
            out.reshape((nc,) * d + (-1,))[(Ellipsis, iv)] = 0.0
            continue
        sub = a[np.ix_(*sel)]
        env = pref * np.exp(-0.5 * ell0**2 * sum(
            (g - vj) ** 2 for g, vj in zip(np.meshgrid(*[k[s] for s in sel], indexing="ij", sparse=True), v)))
        vals = sub * env
        midx = np.meshgrid(*[m_all[s] for s in sel], indexing="ij")
        # coefficient of e^{i k x} with x on the intermediate grid starting at x0
        phase = np.exp(1j * x0 * sum(mi * box.dk for mi in midx))
        c = sfft.ifftn(_fold(midx, vals * phase, ni, d)) * ni**d
        hc = np.abs(c) ** 2
        hs = sfft.ifftn(sfft.fftn(hc) * smooth_i).real
        step = ni // nc
        out.reshape((nc,) * d + (-1,))[(Ellipsis, iv)] = hs[tuple([slice(None, None, step)] * d)]
    x_axis = box.axis()[::x_stride]
    meta = {"ell1": float(ell1), "ell2": float(ell2), "epsilon": None, "mu": None,
            "frame": "microscopic"}
    return PhaseSpaceDensity([x_axis] * d, [v_axis] * d, out, meta)


def husimi_scales(epsilon: float, mu: float):
    """(ell1, ell2) = (eps^{-1+mu}, eps^mu)."""
    return epsilon ** (-1 + mu), epsilon**mu


def rescale_macroscopic(H: PhaseSpaceDensity, epsilon: float, mu: float) -> PhaseSpaceDensity:
    """X = eps x with the eps^{-d} Jacobian; V unchanged."""
    meta = H.scale_meta
    if meta.get("frame") != "microscopic":
        raise ValueError("density is not in microscopic coordinates")
    l1, l2 = husimi_scales(epsilon, mu)
    if not (np.isclose(meta.get("ell1"), l1, rtol=1e-9) and np.isclose(meta.get("ell2"), l2, rtol=1e-9)):
        raise ValueError(f"density scales ({meta.get('ell1')}, {meta.get('ell2')}) do not match "
                         f"eps={epsilon}, mu={mu}: expected ({l1}, {l2})")
    d = H.dim
    new = dict(meta, epsilon=float(epsilon), mu=float(mu), frame="macroscopic")
    return PhaseSpaceDensity([epsilon * x for x in H.X_axes], list(H.V_axes),
                             H.values * epsilon ** (-d), new)


# --------------------------------------------------------------------------- test functions
@dataclass(frozen=True)
class TestFunction:
    """Smooth bounded J(X, V) from a small library.

    kinds:
      ``one``        J = 1
      ``gaussian``   exp(-|X-x0|^2/(2 sx^2) - |V-v0|^2/(2 sv^2))
      ``cos_gauss``  cos(kx.X + kv.V + phase) * gaussian window
      ``x_gauss``    (e.X) * gaussian window / sx  (windowed linear polynomial)
    """

    kind: str
    params: tuple = ()

    __test__ = False   # keep pytest from collecting the class

    @classmethod
    def make(cls, kind, **kw):
        return cls(kind, tuple(sorted((k, tuple(np.atleast_1d(v).tolist()) if np.ndim(v) else v)
                                      for k, v in kw.items())))

    @property
    def p(self) -> dict:
        return {k: (np.asarray(v, dtype=float) if isinstance(v, tuple) else v) for k, v in self.params}

    @property
    def id(self) -> str:
        return self.kind + json.dumps(self.p, default=lambda a: np.asarray(a).tolist(), sort_keys=True)

    def _window(self, X, V):
        p = self.p
        x0, v0 = p.get("x0", 0.0), p.get("v0", 0.0)
        sx, sv = p.get("sx", np.inf), p.get("sv", np.inf)
        return np.exp(-np.sum((X - x0) ** 2, axis=-1) / (2 * sx**2)
                      - np.sum((V - v0) ** 2, axis=-1) / (2 * sv**2))

    def __call__(self, X, V):
        """X, V arrays with trailing axis d (broadcastable)."""
        X = np.asarray(X, dtype=float)
        V = np.asarray(V, dtype=float)
        p = self.p
        if self.kind == "one":
            return np.ones(np.broadcast_shapes(X.shape[:-1], V.shape[:-1]))
        w = self._window(X, V)
        if self.kind == "gaussian":
            return w
        if self.kind == "cos_gauss":
            arg = np.sum(X * p.get("kx", 0.0), axis=-1) + np.sum(V * p.get("kv", 0.0), axis=-1)
            return np.cos(arg + p.get("phase", 0.0)) * w
        if self.kind == "x_gauss":
            return np.sum((X - p.get("x0", 0.0)) * p["e"], axis=-1) / p["sx"] * w
        raise ValueError(f"unknown test function {self.kind!r}")

    def bounds(self):
        """(sup |J|, sup |grad J|) upper bounds."""
        p = self.p
        if self.kind == "one":
            return 1.0, 0.0
        g = 1.0 / min(p.get("sx", np.inf), p.get("sv", np.inf))
        if self.kind == "cos_gauss":
            g += float(np.linalg.norm(p.get("kx", 0.0)) + np.linalg.norm(p.get("kv", 0.0)))
        if self.kind == "x_gauss":
            return float(np.exp(-0.5)), 2 * g
        return 1.0, g

    def gaussian_average(self, mean, var: float, V):
        """E J(X, V) for X ~ N(mean, var I) (closed form); ``mean``: (..., d), ``V``: (..., d)."""
        mean = np.asarray(mean, dtype=float)
        V = np.asarray(V, dtype=float)
        d = mean.shape[-1]
        p = self.p
        if self.kind == "one":
            return np.ones(np.broadcast_shapes(mean.shape[:-1], V.shape[:-1]))
        sx2 = p.get("sx", np.inf) ** 2
        x0 = p.get("x0", 0.0)
        sv, v0 = p.get("sv", np.inf), p.get("v0", 0.0)
        vfac = np.exp(-np.sum((V - v0) ** 2, axis=-1) / (2 * sv**2))
        # int N(x; m, var) exp(-(x-x0)^2/(2 sx2) + i kx.x) dx, per axis
        s = var + sx2 if np.isfinite(sx2) else np.inf
        if self.kind in ("gaussian", "cos_gauss"):
            kx = p.get("kx", 0.0) * np.ones(d) if self.kind == "cos_gauss" else np.zeros(d)
            if np.isfinite(sx2):
                c = (sx2 / s) ** (d / 2)
                mu_post = (mean * sx2 + x0 * var) / s
                var_post = var * sx2 / s
                base = c * np.exp(-np.sum((mean - x0) ** 2, axis=-1) / (2 * s))
            else:
                mu_post, var_post, base = mean, var, 1.0
            if self.kind == "gaussian":
                return base * vfac
            kv = p.get("kv", 0.0) * np.ones(d)
            osc = np.exp(1j * (np.sum(kx * mu_post, axis=-1) + np.sum(kv * V, axis=-1)
                               + p.get("phase", 0.0)) - 0.5 * var_post * np.sum(kx * kx))
            return base * vfac * osc.real
        if self.kind == "x_gauss":
            c = (sx2 / s) ** (d / 2)
            mu_post = (mean * sx2 + x0 * var) / s
            base = c * np.exp(-np.sum((mean - x0) ** 2, axis=-1) / (2 * s))
            return base * vfac * np.sum((mu_post - x0) * p["e"], axis=-1) / np.sqrt(sx2)
        raise ValueError(f"unknown test function {self.kind!r}")


def default_suite(dim: int, u0, sigma: float = 1.0):
    """Three test functions probing position, velocity direction and phase-space structure."""
    u0 = np.asarray(u0, dtype=float)
    spd = float(np.linalg.norm(u0))
    e = np.zeros(dim)
    e[0] = 1.0
    return [
        TestFunction.make("gaussian", x0=np.zeros(dim), sx=2.0 * sigma, v0=u0, sv=0.8 * spd),
        TestFunction.make("cos_gauss", kx=0.5 * e / sigma, kv=np.zeros(dim), x0=np.zeros(dim),
                          sx=3.0 * sigma, v0=np.zeros(dim), sv=3.0 * spd),
        TestFunction.make("x_gauss", e=e, x0=np.zeros(dim), sx=2.0 * sigma, v0=u0, sv=1.5 * spd),
    ]


def weak_test(density: PhaseSpaceDensity, J: TestFunction) -> float:
    """Grid quadrature of J * density."""
    d = density.dim
    X = np.stack(np.meshgrid(*density.X_axes, indexing="ij"), -1)
    V = np.stack(np.meshgrid(*density.V_axes, indexing="ij"), -1)
    Vb = V.reshape((1,) * (d - 1) + V.shape)
    total = 0.0
    for i in range(X.shape[0]):      # one slab of the first X axis at a time
        Xb = X[i].reshape(X.shape[1:-1] + (1,) * d + (d,))
        total += float(np.sum(J(Xb, Vb) * density.values[i]))
    return total * density.cell()
