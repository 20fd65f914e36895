"""Free resolvent kernels, spectral-shell operators and weighted norms.

The kernel G0(x; z) = int_{T^d} e^{2 pi i x.xi} / (h0(xi) - z) dxi is
computed by one of two routes.

``fft``
    Inverse FFT of 1/(h0 - z) sampled on a TorusGrid.  This is a
    periodisation of the true kernel, accurate once N resolves the peak of
    the integrand (see :func:`minimal_grid_size`).
``bessel``
    The time representation on the infinite lattice.  The 1D heat and
    Schroedinger kernels are modified and ordinary Bessel functions, so

        Re z < 0 :  G0(x; z) = int_0^inf e^{tz} prod_j e^{-2t} I_{x_j}(2t) dt
        Im z > 0 :  G0(x; z) = i int_0^inf e^{it(z-2d)} prod_j i^{|x_j|} J_{|x_j|}(2t) dt

    with Gauss-Legendre panels.  Its cost does not depend on how close z
    is to the spectrum through N^d, which is what makes d = 3 sweeps
    down to Im z = 1e-3 feasible.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import special

from ._linalg import operator_norm
from .lattice_core import (
    ComplexEnergy,
    LatticeBox,
    TorusGrid,
    symbol_eval,
    symbol_gradient,
    threshold_energies,
)

FFT_BYTES_LIMIT = 256 * 1024**2
DEFAULT_C_RES = 32.0


IVE_ASYMPTOTIC = 1e8


class ResolutionError(ValueError):
    """The torus grid is too coarse for the requested spectral parameter."""

    def __init__(self, message, minimal_N):
        super().__init__(f"{message}; minimal admissible N = {minimal_N}")
        self.minimal_N = minimal_N


class OnSpectrumError(ValueError):
    """z lies on [0, 4d], where the resolvent is not defined."""


def _as_energy(z):
    return z if isinstance(z, ComplexEnergy) else ComplexEnergy.from_complex(z)


def _next_pow2(x):
    return 1 << max(0, math.ceil(math.log2(max(x, 1.0))))


def minimal_grid_size(z, d, c_res=DEFAULT_C_RES):
    """Smallest power-of-two N allowed by the resolution rule.

    Near an elliptic threshold (and off the spectrum) the integrand peak
    has width ~ sqrt(delta), delta = dist(z, [0, 4d]), so N >= c/sqrt(delta).
    Inside the band the peak sits on a level surface of width ~ |Im z|, so
    N >= c/|Im z|.
    """
    z = _as_energy(z)
    delta = z.dist_to_spectrum(d)
    if delta == 0:
        raise OnSpectrumError(f"z = {z.z} lies on the spectrum [0, {4 * d}]")
    near_edge = min(z.mu, 4 * d - z.mu) <= abs(z.eps)
    need = c_res / math.sqrt(delta) if near_edge else c_res / abs(z.eps)
    return max(16, _next_pow2(need))


@dataclass(frozen=True)
class ResolventKernel:
    """Values of G0(x; z) on a box, with an error estimate.

    ``values`` has shape ``box.shape`` and is indexed by x + R.
    """

    box: LatticeBox
    z: ComplexEnergy
    values: np.ndarray = field(repr=False)
    error: float
    method: str
    grid: TorusGrid | None = None

    @property
    def d(self):
        return self.box.d

    def at(self, x):
        x = np.atleast_1d(x)
        return complex(self.values[tuple(int(c) + self.box.R for c in x)])

    def restrict(self, R):
        """Kernel on the smaller box of radius R."""
        if R > self.box.R:
            raise ValueError("cannot enlarge a kernel")
        c = self.box.R
        sl = (slice(c - R, c + R + 1),) * self.d
        return ResolventKernel(LatticeBox(self.d, R), self.z, self.values[sl],
                               self.error, self.method, self.grid)

    def write_csv(self, path):
        """CSV rows (x1..xd, re, im, err)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{j + 1}" for j in range(self.d)] + ["re", "im", "err"])
            for site, v in zip(self.box.sites(), self.values.ravel()):
                w.writerow([*map(int, site), repr(float(v.real)), repr(float(v.imag)),
                            repr(float(self.error))])


def _fft_values(d, R, z, N):
    grid = TorusGrid(d, N)
    g = sfft.ifftn(1.0 / (grid.symbol() - z))
    idx = np.arange(-R, R + 1) % N
    return g[np.ix_(*([idx] * d))]


def fft_kernel(box, z, grid, c_res=DEFAULT_C_RES):
    """Kernel by inverse FFT of 1/(h0 - z) on ``grid``.

    The error estimate is the largest change on the box when the grid is
    halved (zero when halving would leave the admissible range).
    """
    z = _as_energy(z)
    nmin = minimal_grid_size(z, box.d, c_res)
    if grid.N < nmin:
        raise ResolutionError(f"N = {grid.N} too coarse for Im z = {z.eps}", nmin)
    if grid.N < box.side:
        raise ResolutionError(f"N = {grid.N} smaller than the box side {box.side}",
                              _next_pow2(box.side))
    vals = _fft_values(box.d, box.R, z.z, grid.N)
    err = 0.0
    half = grid.N // 2
    if half >= 16 and half >= box.side:
        err = float(np.max(np.abs(vals - _fft_values(box.d, box.R, z.z, half))))
    return ResolventKernel(box, z, vals, err, "fft", grid)


def _gauss_panels(a, b, length, order):
    """Composite Gauss-Legendre nodes and weights on [a, b]."""
    npan = max(1, math.ceil((b - a) / length))
    edges = np.linspace(a, b, npan + 1)
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _bessel_j_table(nmax, t):
    """J_n(2t) for n = 0..nmax, shape (len(t), nmax+1).

    Upward recurrence is stable for n < 2t; the small-argument nodes use
    scipy's jv directly.
    """
    x = 2.0 * np.asarray(t, dtype=float)
    out = np.empty((x.size, nmax + 1))
    big = x > nmax + 10
    small = ~big
    if np.any(small):
        out[small] = special.jv(np.arange(nmax + 1)[None, :], x[small, None])
    if np.any(big):
        xb = x[big]
        tab = np.empty((xb.size, nmax + 1))
        tab[:, 0] = special.j0(xb)
        if nmax >= 1:
            tab[:, 1] = special.j1(xb)
        for n in range(1, nmax):
            tab[:, n + 1] = (2.0 * n / xb) * tab[:, n] - tab[:, n - 1]
        out[big] = tab
    return out


def _sorted_tuples(nmax, k):
    if k == 0:
        return np.zeros((1, 0), dtype=int)
    return np.array(list(itertools.combinations_with_replacement(range(nmax + 1), k)),
                    dtype=int)


def _tuple_lookup(tuples, nmax):
    k = tuples.shape[1]
    if k == 0:
        return None
    table = -np.ones((nmax + 1,) * k, dtype=np.int64)
    table[tuple(tuples.T)] = np.arange(len(tuples))
    return table


def _normalise(zc, d):
    """Map z to the representation used for the time integral.

    Returns (zn, kind, reflect, conj).  Re z > 2d is reflected through
    G(x; z) = -(-1)^{|x|} G(x; 4d - z), and Im z < 0 is conjugated.
    """
    reflect = zc.real > 2 * d
    if reflect:
        zc = 4 * d - zc
    conj = zc.imag < 0
    if conj:
        zc = zc.conjugate()
    decay = -zc.real
    if decay > 0 and decay >= abs(zc.imag):
        return zc, "laplace", reflect, conj
    if zc.imag <= 0:
        raise OnSpectrumError(f"z = {zc} lies on the spectrum [0, {4 * d}]")
    return zc, "oscillatory", reflect, conj


def _laplace_nodes(zn, tol, order=24):
    t_max = (math.log(1.0 / tol) + 10.0) / (-zn.real)
    u, wu = _gauss_panels(math.log(tol * 1e-3), math.log(t_max), 0.5, order)
    t = np.exp(u)
    return t, wu * t


def _oscillatory_nodes(eps, d, tol, omega, extra=24):
    # Tail beyond T is bounded by e^{-eps T} T^{-d/2} / eps.
    T = 10.0
    for _ in range(60):
        T_new = max((math.log(1.0 / (tol * eps)) - 0.5 * d * math.log(T)) / eps, 10.0)
        if abs(T_new - T) < 1e-3 * T:
            T = T_new
            break
        T = T_new
    length = 8.0
    order = int(math.ceil(omega * length / 2 + extra))
    return _gauss_panels(0.0, T, length, order)


def _amplitudes(kind, zn, t, w, d):
    if kind == "laplace":
        return w * np.exp(t * zn)
    return 1j * w * np.exp(1j * t * (zn - 2 * d))


def _ive_table(nmax, x):
    n = np.arange(nmax + 1)[None, :]
    x = x[:, None]
    big = x[:, 0] > IVE_ASYMPTOTIC
    out = np.empty((len(x), nmax + 1))
    out[~big] = special.ive(n, x[~big])
    if big.any():
        # scipy returns nan for very large arguments; three terms of the
        # Hankel expansion are exact to double precision there.
        xb = x[big]
        m = 4.0 * n * n
        out[big] = (1.0 - (m - 1) / (8 * xb) + (m - 1) * (m - 9) / (2 * (8 * xb) ** 2)
                    ) / np.sqrt(2 * np.pi * xb)
    return out


def _factor_table(kind, nmax, t):
    if kind == "laplace":
        return _ive_table(nmax, 2.0 * t)
    return _bessel_j_table(nmax, t)


def _time_integral(d, nmax, kind, t, amps, chunk=2048):
    """Sum over time nodes for every sorted |x| tuple, split in two halves.

    ``amps`` has shape (len(t), m), one column per spectral parameter.
    Returns (tables, left_lookup, right_lookup) where tables[k][i, j] is
    the value for the multiset (left tuple i) + (right tuple j).
    """
    dl = (d + 1) // 2
    dr = d - dl
    left = _sorted_tuples(nmax, dl)
    right = _sorted_tuples(nmax, dr)
    m = amps.shape[1]
    nr = len(right)
    acc = np.zeros((len(left), 2 * m * nr))
    for s in range(0, t.size, chunk):
        ts = t[s:s + chunk]
        a = amps[s:s + chunk]
        f = _factor_table(kind, nmax, ts)
        L = np.ones((ts.size, len(left)))
        for j in range(dl):
            L *= f[:, left[:, j]]
        Rm = np.ones((ts.size, nr))
        for j in range(dr):
            Rm *= f[:, right[:, j]]
        cols = []
        for k in range(m):
            cols.append(a[:, k].real[:, None] * Rm)
            cols.append(a[:, k].imag[:, None] * Rm)
        acc += L.T @ np.concatenate(cols, axis=1)
    tables = [acc[:, 2 * k * nr:(2 * k + 1) * nr] + 1j * acc[:, (2 * k + 1) * nr:(2 * k + 2) * nr]
              for k in range(m)]
    return tables, _tuple_lookup(left, nmax), _tuple_lookup(right, nmax)


def _assemble(box, table, lk, rk, phase_kind, reflect, conj):
    d = box.d
    dl = (d + 1) // 2
    coords = np.abs(box.sites())
    srt = np.sort(coords, axis=1)
    li = lk[tuple(srt[:, :dl].T)]
    ri = rk[tuple(srt[:, dl:].T)] if d - dl > 0 else np.zeros(len(srt), dtype=np.int64)
    vals = table[li, ri]
    l1 = coords.sum(axis=1)
    if phase_kind == "oscillatory":
        vals = vals * (1j ** (l1 % 4))
    if conj:
        vals = vals.conj()
    if reflect:
        vals = -np.where(l1 % 2 == 0, 1.0, -1.0) * vals
    return vals.reshape(box.shape)


def _origin_value(kind, zn, t, w, d, reflect, conj):
    f = _factor_table(kind, 0, t)[:, 0] ** d
    val = complex(np.sum(_amplitudes(kind, zn, t, w, d) * f))
    if conj:
        val = val.conjugate()
    if reflect:
        val = -val
    return val


def bessel_kernels(box, energies, tol=1e-10):
    """Infinite-lattice kernels on ``box`` for several spectral parameters.

    Oscillatory-form energies with a common Im z share their Bessel tables,
    so a list of mu values at one Im z costs little more than one value.
    The error estimate compares the origin value with a rule using every
    lower-order rule.
    """
    d = box.d
    energies = [_as_energy(z) for z in energies]
    norm = [_normalise(z.z, d) for z in energies]
    groups = {}
    for i, (zn, kind, _, _) in enumerate(norm):
        key = ("osc", zn.imag) if kind == "oscillatory" else ("lap", i)
        groups.setdefault(key, []).append(i)
    out = [None] * len(energies)
    for key, idx in groups.items():
        kind = norm[idx[0]][1]
        if kind == "laplace":
            t, w = _laplace_nodes(norm[idx[0]][0], tol)
            tc, wc = _laplace_nodes(norm[idx[0]][0], tol, order=16)
        else:
            omega = max(abs(norm[i][0].real - 2 * d) + 2 * d for i in idx)
            t, w = _oscillatory_nodes(key[1], d, tol, omega)
            tc, wc = _oscillatory_nodes(key[1], d, tol, omega, extra=16)
        amps = np.stack([_amplitudes(kind, norm[i][0], t, w, d) for i in idx], axis=1)
        tables, lk, rk = _time_integral(d, box.R, kind, t, amps)
        for i, table in zip(idx, tables):
            zn, _, reflect, conj = norm[i]
            vals = _assemble(box, table, lk, rk, kind, reflect, conj)
            coarse = _origin_value(kind, zn, tc, wc, d, reflect, conj)
            err = abs(coarse - vals[(box.R,) * d])
            out[i] = ResolventKernel(box, energies[i], vals, float(err), "bessel", None)
    return out


def bessel_kernel(box, z, tol=1e-10):
    """Single-energy form of :func:`bessel_kernels`."""
    return bessel_kernels(box, [z], tol)[0]


def free_kernel(box, z, grid=None, method="auto", c_res=DEFAULT_C_RES, tol=1e-10):
    """Free resolvent kernel G0(x; z) for x in ``box``.

    Parameters
    ----------
    box : LatticeBox
    z : ComplexEnergy or complex
    grid : TorusGrid, optional
        Forces the FFT route on this grid.
    method : {'auto', 'fft', 'bessel'}
        ``auto`` uses the FFT when the admissible grid fits in memory and
        the Bessel time integral otherwise.
    """
    z = _as_energy(z)
    d = box.d
    if z.on_spectrum(d):
        raise OnSpectrumError(f"z = {z.z} lies on the spectrum [0, {4 * d}]")
    if grid is not None:
        return fft_kernel(box, z, grid, c_res)
    if method == "auto":
        n = max(minimal_grid_size(z, d, c_res), _next_pow2(box.side))
        method = "fft" if 16 * n**d <= FFT_BYTES_LIMIT else "bessel"
    if method == "fft":
        n = max(minimal_grid_size(z, d, c_res), _next_pow2(box.side))
        return fft_kernel(box, z, TorusGrid(d, n), c_res)
    if method == "bessel":
        return bessel_kernel(box, z, tol)
    raise ValueError(f"unknown method {method!r}")


def free_kernels(box, energies, method="auto", c_res=DEFAULT_C_RES, tol=1e-10):
    """Kernels for many energies, batching the Bessel route."""
    energies = [_as_energy(z) for z in energies]
    out = [None] * len(energies)
    bessel_idx = []
    for i, z in enumerate(energies):
        m = method
        if m == "auto":
            n = max(minimal_grid_size(z, box.d, c_res), _next_pow2(box.side))
            m = "fft" if 16 * n**box.d <= FFT_BYTES_LIMIT else "bessel"
        if m == "bessel":
            bessel_idx.append(i)
        else:
            out[i] = free_kernel(box, z, method="fft", c_res=c_res)
    if bessel_idx:
        for i, k in zip(bessel_idx, bessel_kernels(box, [energies[i] for i in bessel_idx], tol)):
            out[i] = k
    return out


class KernelOperator:
    """Matrix-free u -> w_left * (G * (w_right * u)) on a box.

    The convolution with the kernel table on [-2R, 2R]^d is a linear one,
    done by zero padding to M >= 4R+1 points per axis.

    Parameters
    ----------
    box : LatticeBox
        Box carrying the operator.
    kernel : ResolventKernel or ndarray
        Kernel values on the box of radius 2R (or a difference of such).
    w_left, w_right : ndarray
        Real weights of shape ``box.shape``.
    """

    def __init__(self, box, kernel, w_left, w_right=None, workers=None, single=False):
        self.box = box
        vals = kernel.values if isinstance(kernel, ResolventKernel) else np.asarray(kernel)
        if vals.shape != (4 * box.R + 1,) * box.d:
            raise ValueError("kernel must live on the box of radius 2R")
        self.kernel_values = vals
        self.w_left = np.asarray(w_left, dtype=float).reshape(box.shape)
        self.w_right = self.w_left if w_right is None else np.asarray(
            w_right, dtype=float).reshape(box.shape)
        self.workers = workers
        self.ctype = np.complex64 if single else np.complex128
        self.M = sfft.next_fast_len(4 * box.R + 1)
        self._khat = None
        n = box.size
        self.shape = (n, n)
        self.dtype = np.dtype(complex)

    def _kernel_hat(self):
        if self._khat is None:
            d, R, M = self.box.d, self.box.R, self.M
            emb = np.zeros((M,) * d, dtype=complex)
            idx = np.arange(-2 * R, 2 * R + 1) % M
            emb[np.ix_(*([idx] * d))] = self.kernel_values
            self._khat = sfft.fftn(emb, workers=self.workers).astype(self.ctype)
        return self._khat

    def _convolve(self, u, khat):
        d, side, M = self.box.d, self.box.side, self.M
        pad = np.zeros((M,) * d, dtype=self.ctype)
        pad[(slice(0, side),) * d] = u.reshape(self.box.shape)
        out = sfft.ifftn(sfft.fftn(pad, workers=self.workers, overwrite_x=True) * khat,
                         workers=self.workers, overwrite_x=True)
        return out[(slice(0, side),) * d]

    def matvec(self, u):
        u = np.asarray(u).reshape(self.box.shape)
        y = self._convolve(self.w_right * u, self._kernel_hat())
        return (self.w_left * y).ravel().astype(complex)

    def rmatvec(self, v):
        # G is even, so the adjoint convolves with conj(G), whose transform
        # is conj(khat).
        v = np.asarray(v).reshape(self.box.shape)
        y = self._convolve(self.w_left * v, self._kernel_hat().conj())
        return (self.w_right * y).ravel().astype(complex)

    def dense(self):
        sites = self.box.sites()
        diff = sites[:, None, :] - sites[None, :, :] + 2 * self.box.R
        g = self.kernel_values[tuple(np.moveaxis(diff, -1, 0))]
        return self.w_left.ravel()[:, None] * g * self.w_right.ravel()[None, :]


def bracket_weight(box, s):
    """<x>^(-s) = (1 + |x|^2)^(-s/2) on the box."""
    return (1.0 + box.norm_array() ** 2) ** (-0.5 * s)


def weighted_resolvent_norm(alpha, beta, z, box, kernel=None, tol=1e-8, method="auto"):
    """Largest singular value of <x>^-alpha G0(x - y; z) <y>^-beta on ``box``.

    The weights are cut at the box edge, where they are of size
    <R>^-min(alpha, beta); that truncation is the caller's to control
    through R.
    """
    z = _as_energy(z)
    if kernel is None:
        kernel = free_kernel(LatticeBox(box.d, 2 * box.R), z, method=method)
    op = KernelOperator(box, kernel, bracket_weight(box, alpha), bracket_weight(box, beta))
    return operator_norm(op, tol=tol)


# ---------------------------------------------------------------------------
# Level surfaces {h0 = mu}


class GradientFloorError(ValueError):
    """A cutoff reaches the region where grad h0 vanishes."""


@dataclass(frozen=True)
class SurfaceSlice:
    """Quadrature for int_{h0 = mu} g dsigma / |grad h0|.

    ``weights`` is the fine rule on ``points``; ``coarse_weights`` is the
    nested rule with every other node, used for the error estimate.
    """

    mu: float
    d: int
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    coarse_weights: np.ndarray = field(repr=False)
    grad_norm: np.ndarray = field(repr=False)

    def integrate(self, values):
        """Return (integral, error estimate) for samples of g on the points."""
        values = np.asarray(values)
        fine = np.tensordot(self.weights, values, axes=(0, 0))
        coarse = np.tensordot(self.coarse_weights, values, axes=(0, 0))
        return fine, np.abs(fine - coarse)


def _graph_branches(mu, d, axis, prime):
    """Points on {h0 = mu} over the parameters ``prime`` (P, d-1).

    Solving 4 sin^2(pi xi_axis) = mu - sum_{j != axis} h1(xi_j) gives two
    branches xi_axis = f and 1 - f.
    """
    rest = 4.0 * np.sum(np.sin(np.pi * prime) ** 2, axis=1) if d > 1 else np.zeros(len(prime))
    c = (mu - rest) / 4.0
    ok = (c >= 0.0) & (c <= 1.0)
    f = np.arcsin(np.sqrt(np.clip(c, 0.0, 1.0))) / np.pi
    pts = []
    for branch in (f, 1.0 - f):
        p = np.empty((len(prime), d))
        cols = [j for j in range(d) if j != axis]
        p[:, cols] = prime
        p[:, axis] = branch
        pts.append(p)
    return pts, ok, f


def surface_slice(mu, d, n=256, axes=None, window=None, power=12):
    """Build the graph-patch quadrature of {h0 = mu}.

    Each patch is the graph xi_axis = f(xi') over a uniform grid in the
    other coordinates, with the induced measure
    dsigma = sqrt(1 + |grad f|^2) dxi'.  Patches are blended by the
    partition of unity |d_k h0|^power / sum_j |d_j h0|^power, which keeps
    the axis of largest |d_k h0| dominant while staying smooth.

    Parameters
    ----------
    mu : float
        Energy in (0, 4d).
    n : int
        Grid points per parameter axis (even).
    axes : sequence of int, optional
        Restrict to these graph axes (a single axis disables blending).
    window : (lo, hi), optional
        Parameter box [lo, hi]^{d-1}; the integrand must vanish at its edge.
    """
    if not 0.0 < mu < 4.0 * d:
        raise ValueError(f"mu must lie in (0, {4 * d})")
    if n % 2:
        raise ValueError("n must be even")
    if d == 1:
        x = math.asin(math.sqrt(mu / 4.0)) / math.pi
        pts = np.array([[x], [1.0 - x]])
        g = np.abs(symbol_gradient(pts)[:, 0])
        w = 1.0 / g
        return SurfaceSlice(mu, 1, pts, w, w.copy(), g)
    axes = list(range(d)) if axes is None else list(axes)
    if window is None:
        ax = np.arange(n) / n
        w1 = np.full(n, 1.0 / n)
        c1 = np.where(np.arange(n) % 2 == 0, 2.0 / n, 0.0)
    else:
        lo, hi = window
        ax = np.linspace(lo, hi, n + 1)
        h = (hi - lo) / n
        w1 = np.full(n + 1, h)
        w1[[0, -1]] *= 0.5
        c1 = np.where(np.arange(n + 1) % 2 == 0, 2 * h, 0.0)
        c1[[0, -1]] *= 0.5
    mesh = np.stack(np.meshgrid(*([ax] * (d - 1)), indexing="ij"), -1).reshape(-1, d - 1)
    wf = np.prod(np.stack(np.meshgrid(*([w1] * (d - 1)), indexing="ij"), -1).reshape(-1, d - 1), 1)
    wc = np.prod(np.stack(np.meshgrid(*([c1] * (d - 1)), indexing="ij"), -1).reshape(-1, d - 1), 1)
    all_pts, all_w, all_c, all_g = [], [], [], []
    for axis in axes:
        branches, ok, _ = _graph_branches(mu, d, axis, mesh)
        for p in branches:
            p = p[ok]
            grad = symbol_gradient(p)
            dk = np.abs(grad[:, axis])
            gnorm = np.linalg.norm(grad, axis=1)
            # Critical points (grad = 0) give 0/0 here; they are zeroed below.
            with np.errstate(divide="ignore", invalid="ignore"):
                if len(axes) > 1:
                    blend = dk**power / np.sum(np.abs(grad) ** power, axis=1)
                else:
                    blend = np.ones(len(p))
                grad_f_sq = np.sum(grad**2, axis=1) / dk**2 - 1.0
                dens = np.sqrt(1.0 + grad_f_sq) / gnorm
                dens = np.where(blend > 0, blend * dens, 0.0)
            dens = np.nan_to_num(dens, nan=0.0, posinf=0.0)
            all_pts.append(p)
            all_w.append(dens * wf[ok])
            all_c.append(dens * wc[ok])
            all_g.append(gnorm)
    return SurfaceSlice(mu, d, np.concatenate(all_pts), np.concatenate(all_w),
                        np.concatenate(all_c), np.concatenate(all_g))


def surface_integral(mu, g, d, n=256, axes=None, window=None, grad_floor=1e-3):
    """int_{h0 = mu} g(xi) dsigma(xi) / |grad h0(xi)| with an error estimate.

    ``g`` is a callable on point arrays of shape (P, d).  Nodes where g is
    non-negligible must keep |grad h0| above ``grad_floor``.
    """
    sl = surface_slice(mu, d, n, axes, window)
    vals = np.asarray(g(sl.points))
    active = np.abs(vals) > 1e-14 * max(1.0, float(np.max(np.abs(vals), initial=0.0)))
    if np.any(active & (sl.grad_norm < grad_floor)):
        raise GradientFloorError("cutoff violates grad h0 != 0")
    return sl.integrate(vals)


def _fourier_coefficients(f_sites, f_vals, points):
    """hat f(xi) = sum_y f(y) e^{-2 pi i y.xi} at the given points."""
    phase = np.exp(-2j * np.pi * (points @ np.asarray(f_sites, float).T))
    return phase @ np.asarray(f_vals, dtype=complex)


def delta_surface(mu, f, chi=None, out_box=None, d=None, n=256, axes=None, window=None,
                  cutoff_distance=1e-2, return_error=False):
    """Apply delta(H0 - mu) chi(D) to a finitely supported lattice function.

    (delta(H0 - mu) chi(D) f)(x) = int_{h0 = mu} chi(xi) hat f(xi)
    e^{2 pi i x.xi} dsigma(xi) / |grad h0(xi)|.

    Parameters
    ----------
    mu : float
    f : dict or Table-like or (sites, values)
        Finitely supported input.
    chi : callable, optional
        Cutoff on torus points (P, d); ``None`` means chi = 1, which is only
        admissible when mu keeps ``cutoff_distance`` from every critical value.
    out_box : LatticeBox
        Sites where the output is evaluated (default: radius 5).
    """
    sites, vals = _split_function(f)
    if d is None:
        d = sites.shape[1] if len(sites) else out_box.d
    out_box = LatticeBox(d, 5) if out_box is None else out_box
    if chi is None and any(abs(mu - e) < cutoff_distance for e in threshold_energies(d)):
        raise GradientFloorError("cutoff violates grad h0 != 0")
    if len(sites) == 0 or not np.any(np.asarray(vals) != 0):
        zero = np.zeros(out_box.shape, dtype=complex)
        return (zero, zero.real.copy()) if return_error else zero
    sl = surface_slice(mu, d, n, axes, window)
    amp = _fourier_coefficients(sites, vals, sl.points)
    if chi is not None:
        amp = amp * chi(sl.points)
    active = np.abs(amp) > 1e-14 * max(1.0, float(np.max(np.abs(amp))))
    if np.any(active & (sl.grad_norm < 1e-3)):
        raise GradientFloorError("cutoff violates grad h0 != 0")
    keep = active
    pts, af = sl.points[keep], amp[keep]
    xs = out_box.sites().astype(float)
    ex = np.exp(2j * np.pi * (xs @ pts.T))
    fine = ex @ (sl.weights[keep] * af)
    coarse = ex @ (sl.coarse_weights[keep] * af)
    fine = fine.reshape(out_box.shape)
    if return_error:
        return fine, np.abs(fine - coarse.reshape(out_box.shape))
    return fine


def _split_function(f):
    if hasattr(f, "entries"):
        items = [(s, v) for s, v in f.entries]
    elif isinstance(f, dict):
        items = list(f.items())
    else:
        sites, vals = f
        return np.atleast_2d(np.asarray(sites, int)), np.asarray(vals)
    if not items:
        return np.zeros((0, 0), int), np.zeros(0)
    return (np.array([s for s, _ in items], dtype=int), np.array([v for _, v in items]))


# ---------------------------------------------------------------------------
# Boundary values


@dataclass(frozen=True)
class HolderReport:
    """Differences of weighted resolvents along a decreasing eps ladder."""

    s: float
    mu: float
    d: int
    R: int
    eps_pairs: tuple
    M_values: tuple
    fitted_exponent: float
    trend: float
    classification: str
    hypothesis_met: bool

    def to_json(self):
        return {"s": self.s, "mu": self.mu, "d": self.d, "R": self.R,
                "eps_pairs": [list(p) for p in self.eps_pairs],
                "M_values": list(self.M_values),
                "fitted_exponent": self.fitted_exponent, "trend": self.trend,
                "classification": self.classification,
                "hypothesis_met": self.hypothesis_met}


def holder_difference_norm(s, mu, eps1, eps2, box, kernels=None, tol=1e-8):
    """||<x>^-s (R0(mu + i eps1) - R0(mu + i eps2)) <x>^-s|| on ``box``."""
    if eps1 == eps2:
        return 0.0
    if kernels is None:
        big = LatticeBox(box.d, 2 * box.R)
        kernels = free_kernels(big, [ComplexEnergy(mu, eps1), ComplexEnergy(mu, eps2)])
    diff = kernels[0].values - kernels[1].values
    w = bracket_weight(box, s)
    return operator_norm(KernelOperator(box, diff, w, w), tol=tol)


def _fit_slope(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid**2)))


def boundary_value_continuity(s, mu, eps_list, box, tol=1e-8, method="auto"):
    """Probe Hoelder continuity of mu + i eps -> <x>^-s R0 <x>^-s as eps -> 0.

    M_k is the weighted norm of R0(mu + i eps_k) - R0(mu + i eps_{k+1}).
    The fitted exponent is the slope of log M_k against log |eps_k -
    eps_{k+1}|; the trend is the slope of log M_k against log eps_{k+1}.
    The family is classified ``cauchy`` when M_k decreases monotonically
    with a positive exponent, ``divergent`` when M_k grows as eps -> 0,
    and ``inconclusive`` otherwise.
    """
    eps = [float(e) for e in eps_list]
    if len(eps) < 3:
        raise ValueError("need at least three eps values")
    if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_list must be positive and strictly decreasing")
    big = LatticeBox(box.d, 2 * box.R)
    kernels = free_kernels(big, [ComplexEnergy(mu, e) for e in eps], method=method)
    w = bracket_weight(box, s)
    M = []
    for k in range(len(eps) - 1):
        diff = kernels[k].values - kernels[k + 1].values
        M.append(float(operator_norm(KernelOperator(box, diff, w, w), tol=tol)))
    M = np.array(M)
    de = np.abs(np.diff(eps))
    expo, _, _ = _fit_slope(np.log(de), np.log(M))
    trend, _, _ = _fit_slope(np.log(np.array(eps[1:])), np.log(M))
    monotone = bool(np.all(np.diff(M) < 0))
    if monotone and expo > 0:
        label = "cauchy"
    elif trend < 0:
        label = "divergent"
    else:
        label = "inconclusive"
    return HolderReport(float(s), float(mu), box.d, box.R,
                        tuple((a, b) for a, b in zip(eps, eps[1:])), tuple(M.tolist()),
                        expo, trend, label, bool(s > 1))


def green_values(points, z, tol=1e-12):
    """G0(x; z) at a short list of lattice points, by the time integral.

    Cheaper than a full kernel table when only a few differences are
    needed (Birman-Schwinger matrices of finitely supported potentials).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=int))
    d = pts.shape[1]
    zc = _as_energy(z).z
    zn, kind, reflect, conj = _normalise(zc, d)
    if kind == "laplace":
        t, w = _laplace_nodes(zn, tol)
    else:
        t, w = _oscillatory_nodes(zn.imag, d, tol, abs(zn.real - 2 * d) + 2 * d)
    amp = _amplitudes(kind, zn, t, w, d)
    a = np.abs(pts)
    f = _factor_table(kind, int(a.max(initial=0)), t)
    prod = np.ones((len(t), len(pts)))
    for j in range(d):
        prod *= f[:, a[:, j]]
    vals = amp @ prod
    l1 = a.sum(axis=1)
    if kind == "oscillatory":
        vals = vals * (1j ** (l1 % 4))
    if conj:
        vals = vals.conj()
    if reflect:
        vals = -np.where(l1 % 2 == 0, 1.0, -1.0) * vals
    return vals
