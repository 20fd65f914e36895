"""Free Schroedinger evolution on Z^d: dispersion, Strichartz norms, continuum model.

On a periodic box of side L = 2R+1 the propagator e^{-itH0} is the
Fourier multiplier e^{-it h0(k/L)}, exact up to wrap-around.  Wave
packets travel at speed at most 2, and runs are restricted to
|t| <= L/(4 pi) so that nothing reaches the far side of the box.

The point-data quantities are separable: e^{-itH0} delta_0 is the tensor
product of 1D factors e^{-2it} i^n J_n(2t).  Sup norms in d dimensions are
therefore d-th powers of 1D sup norms, and Lorentz norms follow from the
1D factors through an enumeration of sorted index tuples.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import special

from .lattice_core import LatticeBox, lorentz_norm
from .resolvent import _fit_slope

FIT_RESIDUAL_LIMIT = 0.15
STEPS_PER_UNIT = 512


class RevivalError(ValueError):
    """Requested time exceeds the revival horizon of the box.

    Attributes
    ----------
    required_R : int
        Smallest box radius whose horizon covers the requested time.
    """

    def __init__(self, t, box):
        self.required_R = required_radius(t)
        super().__init__(
            f"|t| = {abs(t)} exceeds the revival horizon {revival_horizon(box):.6g} of the "
            f"box of radius {box.R}; need R >= {self.required_R}")


class GridResolutionError(ValueError):
    """Continuum grid too coarse or too short for the chirp at time t."""

    def __init__(self, message, dx, half_length):
        super().__init__(f"{message}; need dx <= {dx:.6g} and half-length >= {half_length:.6g}")
        self.dx = dx
        self.half_length = half_length


def revival_horizon(box):
    """L / (4 pi) for the periodic box of side L = 2R + 1."""
    return box.side / (4.0 * math.pi)


def required_radius(t):
    return max(1, math.ceil((4.0 * math.pi * abs(t) - 1.0) / 2.0))


def _multiplier(box):
    k = [np.arange(box.side) / box.side] * box.d
    h = np.zeros(box.shape)
    for j, kj in enumerate(np.meshgrid(*k, indexing="ij", sparse=True)):
        h = h + 4.0 * np.sin(np.pi * kj) ** 2
    return h


def propagate(u0, t, box, check_horizon=True):
    """e^{-itH0} u0 on the periodic box.

    Parameters
    ----------
    u0 : ndarray
        Values on ``box`` (shape ``box.shape``, site x at index x + R).
    t : float or sequence of float
    box : LatticeBox
        Treated as a periodic box.

    Returns
    -------
    ndarray
        u(t), or a stack of snapshots if ``t`` is a sequence.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if check_horizon:
        bad = ts[np.abs(ts) > revival_horizon(box)]
        if bad.size:
            raise RevivalError(float(np.max(np.abs(bad))), box)
    u_hat = sfft.fftn(np.asarray(u0, dtype=complex).reshape(box.shape))
    h = _multiplier(box)
    out = np.stack([sfft.ifftn(u_hat * np.exp(-1j * tt * h)) for tt in ts])
    return out[0] if np.ndim(t) == 0 else out


def duhamel(F, t, box, steps=256):
    """Retarded Duhamel term -i int_0^t e^{-i(t-s)H0} F(s) ds.

    Trapezoid rule with ``steps`` intervals; ``F`` maps s to an array on
    the periodic box.
    """
    if abs(t) > revival_horizon(box):
        raise RevivalError(t, box)
    s = np.linspace(0.0, t, steps + 1)
    w = np.full(steps + 1, t / steps)
    w[[0, -1]] *= 0.5
    h = _multiplier(box)
    acc = np.zeros(box.shape, dtype=complex)
    for sj, wj in zip(s, w):
        acc += wj * np.exp(-1j * (t - sj) * h) * sfft.fftn(np.asarray(F(sj), dtype=complex))
    return -1j * sfft.ifftn(acc)


@dataclass
class EvolutionRun:
    """Sup and l2 norms of u(t_k) = e^{-i t_k H0} u0."""

    times: np.ndarray
    sup_norms: np.ndarray
    l2_norms: np.ndarray
    snapshots: np.ndarray | None = field(default=None, repr=False)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "sup_norm", "l2_norm"])
            for row in zip(self.times, self.sup_norms, self.l2_norms):
                w.writerow([repr(float(v)) for v in row])


def evolve(u0, times, box, keep=False):
    """Propagate ``u0`` to each time and record its norms."""
    snaps = propagate(u0, list(times), box)
    flat = snaps.reshape(len(snaps), -1)
    return EvolutionRun(np.asarray(times, float), np.abs(flat).max(axis=1),
                        np.linalg.norm(flat, axis=1), snaps if keep else None)


def _odd_fast_length(n):
    n = n + 1 - n % 2
    while sfft.next_fast_len(n) != n:
        n += 2
    return n


def point_box(t_max):
    """Smallest 1D periodic box (fast FFT length) whose horizon covers t_max."""
    L = _odd_fast_length(2 * required_radius(t_max) + 1)
    return LatticeBox(1, (L - 1) // 2)


def point_sup_norms(d, times, box=None):
    """||e^{-itH0} delta_0||_inf on Z^d through the 1D factor.

    The 1D evolution runs on a periodic box within its revival horizon.
    Returns (sup norms in d dimensions, 1D l2 norms, box used).
    """
    times = np.asarray(times, float)
    if box is None:
        box = point_box(float(np.max(np.abs(times))))
    if box.d != 1:
        raise ValueError("the point-data route evolves a 1D box")
    run = evolve(box.delta(), times, box)
    return run.sup_norms ** d, run.l2_norms, box


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit log sup = slope log t + intercept over a window."""

    d: int
    slope: float
    intercept: float
    residual: float
    window: tuple
    inconclusive: bool
    run: EvolutionRun = field(repr=False, compare=False)

    def to_json(self):
        return {"d": self.d, "slope": self.slope, "intercept": self.intercept,
                "residual": self.residual, "window": list(self.window),
                "inconclusive": self.inconclusive}


def dispersive_fit(d, t_range=(1e2, 1e4), samples=25, box=None):
    """Fit the decay exponent of ||e^{-itH0} delta_0||_inf.

    Parameters
    ----------
    d : int
    t_range : (float, float)
        Fit window; ``samples`` log-spaced times.
    box : LatticeBox, optional
        1D periodic box for the factor; sized automatically by default.

    Returns
    -------
    DecayFit
        Slope near -d/3.  ``inconclusive`` is set when the RMS residual
        of the fit exceeds 0.15.
    """
    t = np.geomspace(t_range[0], t_range[1], samples)
    sup, l2, box = point_sup_norms(d, t, box)
    slope, icpt, resid = _fit_slope(np.log(t), np.log(sup))
    run = EvolutionRun(t, sup, l2 ** d)
    return DecayFit(d, slope, icpt, resid, (float(t_range[0]), float(t_range[1])),
                    bool(resid > FIT_RESIDUAL_LIMIT), run)


def strichartz_exponent(d):
    """3* = 2d/(d-3), the Lorentz exponent of the endpoint estimate."""
    if d < 4:
        raise ValueError("Strichartz exponents undefined for d < 4")
    return 2.0 * d / (d - 3)


def time_grid(T, steps_per_unit=STEPS_PER_UNIT, growth=1.02):
    """Nodes on [0, T]: uniform on [0, 1], geometric beyond."""
    head = np.linspace(0.0, min(T, 1.0), int(steps_per_unit * min(T, 1.0)) + 1)
    if T <= 1.0:
        return head
    n = max(1, math.ceil(math.log(T) / math.log(growth)))
    return np.concatenate([head, np.geomspace(1.0, T, n + 1)[1:]])


def _trapezoid(t, f):
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(t)))


def strichartz_norm(u0, T, box, steps_per_unit=STEPS_PER_UNIT, growth=1.02):
    """(int_{-T}^{T} ||e^{-itH0} u0||^2_{l^{3*,2}} dt)^{1/2} on a periodic box.

    ``T`` must lie within the revival horizon.  The integrand is even in
    t up to complex conjugation of u, so the quadrature runs on [0, T].
    """
    d = box.d
    p = strichartz_exponent(d)
    if not np.any(u0):
        return 0.0
    t = time_grid(T, steps_per_unit, growth)
    if T > revival_horizon(box):
        raise RevivalError(T, box)
    u_hat = sfft.fftn(np.asarray(u0, dtype=complex).reshape(box.shape))
    h = _multiplier(box)
    vals = np.array([lorentz_norm(sfft.ifftn(u_hat * np.exp(-1j * tt * h)), p, 2.0) ** 2
                     for tt in t])
    return math.sqrt(2.0 * _trapezoid(t, vals))


def _tuple_counts(tuples):
    """Number of points of Z^d whose sorted |x| is each tuple."""
    d = tuples.shape[1]
    nonzero = np.count_nonzero(tuples, axis=1)
    perms = np.full(len(tuples), float(math.factorial(d)))
    # Divide by the factorial of each run of equal entries.
    run = np.ones(len(tuples))
    for j in range(1, d):
        same = tuples[:, j] == tuples[:, j - 1]
        run = np.where(same, run + 1, 1.0)
        perms /= np.where(same, run, 1.0)
    return perms * 2.0 ** nonzero


def point_lorentz_norm(d, t, p, r=2.0, cutoff=1e-14):
    """||e^{-itH0} delta_0||_{l^{p,r}(Z^d)}, exactly up to ``cutoff``.

    |u(t, x)| = prod_j |J_{|x_j|}(2t)|.  Each value is attained on the
    orbit of a sorted tuple of |x_j| under signs and permutations, so the
    distribution function comes from tuple counts.  Factors below
    ``cutoff`` relative to the largest are dropped.
    """
    n = np.arange(0, int(2 * t + 12 * (2 * t + 1) ** (1 / 3) + 24))
    f = np.abs(special.jv(n, 2.0 * t))
    keep = f > cutoff * f.max()
    nmax = int(np.nonzero(keep)[0].max())
    f = f[: nmax + 1]
    tup = np.array(list(itertools.combinations_with_replacement(range(nmax + 1), d)))
    vals = np.prod(f[tup], axis=1)
    return lorentz_norm(vals, p, r, counts=_tuple_counts(tup))


def point_strichartz_norm(d, T, steps_per_unit=STEPS_PER_UNIT, growth=1.02):
    """Strichartz norm of delta_0 on the infinite lattice Z^d, d >= 4."""
    p = strichartz_exponent(d)
    t = time_grid(T, steps_per_unit, growth)
    vals = np.array([point_lorentz_norm(d, tt, p, 2.0) ** 2 for tt in t])
    return math.sqrt(2.0 * _trapezoid(t, vals))


def gaussian_sup(t, sigma=1.0, d=1):
    """Closed-form sup norm of a unit-mass Gaussian after time t.

    Each 1D factor of e^{+-it Delta} applied to (2 pi sigma^2)^{-1/2}
    exp(-x^2 / (2 sigma^2)) has sup (2 pi sigma^2)^{-1/2}
    (sigma^4 / (sigma^4 + 4 t^2))^{1/4}.
    """
    one = (2 * math.pi * sigma**2) ** -0.5 * (sigma**4 / (sigma**4 + 4.0 * t * t)) ** 0.25
    return one**d


def continuum_grid(t, sigma=1.0):
    """(dx, half_length) resolving the evolved Gaussian to ~1e-15."""
    kmax = 8.6 / sigma
    return math.pi / kmax, 2.0 * kmax * abs(t) + 9.0 * sigma


def _evolve_gaussian_1d(t, sign, sigma, dx, half_length):
    n = 2 * math.ceil(half_length / dx)
    n = sfft.next_fast_len(n)
    x = (np.arange(n) - n // 2) * dx
    g = (2 * math.pi * sigma**2) ** -0.5 * np.exp(-x**2 / (2 * sigma**2))
    k = 2 * math.pi * sfft.fftfreq(n, dx)
    # e^{i s t Delta} has symbol e^{-i s t k^2}.
    return sfft.ifft(sfft.fft(g) * np.exp(-1j * sign * t * k * k))


def continuum_dispersive(d, k, t, sigma=1.0, dx=None, half_length=None):
    """Sup norm of e^{-it Delta_x} e^{it Delta_y} applied to a Gaussian.

    Parameters
    ----------
    d : int
        Dimension; x has k coordinates and y the remaining d - k.
    k : int
        Number of coordinates with the opposite sign, 0 <= k <= d.
    t : float
    sigma : float
        Width of the unit-mass Gaussian regularising the point datum.
    dx, half_length : float, optional
        Grid; checked against :func:`continuum_grid`.

    Returns
    -------
    float
        The sup norm, a product of 1D sup norms.  The envelope
        (4 pi |t|)^{-d/2} bounds it for every k.
    """
    if not 0 <= k <= d:
        raise ValueError("need 0 <= k <= d")
    need_dx, need_half = continuum_grid(t, sigma)
    dx = need_dx if dx is None else dx
    half_length = need_half if half_length is None else half_length
    if dx > need_dx * (1 + 1e-12) or half_length < need_half * (1 - 1e-12):
        raise GridResolutionError(f"grid too coarse for the chirp at t = {t}", need_dx,
                                  need_half)
    out = 1.0
    cache = {}
    for j in range(d):
        sign = -1 if j < k else 1
        if sign not in cache:
            cache[sign] = float(np.abs(_evolve_gaussian_1d(t, sign, sigma, dx, half_length)).max())
        out *= cache[sign]
    return out


def continuum_decay_fit(d, k=1, t_range=(10.0, 1000.0), samples=9, sigma=1.0):
    """Fit the decay exponent of :func:`continuum_dispersive`; expected -d/2."""
    t = np.geomspace(t_range[0], t_range[1], samples)
    sup = np.array([continuum_dispersive(d, k, tt, sigma) for tt in t])
    slope, icpt, resid = _fit_slope(np.log(t), np.log(sup))
    run = EvolutionRun(t, sup, np.full_like(t, (4 * math.pi * sigma**2) ** (-d / 4)))
    return DecayFit(d, slope, icpt, resid, (float(t_range[0]), float(t_range[1])),
                    bool(resid > FIT_RESIDUAL_LIMIT), run)
