"""Explicit families showing where uniform resolvent bounds fail.

* Knapp wave packets concentrated in an eps x ... x eps x eps^3 tube at
  the flat point (1/4, ..., 1/4) of {h0 = 2d}, against the anisotropic
  weight w_p.
* The d = 2 flat band: {h0 = 4} contains the segment xi1 + xi2 = 1/2, so
  the spectral shell does not decay along x1 + x2.
* Divergence of (phi, (H0 + mu^2)^{-1} phi) at the bottom of the band in
  d = 1, 2.
* Continuum probes: the H^s regularity of chi |x|^{-(d-2)/2}, the shell
  form of the ultrahyperbolic symbol, and the eps-scaling of weighted
  resolvent norms.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import integrate

from .lattice_core import AnisotropicWeight, ComplexEnergy, LatticeBox
from .resolvent import (
    _fit_slope,
    _split_function,
    free_kernels,
    green_values,
    surface_slice,
    weighted_resolvent_norm,
)


# ---------------------------------------------------------------------------
# Cutoffs


@dataclass(frozen=True)
class BumpProfile:
    """chi(x) = exp(1 - 1/(1 - (x/h)^2)) for |x| < h, else 0, with h = 1/4.

    ``nodes`` controls the trapezoid rule used for the inverse Fourier
    transform F^{-1} chi(s) = int chi(x) e^{2 pi i s x} dx; the integrand
    is smooth and compactly supported, so the rule converges faster than
    any power.
    """

    half_width: float = 0.25
    nodes: int = 1024

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        u = x / self.half_width
        inside = np.abs(u) < 1.0
        out = np.zeros_like(u)
        ui = u[inside]
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui * ui))
        return out

    def _rule(self):
        x = np.linspace(-self.half_width, self.half_width, self.nodes + 1)
        return x, np.full(x.size, 2 * self.half_width / self.nodes), self(x)

    def inverse_fourier(self, s, chunk=4096):
        """F^{-1} chi at real points s (real, since chi is even)."""
        s = np.asarray(s, dtype=float)
        x, w, c = self._rule()
        wc = w * c
        flat = s.ravel()
        out = np.empty(flat.size)
        for i in range(0, flat.size, chunk):
            out[i:i + chunk] = np.cos(2 * np.pi * np.outer(flat[i:i + chunk], x)) @ wc
        return out.reshape(s.shape)

    def decay_radius(self, rel=1e-12):
        """Smallest s beyond which |F^{-1} chi| stays below rel * F^{-1} chi(0)."""
        # The rule resolves |s| < nodes / (4 half_width); search well inside.
        s = np.linspace(0.0, self.nodes / (8.0 * self.half_width), 20001)
        f = np.abs(self.inverse_fourier(s))
        big = np.nonzero(f > rel * f[0])[0]
        return float(s[big.max() + 1]) if big.size else 0.0


def smooth_step(r, inner=1.0, outer=2.0):
    """C^infinity radial cutoff: 1 for r <= inner, 0 for r >= outer."""
    r = np.asarray(r, dtype=float)
    u = np.clip((r - inner) / (outer - inner), 0.0, 1.0)

    def g(v):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(v > 0, np.exp(-1.0 / np.where(v > 0, v, 1.0)), 0.0)

    return g(1.0 - u) / (g(1.0 - u) + g(u))


# ---------------------------------------------------------------------------
# Knapp family


class TubeInclusionError(ValueError):
    """The aperture a is too small for the tube inclusion."""


KNAPP_EPS = (0.2, 0.14, 0.1, 0.07, 0.05)
KNAPP_NODES = 2**7


def _knapp_surface(d, eps, n=KNAPP_NODES):
    """Nodes of {h0 = 2d} over the eps-window of xi' around 1/4.

    The graph axis is the last coordinate and only the branch through
    (1/4, ..., 1/4) is kept.
    """
    half = eps * BumpProfile().half_width
    sl = surface_slice(2.0 * d, d, n=n, axes=[d - 1], window=(0.25 - half, 0.25 + half))
    near = np.abs(sl.points[:, -1] - 0.25) < 0.125
    return sl, near


def tube_offsets(d, eps, n=KNAPP_NODES):
    """max |sum_j (xi_j - 1/4)| / eps^3 over surface nodes in the xi'-support."""
    sl, near = _knapp_surface(d, eps, n)
    bump = BumpProfile()
    prime = sl.points[near, :-1] - 0.25
    inside = np.all(np.abs(prime) < eps * bump.half_width, axis=1)
    off = np.abs(np.sum(sl.points[near] - 0.25, axis=1))[inside]
    return float(off.max(initial=0.0)) / eps**3


def auto_aperture(d, eps_list=KNAPP_EPS, n=KNAPP_NODES, safety=1.25):
    """Smallest round aperture with |sum (xi_j - 1/4)| < a eps^3 / 4 on the tube.

    chi((.)/(a eps^3)) is supported where |sum (xi_j - 1/4)| < a eps^3 / 4,
    so a must exceed 4 max offset / eps^3; ``safety`` adds headroom and the
    result is rounded up to two significant digits.
    """
    worst = max(tube_offsets(d, e, n) for e in eps_list)
    a = worst / BumpProfile().half_width * safety
    digits = 1 - int(math.floor(math.log10(a)))
    return math.ceil(a * 10**digits) / 10**digits


@dataclass(frozen=True)
class KnappDatum:
    """One member of the Knapp family.

    ``Q`` is (phi, w delta(H0 - 2d) w phi) and ``M`` is ||phi||^2.
    """

    d: int
    p: float
    a: float
    eps: float
    Q: float
    Q_error: float
    M: float
    tube_offset: float
    tube_ok: bool

    def to_json(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class KnappReport:
    """Knapp data across an eps ladder with fitted log-log slopes."""

    data: tuple
    Q_slope: float
    M_slope: float
    ratio_slope: float
    critical_p: float

    def to_json(self):
        return {"data": [k.to_json() for k in self.data], "Q_slope": self.Q_slope,
                "M_slope": self.M_slope, "ratio_slope": self.ratio_slope,
                "critical_p": self.critical_p, "a": self.data[0].a,
                "tube_ok": all(k.tube_ok for k in self.data)}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eps", "Q", "Q_error", "M", "tube_offset", "tube_ok"])
            for k in self.data:
                w.writerow([repr(float(v)) for v in (k.eps, k.Q, k.Q_error, k.M, k.tube_offset)]
                           + [k.tube_ok])


def knapp_transform(xi, d, a, eps, bump=None):
    """The Fourier transform of w_p phi_eps at torus points xi (P, d).

    chi(sum (xi_j - 1/4) / (a eps^3)) prod_{j<d} chi((xi_j - 1/4) / eps).
    """
    bump = BumpProfile() if bump is None else bump
    eta = np.asarray(xi) - 0.25
    out = bump(np.sum(eta, axis=1) / (a * eps**3))
    for j in range(d - 1):
        out = out * bump(eta[:, j] / eps)
    return out


def knapp_function(sites, d, p, a, eps, bump=None):
    """phi_eps on integer sites (P, d).

    phi_eps(x) = e^{2 pi i sum_j x_j / 4} a eps^{d+2} w_p(x)^{-1}
                 F^{-1}chi(a eps^3 x_d) prod_{j<d} F^{-1}chi(eps (x_j - x_d)).
    """
    bump = BumpProfile() if bump is None else bump
    x = np.asarray(sites, dtype=float)
    w = AnisotropicWeight(p).weight(x)
    val = a * eps ** (d + 2) / w * bump.inverse_fourier(a * eps**3 * x[:, -1])
    for j in range(d - 1):
        val = val * bump.inverse_fourier(eps * (x[:, j] - x[:, -1]))
    return val * np.exp(0.5j * np.pi * np.sum(x, axis=1))


def _weighted_square_sum(scale, p, bump, rel=1e-9):
    """sum_{n in Z} <n>^{2/p} |F^{-1}chi(scale n)|^2, truncated where negligible."""
    nmax = int(math.ceil(bump.decay_radius(rel) / scale)) + 1
    n = np.arange(0, nmax + 1, dtype=float)
    f = bump.inverse_fourier(scale * n)
    terms = (1.0 + n * n) ** (1.0 / p) * f * f
    return float(terms[0] + 2.0 * np.sum(terms[1:]))


def knapp_norm_squared(d, p, a, eps, bump=None):
    """||phi_eps||^2 by summation over Z^d.

    With y_j = x_j - x_d the sum factorises:
    a^2 eps^{2(d+2)} S(a eps^3) S(eps)^{d-1}, S(c) = sum <n>^{2/p} |F^{-1}chi(c n)|^2.
    """
    bump = BumpProfile() if bump is None else bump
    return (a * a * eps ** (2 * (d + 2)) * _weighted_square_sum(a * eps**3, p, bump)
            * _weighted_square_sum(eps, p, bump) ** (d - 1))


def knapp_family(d=3, p=6.0, a=None, eps_list=KNAPP_EPS, n=KNAPP_NODES):
    """Build the Knapp family and fit its scaling exponents.

    Parameters
    ----------
    d : int
        Dimension, d >= 3.
    p : float
        Exponent of the weight w_p.
    a : float, optional
        Aperture; chosen by :func:`auto_aperture` when omitted.
    eps_list : sequence of float
        Values in (0, 1].
    n : int
        Surface nodes per parameter axis.

    Returns
    -------
    KnappReport
        Q slope is expected near d - 1 and M slope near (d+2)(1 - 2/p).

    Raises
    ------
    TubeInclusionError
        If a given aperture fails the inclusion check.
    """
    if d < 3:
        raise ValueError("the Knapp family needs d >= 3")
    if any(not 0 < e <= 1 for e in eps_list):
        raise ValueError("eps must lie in (0, 1]")
    if a is None:
        a = auto_aperture(d, eps_list, n)
    bump = BumpProfile()
    data = []
    for eps in eps_list:
        off = tube_offsets(d, eps, n)
        ok = off < a * bump.half_width
        if not ok:
            raise TubeInclusionError(
                f"increase a: at eps={eps} the surface reaches |sum (xi_j - 1/4)| = "
                f"{off:.4g} eps^3, outside the support {a * bump.half_width:.4g} eps^3")
        sl, near = _knapp_surface(d, eps, n)
        g = np.where(near, knapp_transform(sl.points, d, a, eps, bump), 0.0)
        q, qerr = sl.integrate(g * g)
        m = knapp_norm_squared(d, p, a, eps, bump)
        data.append(KnappDatum(d, float(p), float(a), float(eps), float(q), float(qerr),
                               float(m), off, bool(ok)))
    le = np.log([k.eps for k in data])
    qs = _fit_slope(le, np.log([k.Q for k in data]))[0]
    ms = _fit_slope(le, np.log([k.M for k in data]))[0]
    return KnappReport(tuple(data), qs, ms, qs - ms, 2.0 * (d + 2) / 3.0)


# ---------------------------------------------------------------------------
# Flat band in d = 2


class FlatBandSupportError(ValueError):
    """Cutoff reaches xi1 in {0, 1/2}, where the line weight is singular."""


FLATBAND_RADIUS = 0.2
FLATBAND_SIGMA = 0.06


@dataclass(frozen=True)
class FlatBandCutoff:
    """Gaussian-weighted bump centred at (1/4, 1/4).

    chi(xi) = exp(-|xi - c|^2 / (2 sigma^2)) b((xi1 - 1/4)/r) b((xi2 - 1/4)/r)
    with c = (1/4, 1/4), b the bump on (-1/4, 1/4) and r = 4 radius, so the
    support is |xi_j - 1/4| < radius.  The Gaussian factor makes the
    transform along the flat segment decay fast on moderate scales.
    """

    radius: float = FLATBAND_RADIUS
    sigma: float | None = FLATBAND_SIGMA

    def __post_init__(self):
        if not 0 < self.radius < 0.25:
            raise FlatBandSupportError("support radius must lie in (0, 1/4) so that "
                                       "xi1 stays away from {0, 1/2}")

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        b = BumpProfile()
        r = 4.0 * self.radius
        e1, e2 = xi[..., 0] - 0.25, xi[..., 1] - 0.25
        out = b(e1 / r) * b(e2 / r)
        if self.sigma is not None:
            out = out * np.exp(-(e1 * e1 + e2 * e2) / (2.0 * self.sigma**2))
        return out


def _line_rule(radius, nodes):
    u = np.linspace(-radius, radius, nodes + 1)
    w = np.full(u.size, 2 * radius / nodes)
    xi1 = 0.25 + u
    dens = w / (4 * np.pi * np.sin(2 * np.pi * xi1))
    return xi1, dens


def flatband_J(t, radius=FLATBAND_RADIUS, nodes=4096):
    """J(t) = int e^{2 pi i t xi1} chi(xi1, 1/2 - xi1) dxi1 / (4 pi sin 2 pi xi1)."""
    cut = FlatBandCutoff(radius)
    xi1, dens = _line_rule(radius, nodes)
    c = cut(np.stack([xi1, 0.5 - xi1], -1)) * dens
    t = np.asarray(t, dtype=float)
    return (np.exp(2j * np.pi * np.outer(t.ravel(), xi1)) @ c).reshape(t.shape)


def flatband_I(x1, x2, radius=FLATBAND_RADIUS, nodes=4096):
    """I(x1, x2) = int_{h0 = 4} e^{2 pi i x.xi} chi(xi) dsigma / |grad h0|.

    Evaluated on the segment xi2 = 1/2 - xi1, which is all of {h0 = 4}
    inside the support of chi.  Real arguments are accepted.
    """
    cut = FlatBandCutoff(radius)
    xi1, dens = _line_rule(radius, nodes)
    c = cut(np.stack([xi1, 0.5 - xi1], -1)) * dens
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    x1b, x2b = np.broadcast_arrays(x1, x2)
    ph = np.outer(x1b.ravel(), xi1) + np.outer(x2b.ravel(), 0.5 - xi1)
    return (np.exp(2j * np.pi * ph) @ c).reshape(x1b.shape)


@dataclass(frozen=True)
class FlatBandTable:
    """I on a square of (x1, x2) with the factorisation residual.

    ``factor_residual`` is max | |I(x1, x2)| - |J(x1 - x2)| |.
    """

    x: np.ndarray = field(repr=False)
    I: np.ndarray = field(repr=False)
    J: np.ndarray = field(repr=False)
    factor_residual: float
    radius: float

    def I1(self, s, t):
        """I in the rotated coordinates s = x1 + x2, t = x1 - x2."""
        return flatband_I((np.asarray(s) + t) / 2.0, (np.asarray(s) - t) / 2.0, self.radius)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x1", "x2", "re", "im", "abs_J"])
            for i, a in enumerate(self.x):
                for j, b in enumerate(self.x):
                    v = self.I[i, j]
                    w.writerow([int(a), int(b), repr(float(v.real)), repr(float(v.imag)),
                                repr(float(abs(self.J[i, j])))])


def flatband_kernel(radius=FLATBAND_RADIUS, x_range=20):
    """Tabulate I(x1, x2) for |x1|, |x2| <= x_range and check I = e^{pi i x2} J(x1 - x2)."""
    x = np.arange(-x_range, x_range + 1)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    I = flatband_I(X1, X2, radius)
    J = flatband_J(X1 - X2, radius)
    res = float(np.max(np.abs(np.abs(I) - np.abs(J))))
    return FlatBandTable(x, I, J, res, radius)


def flatband_weight(x1, x2):
    """w(x) = <x1 + x2>^{-1/2} <x1 - x2>^{-1}."""
    s = np.asarray(x1, float) + x2
    t = np.asarray(x1, float) - x2
    return (1 + s * s) ** -0.25 * (1 + t * t) ** -0.5


@dataclass(frozen=True)
class BlowupReport:
    """Profile |w chi(D) delta(H0 - 4) w u| along the diagonal x1 = x2."""

    s: np.ndarray = field(repr=False)
    profile: np.ndarray = field(repr=False)
    slope: float
    intercept: float
    partial_sums: np.ndarray = field(repr=False)
    log_slope: float
    mass: float

    def to_json(self):
        return {"slope": self.slope, "intercept": self.intercept,
                "log_slope": self.log_slope, "mass": self.mass,
                "s": self.s.tolist(), "profile": self.profile.tolist(),
                "partial_sums": self.partial_sums.tolist()}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "profile", "partial_l2_sum"])
            for row in zip(self.s, self.profile, self.partial_sums):
                w.writerow([repr(float(v)) for v in row])


def flatband_weighted_blowup(psi, s_max=2000, radius=FLATBAND_RADIUS, nodes=4096):
    """Evaluate w chi(D) delta(H0 - 4) w u for u = e^{pi i (x1 + x2)/2} w^{-1} psi.

    The modulation puts the frequency of w u at (1/4, 1/4), where its
    transform is sum psi > 0.  The output is sampled on x1 = x2 = s/2 for
    even s in [0, s_max].

    Parameters
    ----------
    psi : dict or Table
        Finitely supported, nonnegative, not identically zero.

    Returns
    -------
    BlowupReport
        ``slope`` is the fitted exponent of the profile against 1 + s on
        s >= 10 (expected -1/2); ``log_slope`` fits the partial l2 sums
        over the diagonal against log s (positive: the sums diverge).
    """
    sites, vals = _split_function(psi)
    vals = np.asarray(vals, float)
    if len(vals) == 0 or np.any(vals < 0) or not np.any(vals > 0):
        raise ValueError("psi must be nonnegative with sum psi > 0")
    # w u = e^{pi i (y1 + y2)/2} psi(y)
    f = vals * np.exp(0.5j * np.pi * (sites[:, 0] + sites[:, 1]))
    cut = FlatBandCutoff(radius)
    xi1, dens = _line_rule(radius, nodes)
    xi = np.stack([xi1, 0.5 - xi1], -1)
    fhat = np.exp(-2j * np.pi * (xi @ sites.T.astype(float))) @ f
    c = cut(xi) * dens * fhat
    s = np.arange(0, s_max + 1, 2, dtype=float)
    x = s / 2.0
    out = np.exp(2j * np.pi * np.outer(x, xi1 + (0.5 - xi1))) @ c
    prof = flatband_weight(x, x) * np.abs(out)
    keep = s >= 10
    slope, icpt, _ = _fit_slope(np.log1p(s[keep]), np.log(prof[keep]))
    partial = np.cumsum(np.where(s == 0, 1.0, 2.0) * prof**2)
    lk = s >= 10
    log_slope = _fit_slope(np.log(s[lk]), partial[lk])[0]
    return BlowupReport(s, prof, slope, icpt, partial, log_slope, float(vals.sum()))


# ---------------------------------------------------------------------------
# Threshold divergence


@dataclass(frozen=True)
class ThresholdSeries:
    """(phi, (H0 + mu^2)^{-1} phi) along a decreasing mu ladder."""

    d: int
    mu: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    log_slope: float
    power_slope: float
    ratio: float
    classification: str

    def to_json(self):
        return {"d": self.d, "mu": self.mu.tolist(), "values": self.values.tolist(),
                "log_slope": self.log_slope, "power_slope": self.power_slope,
                "ratio": self.ratio, "classification": self.classification}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mu", "value"])
            for m, v in zip(self.mu, self.values):
                w.writerow([repr(float(m)), repr(float(v))])


def threshold_divergence(d, V, eta, mu_list=None):
    """Quadratic form of (H0 + mu^2)^{-1} on |V|^{1/2} eta as mu decreases.

    Parameters
    ----------
    d : int
    V : Potential
        Finitely supported, V <= 0.
    eta : dict or Table
        Finitely supported, eta >= 0, positive somewhere on supp V.
    mu_list : sequence of float, optional
        Defaults to 10^-1, 10^-1.5, ..., 10^-4.

    Returns
    -------
    ThresholdSeries
        ``log_slope`` is the slope of the values against log(1/mu),
        ``power_slope`` of log values against log(1/mu) and ``ratio`` is
        last over first.  Classified ``bounded`` when ratio <= 1.5,
        ``power`` when power_slope > 1/2 and ``logarithmic`` otherwise.
    """
    if mu_list is None:
        mu_list = [10.0 ** (-k / 2) for k in range(2, 9)]
    mu = np.asarray(mu_list, float)
    if not V.finite_support:
        raise ValueError("needs a finitely supported potential")
    vsites = V.support()
    if np.any(V.evaluate(vsites) > 0):
        raise ValueError("needs V <= 0")
    esites, evals = _split_function(eta)
    evals = np.asarray(evals, float)
    if np.any(evals < 0):
        raise ValueError("eta must be nonnegative")
    vmap = {tuple(s): abs(float(v)) for s, v in zip(vsites, V.evaluate(vsites))}
    phi = {}
    for s, e in zip(esites, evals):
        key = tuple(int(c) for c in s)
        if key in vmap and e > 0 and vmap[key] > 0:
            phi[key] = math.sqrt(vmap[key]) * e
    if not phi:
        raise ValueError("eta must be positive somewhere on supp V")
    sites = np.array(list(phi.keys()), int)
    amp = np.array(list(phi.values()))
    diffs = np.sort(np.abs(sites[:, None, :] - sites[None, :, :]).reshape(-1, d), axis=1)
    uniq, inv = np.unique(diffs, axis=0, return_inverse=True)
    vals = []
    for m in mu:
        g = green_values(uniq, ComplexEnergy(-m * m, 0.0)).real[inv.ravel()]
        vals.append(float(amp @ g.reshape(len(amp), len(amp)) @ amp))
    vals = np.array(vals)
    x = np.log(1.0 / mu)
    log_slope = _fit_slope(x, vals)[0]
    power_slope = _fit_slope(x, np.log(vals))[0]
    ratio = float(vals[-1] / vals[0])
    if ratio <= 1.5:
        label = "bounded"
    elif power_slope > 0.5:
        label = "power"
    else:
        label = "logarithmic"
    return ThresholdSeries(d, mu, vals, log_slope, power_slope, ratio, label)


# ---------------------------------------------------------------------------
# Continuum probes


@dataclass(frozen=True)
class SobolevTable:
    """H^s norms of chi |x|^{-(d-2)/2} across grid refinements.

    ``norms[i, k]`` is the norm for ``s_list[i]`` on ``N_list[k]`` points
    per axis.  ``drift`` is the relative change between the last two
    levels and ``growth`` the relative change per doubling, averaged
    geometrically.  ``increments`` holds the change of the squared
    seminorm between consecutive levels.
    """

    d: int
    s_list: tuple
    N_list: tuple
    half_length: float
    norms: np.ndarray = field(repr=False)
    drift: np.ndarray = field(repr=False)
    growth: np.ndarray = field(repr=False)
    increments: np.ndarray = field(repr=False)

    def to_json(self):
        return {"d": self.d, "s_list": list(self.s_list), "N_list": list(self.N_list),
                "half_length": self.half_length, "norms": self.norms.tolist(),
                "drift": self.drift.tolist(), "growth": self.growth.tolist(),
                "increments": self.increments.tolist()}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "N", "norm"])
            for i, s in enumerate(self.s_list):
                for k, n in enumerate(self.N_list):
                    w.writerow([repr(float(s)), int(n), repr(float(self.norms[i, k]))])


def _sobolev_levels(d, N, half_length, s_list):
    """H^s norms on the cell-centred grid of N^d points over [-L, L]^d.

    The function is even in every coordinate, so its Fourier coefficients
    are the type-II cosine transform of the positive half grid over N.
    """
    m = N // 2
    h = 2.0 * half_length / N
    x = (np.arange(m) + 0.5) * h
    r2 = np.zeros((m,) * d)
    for j, xj in enumerate(np.meshgrid(*([x] * d), indexing="ij", sparse=True)):
        r2 = r2 + xj * xj
    r = np.sqrt(r2)
    del r2
    f = smooth_step(r) * r ** (-(d - 2) / 2.0)
    del r
    c = sfft.dctn(f, type=2, overwrite_x=True) / N**d
    del f
    k = np.arange(m)
    mult = np.where(k == 0, 1.0, 2.0)
    xi2 = np.zeros((m,) * d)
    weight = np.ones((m,) * d)
    for j, (kj, mj) in enumerate(zip(np.meshgrid(*([k] * d), indexing="ij", sparse=True),
                                     np.meshgrid(*([mult] * d), indexing="ij", sparse=True))):
        xi2 = xi2 + (np.pi * kj / half_length) ** 2
        weight = weight * mj
    a2 = weight * np.abs(c) ** 2 * (2.0 * half_length) ** d
    del c, weight
    return [float(math.sqrt(np.sum(a2 * (1.0 + xi2) ** s))) for s in s_list]


def sobolev_blowup_probe(d=3, s_list=(0.0, 0.5, 0.9, 1.0), N_list=(64, 128, 256, 512),
                         half_length=4.0):
    """Tabulate ||chi |x|^{-(d-2)/2}||_{H^s} under grid refinement.

    chi is the smooth radial step (1 on |x| <= 1, 0 on |x| >= 2); the
    domain is [-L, L]^d with periodic extension.  For s < 1 the norms
    converge; at s = 1 the squared seminorm grows by a fixed amount per
    doubling, i.e. logarithmically in N.
    """
    if d < 3:
        raise ValueError("needs d >= 3")
    norms = np.array([_sobolev_levels(d, n, half_length, s_list) for n in N_list]).T
    drift = np.abs(norms[:, -1] - norms[:, -2]) / norms[:, -2]
    growth = (norms[:, -1] / norms[:, 0]) ** (1.0 / (len(N_list) - 1)) - 1.0
    increments = np.diff(norms**2, axis=1)
    return SobolevTable(d, tuple(map(float, s_list)), tuple(map(int, N_list)),
                        float(half_length), norms, drift, growth, increments)


@dataclass(frozen=True)
class SurfaceSeries:
    """Values of the ultrahyperbolic shell form along an eps ladder."""

    d: int
    eps: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    log_slope: float
    ratio: float

    def to_json(self):
        return {"d": self.d, "eps": self.eps.tolist(), "values": self.values.tolist(),
                "log_slope": self.log_slope, "ratio": self.ratio}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eps", "value"])
            for e, v in zip(self.eps, self.values):
                w.writerow([repr(float(e)), repr(float(v))])


def _sphere_area(n):
    """Area of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def singular_profile(d):
    """|phi(xi)|^2 = chi(|xi|)^2 |xi|^{-(d-2)} as a function of (|xi'|, |xi|)."""
    return lambda r, rho: smooth_step(rho) ** 2 * rho ** (-(d - 2))


def ultra_surface_form(d=3, eps_list=None, profile=None):
    """(phi, delta(p + eps) phi) for p(xi) = xi1^2 - |xi'|^2, k = 1.

    On {xi1^2 = |xi'|^2 + eps} both sheets contribute
    int |phi|^2 dxi' / (2 sqrt(|xi'|^2 + eps)); for radial data this is
    2 |S^{d-2}| int |phi|^2 r^{d-2} dr / (2 sqrt(r^2 + eps)) with
    |xi|^2 = 2 r^2 + eps.

    Parameters
    ----------
    profile : callable (r, rho) -> |phi|^2, optional
        Defaults to :func:`singular_profile`.

    Returns
    -------
    SurfaceSeries
        ``log_slope`` is the slope of the values against log(1/eps).
    """
    if d < 3:
        raise ValueError("needs d >= 3")
    if eps_list is None:
        eps_list = [10.0 ** (-k) for k in range(2, 9)]
    prof = singular_profile(d) if profile is None else profile
    area = _sphere_area(d - 1)
    vals = []
    for eps in eps_list:
        def f(u):
            r = math.exp(u)
            rho = math.sqrt(2 * r * r + eps)
            return float(prof(r, rho)) * r ** (d - 1) / (2 * math.sqrt(r * r + eps))
        lo = math.log(math.sqrt(eps)) - 40.0
        mid = math.log(math.sqrt(eps))
        v1 = integrate.quad(f, lo, mid, limit=200, epsabs=0, epsrel=1e-12)[0]
        v2 = integrate.quad(f, mid, math.log(2.0), limit=200, epsabs=0, epsrel=1e-12)[0]
        vals.append(2.0 * area * (v1 + v2))
    eps = np.asarray(eps_list, float)
    vals = np.array(vals)
    slope = _fit_slope(np.log(1.0 / eps), vals)[0]
    ratio = float(vals[-1] / vals[0]) if vals[0] else math.nan
    return SurfaceSeries(d, eps, vals, slope, ratio)


@dataclass(frozen=True)
class ScalingSeries:
    """||<x>^-alpha R0(mu + i eps) <x>^-beta|| along an eps ladder."""

    alpha: float
    beta: float
    mu: float
    eps: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)
    slope: float
    predicted: float

    def to_json(self):
        return {"alpha": self.alpha, "beta": self.beta, "mu": self.mu,
                "eps": self.eps.tolist(), "norms": self.norms.tolist(),
                "slope": self.slope, "predicted": self.predicted}


def uniform_decay_blowup(alpha, beta, box, eps_list=(1e-1, 10**-1.5, 1e-2), mu=0.0, tol=1e-8):
    """Weighted resolvent norms near the bottom of the band.

    Rescaling x by eps^{-1/2} near an elliptic threshold turns
    <x>^-alpha (H0 - i eps)^{-1} <x>^-beta into eps^{-(2 - alpha - beta)/2}
    times a fixed operator, so the fitted slope against log eps is
    predicted to be -(2 - alpha - beta)/2.
    """
    big = LatticeBox(box.d, 2 * box.R)
    kernels = free_kernels(big, [ComplexEnergy(mu, e) for e in eps_list])
    norms = np.array([weighted_resolvent_norm(alpha, beta, ComplexEnergy(mu, e), box,
                                              kernel=k, tol=tol)
                      for e, k in zip(eps_list, kernels)])
    eps = np.asarray(eps_list, float)
    slope = _fit_slope(np.log(eps), np.log(norms))[0]
    return ScalingSeries(float(alpha), float(beta), float(mu), eps, norms, slope,
                         -(2.0 - alpha - beta) / 2.0)
