"""Symbols, grids, lattice boxes, potentials and Lorentz norms.

The free Hamiltonian is the negative discrete Laplacian on Z^d,

    (H0 u)(x) = 2d u(x) - sum_{|y - x| = 1} u(y),

whose Fourier symbol is h0(xi) = 4 sum_j sin^2(pi xi_j) on the torus
T^d = R^d / Z^d.  Everything else in the package is expressed in the
vocabulary defined here.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_MEMORY_BUDGET = 2 * 1024**3


class NormNotComputableError(ValueError):
    """Raised when a norm cannot be obtained from finitely many values."""


def symbol_eval(xi):
    """Evaluate h0(xi) = 4 sum_j sin^2(pi xi_j).

    Parameters
    ----------
    xi : array_like
        Torus points, coordinates along the last axis.  A scalar is
        read as a one-dimensional point.

    Returns
    -------
    float or ndarray
        Symbol values in [0, 4d].
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        xi = xi[None]
    xi = np.mod(xi, 1.0)
    vals = 4.0 * np.sum(np.sin(np.pi * xi) ** 2, axis=-1)
    return float(vals) if np.ndim(vals) == 0 else vals


def symbol_gradient(xi):
    """Gradient of h0, i.e. 4 pi sin(2 pi xi_j) along the last axis."""
    xi = np.asarray(xi, dtype=float)
    return 4.0 * np.pi * np.sin(2.0 * np.pi * xi)


@dataclass(frozen=True)
class ThresholdPoint:
    """A critical point of h0 (all coordinates in {0, 1/2})."""

    location: tuple
    energy: float
    kind: str
    signature: int


def critical_points(d):
    """List the 2^d critical points of h0 with their classification.

    The Hessian of h0 is diagonal with entries 8 pi^2 cos(2 pi xi_j), so
    the signature (number of positive directions) is the number of zero
    coordinates.  The point is elliptic when it is an extremum.
    """
    if d < 1:
        raise ValueError("dimension must be at least 1")
    points = []
    for loc in itertools.product((0.0, 0.5), repeat=d):
        k = sum(1 for c in loc if c == 0.0)
        kind = "elliptic" if k in (0, d) else "hyperbolic"
        points.append(ThresholdPoint(tuple(loc), 4.0 * (d - k), kind, k))
    return points


def threshold_energies(d):
    """Critical values 0, 4, ..., 4d."""
    return [4.0 * k for k in range(d + 1)]


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid xi = k / N, k in {0..N-1}^d, on the torus."""

    d: int
    N: int
    memory_budget: int = DEFAULT_MEMORY_BUDGET

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be at least 1")
        if self.N < 16 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 16, got {self.N}")
        if self.node_count * 16 > self.memory_budget:
            raise MemoryError(
                f"grid {self.N}^{self.d} needs {self.node_count * 16} bytes "
                f"of complex storage, over the budget {self.memory_budget}"
            )

    @property
    def node_count(self):
        return self.N**self.d

    @property
    def spacing(self):
        return 1.0 / self.N

    def axis_nodes(self):
        return np.arange(self.N) / self.N

    def symbol(self):
        """h0 sampled on the grid as an array of shape (N,)*d."""
        h1 = 4.0 * np.sin(np.pi * self.axis_nodes()) ** 2
        out = np.zeros((self.N,) * self.d)
        for j in range(self.d):
            shape = [1] * self.d
            shape[j] = self.N
            out = out + h1.reshape(shape)
        return out


@dataclass(frozen=True)
class LatticeBox:
    """The cube {x in Z^d : max_j |x_j| <= R}.

    Sites are ordered lexicographically with the first coordinate varying
    slowest, which is the C order of an array of shape (2R+1,)*d indexed
    by x + R.
    """

    d: int
    R: int

    def __post_init__(self):
        if self.d < 1 or self.R < 0:
            raise ValueError("need d >= 1 and R >= 0")

    @property
    def side(self):
        return 2 * self.R + 1

    @property
    def shape(self):
        return (self.side,) * self.d

    @property
    def size(self):
        return self.side**self.d

    def sites(self):
        """All sites as an integer array of shape (size, d)."""
        grids = np.indices(self.shape).reshape(self.d, -1).T
        return grids - self.R

    def coordinates(self):
        """Broadcastable coordinate arrays, one per axis."""
        ax = np.arange(-self.R, self.R + 1)
        out = []
        for j in range(self.d):
            shape = [1] * self.d
            shape[j] = self.side
            out.append(ax.reshape(shape))
        return out

    def norm_array(self):
        """Euclidean |x| on the box, shape ``self.shape``."""
        sq = sum(c.astype(float) ** 2 for c in self.coordinates())
        return np.sqrt(np.broadcast_to(sq, self.shape))

    def index(self, site):
        site = tuple(int(s) for s in site)
        if len(site) != self.d or max(abs(s) for s in site) > self.R:
            raise IndexError(f"site {site} outside box of radius {self.R}")
        return int(np.ravel_multi_index(tuple(s + self.R for s in site), self.shape))

    def delta(self, site=None, dtype=float):
        """Kronecker delta at ``site`` (origin by default)."""
        u = np.zeros(self.shape, dtype=dtype)
        site = (0,) * self.d if site is None else site
        u[tuple(s + self.R for s in site)] = 1
        return u

    def to_json(self):
        return {"d": self.d, "R": self.R}

    @classmethod
    def from_json(cls, data):
        return cls(int(data["d"]), int(data["R"]))


@dataclass(frozen=True)
class ComplexEnergy:
    """Spectral parameter z = mu + i eps."""

    mu: float
    eps: float

    @property
    def z(self):
        return complex(self.mu, self.eps)

    @property
    def half_plane(self):
        """'+' for Im z > 0, '-' for Im z < 0, 'real' on the axis."""
        if self.eps > 0:
            return "+"
        if self.eps < 0:
            return "-"
        return "real"

    def conj(self):
        return ComplexEnergy(self.mu, -self.eps)

    def dist_to_spectrum(self, d):
        """Distance from z to [0, 4d]."""
        x = min(max(self.mu, 0.0), 4.0 * d)
        return math.hypot(self.mu - x, self.eps)

    def on_spectrum(self, d):
        return self.dist_to_spectrum(d) == 0.0

    @classmethod
    def from_complex(cls, z):
        z = complex(z)
        return cls(z.real, z.imag)

    def to_json(self):
        return {"mu": self.mu, "eps": self.eps}


def _bracket(y):
    return np.sqrt(1.0 + np.asarray(y, dtype=float) ** 2)


class Potential:
    """Real lattice function V, evaluated site by site.

    Subclasses implement :meth:`evaluate` on integer site arrays of shape
    (..., d).  The Birman-Schwinger weight is |V|^{1/2}.
    """

    kind = "abstract"
    finite_support = False

    def evaluate(self, sites):
        raise NotImplementedError

    def on_box(self, box):
        return self.evaluate(box.sites()).reshape(box.shape)

    def weight_on_box(self, box):
        return np.sqrt(np.abs(self.on_box(box)))

    def support(self):
        """Sites of a finitely supported potential, else None."""
        return None

    def to_json(self):
        raise NotImplementedError


@dataclass(frozen=True)
class PowerDecay(Potential):
    """V(x) = sign * C * (1 + |x|)^(-alpha)."""

    alpha: float
    sign: int = 1
    amplitude: float = 1.0
    kind = "power_decay"

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.amplitude < 0 or self.alpha < 0:
            raise ValueError("amplitude and alpha must be nonnegative")

    def evaluate(self, sites):
        r = np.linalg.norm(np.asarray(sites, dtype=float), axis=-1)
        return self.sign * self.amplitude * (1.0 + r) ** (-self.alpha)

    def radial_value(self, r):
        return self.sign * self.amplitude * (1.0 + np.asarray(r, float)) ** (-self.alpha)

    def to_json(self):
        return {"kind": self.kind, "alpha": self.alpha, "sign": self.sign,
                "amplitude": self.amplitude}


@dataclass(frozen=True)
class PointMass(Potential):
    """V = value * delta_site."""

    site: tuple
    value: float
    kind = "point_mass"
    finite_support = True

    def evaluate(self, sites):
        sites = np.asarray(sites)
        hit = np.all(sites == np.asarray(self.site), axis=-1)
        return np.where(hit, float(self.value), 0.0)

    def support(self):
        return np.asarray([self.site]) if self.value != 0 else np.zeros((0, len(self.site)), int)

    def to_json(self):
        return {"kind": self.kind, "site": list(self.site), "value": self.value}


@dataclass(frozen=True)
class AnisotropicWeight(Potential):
    """V = w_p^2 with w_p(x) = <x_d>^(-1/p) prod_{j<d} <x_j - x_d>^(-1/p).

    The Birman-Schwinger weight |V|^{1/2} is exactly w_p.
    """

    p: float
    kind = "anisotropic_weight"

    def weight(self, sites):
        sites = np.asarray(sites, dtype=float)
        last = sites[..., -1]
        w = _bracket(last) ** (-1.0 / self.p)
        for j in range(sites.shape[-1] - 1):
            w = w * _bracket(sites[..., j] - last) ** (-1.0 / self.p)
        return w

    def evaluate(self, sites):
        return self.weight(sites) ** 2

    def to_json(self):
        return {"kind": self.kind, "p": self.p}


@dataclass(frozen=True)
class FlatBandWeight(Potential):
    """V = w^2 on Z^2 with w(x) = <x1 + x2>^(-1/2) <x1 - x2>^(-1)."""

    kind = "flat_band_weight"

    def weight(self, sites):
        sites = np.asarray(sites, dtype=float)
        if sites.shape[-1] != 2:
            raise ValueError("the flat-band weight lives on Z^2")
        s = sites[..., 0] + sites[..., 1]
        t = sites[..., 0] - sites[..., 1]
        return _bracket(s) ** -0.5 / _bracket(t)

    def evaluate(self, sites):
        return self.weight(sites) ** 2

    def to_json(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class Table(Potential):
    """Finitely supported potential given by explicit (site, value) pairs."""

    entries: tuple = field(default_factory=tuple)
    kind = "table"
    finite_support = True

    def __post_init__(self):
        clean = tuple(sorted((tuple(int(c) for c in s), float(v)) for s, v in self.entries))
        sites = [s for s, _ in clean]
        if len(set(sites)) != len(sites):
            raise ValueError("duplicate sites in table")
        object.__setattr__(self, "entries", clean)

    @classmethod
    def from_dict(cls, mapping):
        return cls(tuple(mapping.items()))

    def evaluate(self, sites):
        sites = np.asarray(sites)
        out = np.zeros(sites.shape[:-1])
        for s, v in self.entries:
            out = np.where(np.all(sites == np.asarray(s), axis=-1), v, out)
        return out

    def support(self):
        pts = [s for s, v in self.entries if v != 0]
        if not pts:
            d = len(self.entries[0][0]) if self.entries else 0
            return np.zeros((0, d), int)
        return np.asarray(pts)

    def count(self, which="nonzero"):
        vals = [v for _, v in self.entries]
        if which == "nonzero":
            return sum(v != 0 for v in vals)
        if which == "negative":
            return sum(v < 0 for v in vals)
        if which == "positive":
            return sum(v > 0 for v in vals)
        raise ValueError(which)

    def to_json(self):
        return {"kind": self.kind,
                "entries": [{"site": list(s), "value": v} for s, v in self.entries]}


def potential_from_json(data):
    """Rebuild a potential from its JSON descriptor."""
    kind = data.get("kind")
    if kind == "power_decay":
        return PowerDecay(float(data["alpha"]), int(data.get("sign", 1)),
                          float(data.get("amplitude", 1.0)))
    if kind == "point_mass":
        return PointMass(tuple(int(c) for c in data["site"]), float(data["value"]))
    if kind == "anisotropic_weight":
        return AnisotropicWeight(float(data["p"]))
    if kind == "flat_band_weight":
        return FlatBandWeight()
    if kind == "table":
        return Table(tuple((tuple(e["site"]), e["value"]) for e in data["entries"]))
    raise ValueError(f"unknown potential kind {kind!r}")


def apply_H0(u, bc="dirichlet"):
    """Apply H0 to a lattice function on a box.

    Parameters
    ----------
    u : ndarray
        Values on a box, shape (2R+1,)*d.
    bc : {'dirichlet', 'periodic'}
        Out-of-box neighbours are zero (Dirichlet) or wrapped (periodic).
    """
    u = np.asarray(u)
    d = u.ndim
    out = 2 * d * u
    if bc == "periodic":
        for ax in range(d):
            out = out - np.roll(u, 1, axis=ax) - np.roll(u, -1, axis=ax)
        return out
    if bc != "dirichlet":
        raise ValueError(f"unknown boundary condition {bc!r}")
    out = out.copy() if out is u else out
    for ax in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        out[tuple(lo)] -= u[tuple(hi)]
        out[tuple(hi)] -= u[tuple(lo)]
    return out


def lorentz_norm(u, p, r=np.inf, counts=None):
    """Lorentz quasi-norm ||u||_{l^{p,r}} for counting measure.

    With the distribution function m(a) = #{|u| > a},

        r = inf : sup_a a m(a)^(1/p),
        r < inf : p^(1/r) ( int_0^inf m(a)^(r/p) a^(r-1) da )^(1/r).

    For finitely many values m is a step function, so the integral is an
    exact finite sum over its jumps.

    Parameters
    ----------
    u : array_like
        Values of the lattice function (any shape).
    p : float
        Primary exponent, p >= 1.
    r : float
        Secondary exponent in [1, inf].
    counts : array_like, optional
        Multiplicity of each value, for data stored up to symmetry.
    """
    if p < 1 or not (r >= 1):
        raise ValueError("need p >= 1 and r >= 1")
    a = np.abs(np.asarray(u)).ravel()
    m = np.ones_like(a) if counts is None else np.asarray(counts, float).ravel()
    if not np.all(np.isfinite(a)):
        raise NormNotComputableError("norm not computable from finite data")
    keep = (a > 0) & (m > 0)
    a, m = a[keep], m[keep]
    if a.size == 0:
        return 0.0
    vals, inv = np.unique(-a, return_inverse=True)
    b = -vals
    mult = np.bincount(inv.ravel(), weights=m)
    K = np.cumsum(mult)
    if np.isinf(r):
        return float(np.max(b * K ** (1.0 / p)))
    b_next = np.append(b[1:], 0.0)
    s = np.sum(K ** (r / p) * (b**r - b_next**r))
    return float((p / r * s) ** (1.0 / r))


def _sum_of_squares_counts(d, n_max):
    """Number of x in Z^d with |x|^2 = n, for n = 0..n_max."""
    one = np.zeros(n_max + 1)
    k = np.arange(int(math.isqrt(n_max)) + 1)
    one[k**2] = np.where(k == 0, 1.0, 2.0)
    out = one.copy()
    for _ in range(d - 1):
        n = 2 * out.size
        full = np.fft.irfft(np.fft.rfft(out, n) * np.fft.rfft(one, n), n)
        out = np.rint(full[: n_max + 1])
    return out


def potential_lorentz_norm(V, d, p, r=np.inf, radius=None, rtol=1e-4, max_radius=1024):
    """Lorentz norm of a potential on Z^d.

    Finitely supported potentials are summed exactly.  Otherwise a finite
    ``radius`` truncates to the box of that radius.  With ``radius=None``
    the full-lattice norm is requested: radial power decay is evaluated on
    growing balls through exact lattice-point counts on spheres, and the
    request fails when the values do not decay or the sequence of
    truncations does not settle to ``rtol``.
    """
    if V.finite_support:
        sup = V.support()
        return lorentz_norm(V.evaluate(sup), p, r) if len(sup) else 0.0
    if radius is not None:
        return lorentz_norm(V.on_box(LatticeBox(d, int(radius))), p, r)
    if not isinstance(V, PowerDecay) or V.alpha <= 0:
        raise NormNotComputableError("norm not computable from finite data")
    if V.amplitude == 0:
        return 0.0
    critical = math.isclose(V.alpha * p, d, rel_tol=1e-12)
    if V.alpha * p < d or (critical and r < np.inf):
        raise NormNotComputableError(
            "norm not computable from finite data: l^p-type norm of "
            f"(1+|x|)^-{V.alpha} diverges for p={p}, r={r} in d={d}")
    # At the critical decay the weak norm is approached only as |x| -> inf:
    # #{|x| < rho} ~ omega_d rho^d gives the limit A omega_d^(1/p), and
    # #{|x| < rho} <= omega_d (rho + sqrt(d)/2)^d bounds the tail.
    omega = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    limit = V.amplitude * omega ** (1.0 / p)
    prev = None
    rad = 16
    while rad <= max_radius:
        n_max = rad * rad
        counts = _sum_of_squares_counts(d, n_max)
        n = np.nonzero(counts)[0]
        val = lorentz_norm(np.abs(V.radial_value(np.sqrt(n))), p, r, counts=counts[n])
        if critical:
            val = max(val, limit)
            tail = limit * max(1.0, (rad + math.sqrt(d) / 2) / (1.0 + rad)) ** V.alpha
            if tail - val <= rtol * val:
                return val
        elif prev is not None and abs(val - prev) <= rtol * val:
            return val
        prev = val
        rad *= 2
    raise NormNotComputableError(
        "norm not computable from finite data: truncations did not settle "
        f"within radius {max_radius}")


def write_lattice_csv(path, box, values):
    """Write a lattice function as CSV rows (x1..xd, re, im)."""
    values = np.asarray(values).reshape(box.shape)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(box.d)] + ["re", "im"])
        for site, v in zip(box.sites(), values.ravel()):
            v = complex(v)
            w.writerow([*map(int, site), repr(float(v.real)), repr(float(v.imag))])
