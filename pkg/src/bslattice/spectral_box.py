"""Finite-box Hamiltonians, their eigenvalues off the band, and counting bounds.

H + W = H0 + lam V + W is truncated to a Dirichlet (or periodic) box.  The
band [0, 4d] fills with box states, but eigenvalues outside it localise
and converge exponentially in the box size.  The counting bounds checked
here say that a finitely supported W adds at most #{W != 0} to any kernel
dimension, at most #{W < 0} eigenvalues below the band and at most
#{W > 0} above it.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice_core import LatticeBox, Potential, Table

EDGE_TOL = 1e-8
EIG_TOL = 1e-10
DENSE_EIG_LIMIT = 2000


class BoxMarginError(ValueError):
    """W reaches into the boundary layer of the box."""


@dataclass(frozen=True)
class CountRange:
    """A multiplicity that a tolerance cluster leaves ambiguous."""

    low: int
    high: int

    def __int__(self):
        return self.high

    def to_json(self):
        return {"low": self.low, "high": self.high}


@dataclass
class BoxHamiltonian:
    """H0 + lam V + W on a box, assembled as a sparse symmetric matrix."""

    box: LatticeBox
    bc: str
    lam: float
    V: Potential | None
    W: Table | None
    matrix: sp.csr_matrix = field(repr=False)
    _outside: object = field(default=None, repr=False, compare=False)

    @property
    def d(self):
        return self.box.d

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def band(self):
        return 0.0, 4.0 * self.box.d

    def norm_bound(self):
        """Gershgorin bound on ||H||."""
        return float(abs(self.matrix).sum(axis=1).max())

    def write_coo(self, path):
        """Write 'row col value' lines (0-based) for external cross-checks."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w") as fh:
            fh.write(f"% {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
            for i in order:
                fh.write(f"{coo.row[i]} {coo.col[i]} {float(coo.data[i])!r}\n")


def laplacian_1d(n, bc="dirichlet"):
    """Second difference 2 - shift - shift^T on n points."""
    off = -np.ones(n - 1)
    m = sp.diags([off, 2.0 * np.ones(n), off], [-1, 0, 1], format="lil")
    if bc == "periodic" and n > 2:
        m[0, n - 1] = -1.0
        m[n - 1, 0] = -1.0
    elif bc not in ("dirichlet", "periodic"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    return m.tocsr()


def build_hamiltonian(box, bc="dirichlet", V=None, lam=0.0, W=None):
    """Assemble H0 + lam V + W on ``box``.

    Parameters
    ----------
    box : LatticeBox
    bc : {'dirichlet', 'periodic'}
    V : Potential, optional
        Background potential, evaluated on every site.
    lam : float
        Coupling of V.
    W : Table, optional
        Finitely supported perturbation.  Its support must stay at least
        R/2 away from the box boundary.

    Returns
    -------
    BoxHamiltonian
    """
    d, side = box.d, box.side
    if W is not None and W.count("nonzero"):
        supp = W.support()
        if np.max(np.abs(supp)) > box.R - box.R / 2:
            raise BoxMarginError(
                f"support of W reaches |x|_inf = {int(np.max(np.abs(supp)))}, "
                f"closer than R/2 = {box.R / 2} to the boundary of the box of radius {box.R}")
    lap = laplacian_1d(side, bc)
    eye = sp.identity(side, format="csr")
    H = sp.csr_matrix((box.size, box.size))
    for j in range(d):
        term = None
        for k in range(d):
            f = lap if k == j else eye
            term = f if term is None else sp.kron(term, f, format="csr")
        H = H + term
    diag = np.zeros(box.size)
    if V is not None and lam != 0:
        diag += lam * V.on_box(box).ravel()
    if W is not None:
        diag += W.on_box(box).ravel()
    if np.any(diag):
        H = H + sp.diags(diag)
    H = sp.csr_matrix(H)
    H.sum_duplicates()
    H.eliminate_zeros()
    return BoxHamiltonian(box, bc, float(lam), V, W, H)


def _extreme_eigs(H, below, k_start=4):
    """Eigenvalues of H below 0 (or above 4d) by shift-invert with growing k."""
    n = H.shape[0]
    lo, hi = 0.0, 4.0 * (H.box.d)
    if n <= DENSE_EIG_LIMIT:
        ev = np.linalg.eigvalsh(H.matrix.toarray())
        return ev[ev < lo + EDGE_TOL] if below else ev[ev > hi - EDGE_TOL]
    # Gershgorin shows nothing lies beyond the extreme diagonal +- 2d.
    diag = H.matrix.diagonal()
    if below and diag.min() - 2 * H.box.d >= lo:
        return np.zeros(0)
    if not below and diag.max() + 2 * H.box.d <= hi:
        return np.zeros(0)
    A = H.matrix if below else -H.matrix
    edge = lo if below else -hi
    k = k_start
    while True:
        k = min(k, n - 2)
        vals = spla.eigsh(A, k=k, which="SA", tol=EIG_TOL, v0=np.ones(n))[0]
        vals = np.sort(vals)
        if vals[-1] >= edge + EDGE_TOL or k == n - 2:
            inside = vals[vals < edge + EDGE_TOL]
            return inside if below else np.sort(-inside)
        k *= 2


def _group(vals, tol):
    """Cluster sorted eigenvalues; returns (value, multiplicity) pairs."""
    out = []
    i = 0
    vals = np.sort(np.asarray(vals))
    while i < len(vals):
        j = i + 1
        while j < len(vals) and vals[j] - vals[j - 1] <= tol:
            j += 1
        out.append((float(np.mean(vals[i:j])), j - i))
        i = j
    return out


@dataclass(frozen=True)
class OutsideSpectrum:
    """Eigenvalues of a box Hamiltonian off the band [0, 4d].

    ``below`` and ``above`` are (value, multiplicity) pairs; ``edge``
    lists eigenvalues within EDGE_TOL of 0 or 4d, which are not
    classified.
    """

    below: tuple
    above: tuple
    edge: tuple
    raw_below: tuple = ()
    raw_above: tuple = ()

    def values(self):
        return [v for v, m in self.below for _ in range(m)] + [
            v for v, m in self.above for _ in range(m)]

    def count_below(self):
        return sum(m for _, m in self.below)

    def count_above(self):
        return sum(m for _, m in self.above)

    def __iter__(self):
        return iter(self.below + self.above)

    def __len__(self):
        return len(self.below) + len(self.above)


def eig_outside(H, tol=EIG_TOL):
    """All eigenvalues of H in (-inf, 0) and (4d, inf) with multiplicities.

    Eigenvalues within 1e-8 of a band edge are returned in ``edge`` and
    left out of the counts.
    """
    if H._outside is not None and H._outside[0] == tol:
        return H._outside[1]
    lo, hi = H.band
    below = _extreme_eigs(H, True)
    above = _extreme_eigs(H, False)
    edge = [float(v) for v in np.concatenate([below, above])
            if abs(v - lo) <= EDGE_TOL or abs(v - hi) <= EDGE_TOL]
    below = below[below < lo - EDGE_TOL]
    above = above[above > hi + EDGE_TOL]
    out = OutsideSpectrum(tuple(_group(below, tol)), tuple(_group(above, tol)), tuple(edge),
                          tuple(map(float, below)), tuple(map(float, above)))
    H._outside = (tol, out)
    return out


def kernel_dim(H, mu, tol=None):
    """Number of eigenvalues of H within ``tol`` of ``mu``.

    ``tol`` defaults to 1e-8 times the Gershgorin bound of ||H||.  When
    neighbouring eigenvalues sit between tol and 10 tol from mu the count
    is ambiguous and a :class:`CountRange` is returned.
    """
    if tol is None:
        tol = 1e-8 * H.norm_bound()
    n = H.shape[0]
    lo, hi = H.band
    if mu < lo - 11 * tol or mu > hi + 11 * tol:
        # Everything within 10 tol of mu is off the band, where the full
        # spectrum is already known.
        out = eig_outside(H)
        ev = np.array(out.raw_below + out.raw_above)
    elif n <= DENSE_EIG_LIMIT:
        ev = np.linalg.eigvalsh(H.matrix.toarray())
    else:
        k = 6
        while True:
            k = min(k, n - 2)
            ev = spla.eigsh(H.matrix, k=k, sigma=mu, which="LM", tol=EIG_TOL * 1e-2,
                            v0=np.ones(n))[0]
            if np.max(np.abs(ev - mu)) > 10 * tol or k == n - 2:
                break
            k *= 2
    dist = np.abs(ev - mu)
    low = int(np.sum(dist <= tol))
    high = int(np.sum(dist <= 10 * tol))
    return low if low == high else CountRange(low, high)


@dataclass(frozen=True)
class CountingCertificate:
    """One counting bound checked on one box Hamiltonian."""

    check: str
    where: object
    multiplicity: object
    bound: int
    passed: bool
    trial: int
    hypothesis: str

    def to_json(self):
        m = self.multiplicity
        return {"check": self.check, "where": self.where,
                "multiplicity": m.to_json() if isinstance(m, CountRange) else m,
                "bound": self.bound, "pass": self.passed, "trial": self.trial,
                "hypothesis": self.hypothesis}


def _certify(check, where, mult, bound, trial, hyp):
    high = mult.high if isinstance(mult, CountRange) else mult
    return CountingCertificate(check, where, mult, int(bound), bool(high <= bound), trial, hyp)


def random_table(d, rng, max_support=5, radius=2, scale=5.0):
    """Random W with 1..max_support sites in [-radius, radius]^d."""
    n = int(rng.integers(1, max_support + 1))
    side = 2 * radius + 1
    cells = rng.choice(side ** d, size=n, replace=False)
    sites = np.stack(np.unravel_index(cells, (side,) * d), axis=-1) - radius
    vals = rng.uniform(-scale, scale, size=n)
    return Table.from_dict({tuple(int(c) for c in s): float(v) for s, v in zip(sites, vals)})


def certify_hamiltonian(H, W, trial=0, mu_samples=(), hypothesis="lambda=0: H0 has no eigenvalues"):
    """Counting certificates for one assembled H + W."""
    out = eig_outside(H)
    certs = [
        _certify("below", [-np.inf, 0.0], out.count_below(), W.count("negative"), trial, hypothesis),
        _certify("above", [4.0 * H.d, np.inf], out.count_above(), W.count("positive"), trial,
                 hypothesis),
    ]
    points = [v for v, _ in out] + list(mu_samples)
    for mu in points:
        certs.append(_certify("kernel", float(mu), kernel_dim(H, mu), W.count("nonzero"), trial,
                              hypothesis))
    return certs


def counting_check(V, lam, W=None, trials=1, box=None, seed=0, margin=None, bc="dirichlet",
                   mu_samples=None):
    """Check the counting bounds on random or given finitely supported W.

    Parameters
    ----------
    V : Potential or None
        Background potential of H = H0 + lam V.
    lam : float
    W : Table or None
        If None, ``trials`` random tables with at most 5 sites are drawn.
    box : LatticeBox
    margin : float, optional
        Weak-coupling margin of V.  Without it the hypothesis that H has
        no eigenvalues is only established for lam = 0 or V = None.
    mu_samples : sequence of float, optional
        Extra energies outside the band where kernel dimensions are
        checked; defaults to (-1, 4d + 1).

    Returns
    -------
    list of CountingCertificate
    """
    if box is None:
        raise ValueError("a box is required")
    d = box.d
    if lam == 0 or V is None:
        hyp = "lambda=0: H0 has no eigenvalues"
    elif margin is not None and abs(lam) < margin:
        hyp = f"|lambda| below weak-coupling margin {margin!r}"
    else:
        hyp = "not established"
        warnings.warn("hypothesis of the counting bound not established", stacklevel=2)
    if mu_samples is None:
        mu_samples = (-1.0, 4.0 * d + 1.0)
    rng = np.random.default_rng(seed)
    certs = []
    for t in range(trials):
        Wt = W if W is not None else random_table(d, rng)
        H = build_hamiltonian(box, bc, V, lam, Wt)
        certs.extend(certify_hamiltonian(H, Wt, t, mu_samples, hyp))
    return certs


def write_certificates(path, certs):
    """One JSON object per line."""
    with open(path, "w") as fh:
        for c in certs:
            fh.write(json.dumps(c.to_json(), sort_keys=True) + "\n")
