"""Birman-Schwinger matrices, their norms and sweeps toward the spectrum.

For a potential V the Birman-Schwinger operator is

    K(z) = |V|^{1/2} (H0 - z)^{-1} |V|^{1/2},

and the uniform bound sup_{z not in R} ||K(z)|| < inf is what the sweeps
below probe on a finite box.  Finitely supported potentials give small
dense matrices; decaying potentials are handled matrix-free by FFT
convolution with the kernel on the doubled box.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ._linalg import DENSE_LIMIT, dense_norm, largest_singular_value
from .lattice_core import ComplexEnergy, LatticeBox, threshold_energies
from .resolvent import (
    KernelOperator,
    _as_energy,
    _fit_slope,
    free_kernel,
    free_kernels,
    green_values,
)

DIVERGENT_SLOPE = -0.2
DIVERGENT_RESIDUAL = 0.1
BOUNDED_RATIO = 2.0


class NoUniformMarginError(ValueError):
    """The sweep does not support a uniform Birman-Schwinger bound."""


@dataclass
class BSMatrix:
    """K_xy = w_left(x) G0(x - y; z) w_right(y) on the active sites of a box.

    Either ``matrix`` holds the dense entries (sites where the weight
    vanishes are dropped), or ``operator`` applies K on the whole box.
    """

    z: ComplexEnergy
    box: LatticeBox
    sites: np.ndarray = field(repr=False)
    matrix: np.ndarray | None = field(default=None, repr=False)
    operator: KernelOperator | None = field(default=None, repr=False)
    hermitian: bool = False
    _norm: float | None = field(default=None, repr=False)

    @property
    def shape(self):
        if self.matrix is not None:
            return self.matrix.shape
        return self.operator.shape

    def dense(self):
        if self.matrix is not None:
            return self.matrix
        return self.operator.dense()

    def matvec(self, u):
        if self.matrix is not None:
            return self.matrix @ u
        return self.operator.matvec(u)

    def rmatvec(self, v):
        if self.matrix is not None:
            return self.matrix.conj().T @ v
        return self.operator.rmatvec(v)


def _dense_bs(sites, weights, z, d):
    diffs = sites[:, None, :] - sites[None, :, :]
    flat = diffs.reshape(-1, d)
    uniq, inv = np.unique(np.sort(np.abs(flat), axis=1), axis=0, return_inverse=True)
    g = green_values(uniq, z)[inv.ravel()].reshape(len(sites), len(sites))
    return weights[:, None] * g * weights[None, :]


def bs_matrix(V, z, box, kernel=None, grid=None, method="auto", single=False, workers=None):
    """Assemble the Birman-Schwinger matrix of V on ``box``.

    Parameters
    ----------
    V : Potential
    z : ComplexEnergy or complex
        Off the spectrum [0, 4d].
    box : LatticeBox
    kernel : ResolventKernel, optional
        Precomputed kernel on the box of radius 2R.
    grid : TorusGrid, optional
        Forces the FFT kernel on this grid.
    """
    z = _as_energy(z)
    d = box.d
    if z.on_spectrum(d):
        raise ValueError(f"z = {z.z} lies on the spectrum [0, {4 * d}]")
    w = V.weight_on_box(box)
    active = w.ravel() != 0
    sites = box.sites()[active]
    hermitian = z.eps == 0
    if active.sum() == 0:
        return BSMatrix(z, box, sites, np.zeros((0, 0), complex), None, hermitian, 0.0)
    if active.sum() <= DENSE_LIMIT:
        if kernel is None and grid is None and method == "auto":
            mat = _dense_bs(sites, w.ravel()[active], z, d)
        else:
            if kernel is None:
                span = int(np.max(np.abs(sites[:, None, :] - sites[None, :, :]))) if len(sites) > 1 else 0
                kernel = free_kernel(LatticeBox(d, span), z, grid=grid, method=method)
            diff = sites[:, None, :] - sites[None, :, :] + kernel.box.R
            g = kernel.values[tuple(np.moveaxis(diff, -1, 0))]
            ww = w.ravel()[active]
            mat = ww[:, None] * g * ww[None, :]
        return BSMatrix(z, box, sites, mat, None, hermitian)
    if kernel is None:
        kernel = free_kernel(LatticeBox(d, 2 * box.R), z, grid=grid, method=method)
    op = KernelOperator(box, kernel, w, w, workers=workers, single=single)
    return BSMatrix(z, box, box.sites(), None, op, hermitian)


def bs_norm(K, tol=1e-8, v0=None, return_vector=False):
    """Largest singular value of a Birman-Schwinger matrix.

    Dense matrices use LAPACK; matrix-free ones use restarted Lanczos on
    K^H K to relative tolerance ``tol``.
    """
    if K.matrix is not None:
        val = dense_norm(K.matrix)
        vec = None
    elif K.shape[1] <= DENSE_LIMIT:
        val, vec = dense_norm(K.dense()), None
    else:
        val, vec = largest_singular_value(K.matvec, K.rmatvec, K.shape[1], tol=tol, v0=v0)
    K._norm = val
    return (val, vec) if return_vector else val


def default_mu_grid(d):
    """Uniform points over [-1, 4d+1] plus every threshold energy."""
    base = np.linspace(-1.0, 4.0 * d + 1.0, 2 * d + 2)
    pts = np.union1d(np.round(base, 12), threshold_energies(d))
    return [float(m) for m in pts]


def default_eps_ladder():
    """10^-1, 10^-1.5, ..., 10^-3."""
    return [float(10.0 ** (-k / 2)) for k in range(2, 7)]


@dataclass(frozen=True)
class SweepReport:
    """Norms of K(mu + i eps) over a grid and the resulting verdict.

    ``norms[i][k]`` belongs to ``mu_values[i]`` and ``eps_ladder[k]``.
    ``sup_per_eps[k]`` is the maximum over mu at eps_k, ``running_sup``
    the maximum over all rungs down to eps_k.  The verdict is read from
    sup_per_eps: ``divergent`` if its log-log slope against eps is below
    -0.2 with RMS residual below 0.1, ``bounded`` if max/min <= 2,
    ``inconclusive`` otherwise.
    """

    d: int
    R: int
    potential: dict
    mu_values: tuple
    eps_ladder: tuple
    norms: tuple
    sup_per_eps: tuple
    argmax_mu: tuple
    running_sup: tuple
    mu_slopes: tuple
    sup_slope: float
    sup_residual: float
    ratio: float
    verdict: str
    tail_bound: float | None
    tol: float

    @property
    def sup(self):
        return max(self.sup_per_eps)

    def to_json(self):
        return {
            "d": self.d, "R": self.R, "potential": self.potential,
            "mu_values": list(self.mu_values), "eps_ladder": list(self.eps_ladder),
            "norms": [list(r) for r in self.norms],
            "sup_per_eps": list(self.sup_per_eps), "argmax_mu": list(self.argmax_mu),
            "running_sup": list(self.running_sup), "mu_slopes": list(self.mu_slopes),
            "sup_slope": self.sup_slope, "sup_residual": self.sup_residual,
            "ratio": self.ratio, "verdict": self.verdict, "tail_bound": self.tail_bound,
            "tol": self.tol,
            "thresholds": {"divergent_slope": DIVERGENT_SLOPE,
                           "divergent_residual": DIVERGENT_RESIDUAL,
                           "bounded_ratio": BOUNDED_RATIO},
        }

    @classmethod
    def from_json(cls, data):
        """Inverse of :meth:`to_json`."""
        return cls(int(data["d"]), int(data["R"]), data["potential"],
                   tuple(data["mu_values"]), tuple(data["eps_ladder"]),
                   tuple(tuple(r) for r in data["norms"]), tuple(data["sup_per_eps"]),
                   tuple(data["argmax_mu"]), tuple(data["running_sup"]),
                   tuple(data["mu_slopes"]), data["sup_slope"], data["sup_residual"],
                   data["ratio"], data["verdict"], data["tail_bound"], data["tol"])

    def verdict_table(self):
        """Plain-text table of sup norms per eps followed by the verdict."""
        pot = json.dumps(self.potential, sort_keys=True)
        lines = [f"d={self.d} R={self.R} potential={pot}",
                 f"{'eps':>12} {'sup_mu ||K||':>14} {'argmax mu':>10} {'running sup':>12}"]
        for e, s, a, r in zip(self.eps_ladder, self.sup_per_eps, self.argmax_mu,
                              self.running_sup):
            lines.append(f"{e:12.4g} {s:14.6g} {a:10.4g} {r:12.6g}")
        lines.append(f"slope={self.sup_slope:.4f} residual={self.sup_residual:.4f} "
                     f"ratio={self.ratio:.4f} verdict={self.verdict}")
        return "\n".join(lines)

    def write_csv(self, path):
        """Rows (mu, eps, norm, slope); slope is the per-mu fit."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mu", "eps", "norm", "slope"])
            for mu, row, sl in zip(self.mu_values, self.norms, self.mu_slopes):
                for eps, val in zip(self.eps_ladder, row):
                    w.writerow([repr(float(v)) for v in (mu, eps, val, sl)])


def classify(sup_per_eps, eps_ladder):
    """Apply the verdict rule; returns (verdict, slope, residual, ratio)."""
    s = np.asarray(sup_per_eps, float)
    e = np.asarray(eps_ladder, float)
    slope, _, resid = _fit_slope(np.log(e), np.log(s))
    ratio = float(s.max() / s.min())
    if slope < DIVERGENT_SLOPE and resid < DIVERGENT_RESIDUAL:
        verdict = "divergent"
    elif ratio <= BOUNDED_RATIO:
        verdict = "bounded"
    else:
        verdict = "inconclusive"
    return verdict, slope, resid, ratio


def bs_sup_sweeps(potentials, box, mu_values=None, eps_ladder=None, tol=1e-6,
                  method="auto", mirror=True, single=False, workers=None, log=None):
    """Sweep several potentials over one (mu, eps) grid, sharing kernels.

    With ``mirror`` the symmetry ||K(mu + i eps)|| = ||K(4d - mu + i eps)||
    (from G0(x; z) = -(-1)^{|x|} conj G0(x; 4d - conj z)) evaluates only
    mu <= 2d.  Lanczos runs are warm-started from the previous rung of
    the ladder at the same mu.
    """
    d = box.d
    mu_values = default_mu_grid(d) if mu_values is None else [float(m) for m in mu_values]
    eps_ladder = default_eps_ladder() if eps_ladder is None else [float(e) for e in eps_ladder]
    if any(e <= 0 for e in eps_ladder):
        raise ValueError("eps ladder must be positive")
    order = np.argsort(eps_ladder)[::-1]
    canon = {}
    for mu in mu_values:
        c = min(mu, 4 * d - mu) if mirror else mu
        canon[mu] = round(c, 12)
    cmus = sorted(set(canon.values()))
    weights = [V.weight_on_box(box) for V in potentials]
    results = [dict() for _ in potentials]
    starts = [dict() for _ in potentials]
    colsum = 0.0
    big = LatticeBox(d, 2 * box.R)
    for k in order:
        eps = eps_ladder[k]
        t0 = time.time()
        need_kernel = any(np.count_nonzero(w) > DENSE_LIMIT for w in weights)
        kernels = (free_kernels(big, [ComplexEnergy(m, eps) for m in cmus], method=method)
                   if need_kernel else [None] * len(cmus))
        for mu, kern in zip(cmus, kernels):
            if kern is not None:
                colsum = max(colsum, float(np.sum(np.abs(kern.values))))
            for p, V in enumerate(potentials):
                K = bs_matrix(V, ComplexEnergy(mu, eps), box, kernel=kern, single=single,
                              workers=workers)
                val, vec = bs_norm(K, tol=tol, v0=starts[p].get(mu), return_vector=True)
                results[p][(mu, k)] = val
                if vec is not None:
                    starts[p][mu] = vec
        del kernels
        if log is not None:
            log(f"eps={eps:.3g} done in {time.time() - t0:.1f}s")
    reports = []
    for p, V in enumerate(potentials):
        norms = [[results[p][(canon[mu], k)] for k in range(len(eps_ladder))] for mu in mu_values]
        reports.append(_make_report(V, box, mu_values, eps_ladder, norms, colsum, tol))
    return reports


def bs_sup_sweep(V, box, mu_values=None, eps_ladder=None, tol=1e-6, method="auto",
                 mirror=True, single=False, workers=None, log=None):
    """Sweep ||K(mu + i eps)|| over a grid and classify the supremum.

    Parameters
    ----------
    V : Potential
    box : LatticeBox
        Truncation box; infinite-support V is cut at its edge.
    mu_values : sequence of float, optional
        Defaults to :func:`default_mu_grid`.
    eps_ladder : sequence of float, optional
        Defaults to :func:`default_eps_ladder`.
    tol : float
        Relative tolerance of each norm.

    Returns
    -------
    SweepReport
    """
    return bs_sup_sweeps([V], box, mu_values, eps_ladder, tol, method, mirror, single,
                         workers, log)[0]


def _tail_bound(V, box, colsum):
    amp = getattr(V, "amplitude", None)
    alpha = getattr(V, "alpha", None)
    if amp is None or alpha is None or colsum == 0.0:
        return None
    return float(amp * (1.0 + box.R) ** (-alpha) * colsum)


def _make_report(V, box, mu_values, eps_ladder, norms, colsum, tol):
    arr = np.asarray(norms)
    sup_eps = arr.max(axis=0)
    arg = [mu_values[i] for i in arr.argmax(axis=0)]
    order = np.argsort(eps_ladder)[::-1]
    running = np.empty_like(sup_eps)
    cur = 0.0
    for k in order:
        cur = max(cur, sup_eps[k])
        running[k] = cur
    loge = np.log(np.asarray(eps_ladder))
    slopes = []
    for row in arr:
        slopes.append(_fit_slope(loge, np.log(row))[0] if np.all(row > 0) else 0.0)
    if np.all(sup_eps > 0):
        verdict, slope, resid, ratio = classify(sup_eps, eps_ladder)
    else:
        verdict, slope, resid, ratio = "bounded", 0.0, 0.0, 1.0
    if not V.finite_support:
        tail = _tail_bound(V, box, colsum)
    else:
        tail = 0.0
    return SweepReport(box.d, box.R, V.to_json(), tuple(mu_values), tuple(eps_ladder),
                       tuple(tuple(map(float, r)) for r in arr), tuple(map(float, sup_eps)),
                       tuple(arg), tuple(map(float, running)), tuple(slopes), slope, resid,
                       ratio, verdict, tail, tol)


def weak_coupling_margin(V, sweep):
    """lambda* = 1 / sup ||K||; below it lambda K never has eigenvalue 1.

    Raises
    ------
    NoUniformMarginError
        When the sweep verdict is not ``bounded``.
    """
    if sweep.verdict != "bounded":
        raise NoUniformMarginError(f"no uniform margin exists (sweep {sweep.verdict})")
    if V is not None and V.to_json() != sweep.potential:
        raise ValueError("sweep was run for a different potential")
    s = sweep.sup
    return float("inf") if s == 0 else 1.0 / s


def bs_bound_states(V, lam, d, e_min=None, xtol=1e-14):
    """Eigenvalues below 0 of H0 + lam V for finitely supported V <= 0, lam > 0.

    E < 0 is an eigenvalue exactly when lam K(E) has eigenvalue 1.  Each
    eigenvalue nu_k(E) of lam K(E) increases with E, so the roots are
    bracketed between the lower bound -lam max|V| and 0.
    """
    if not V.finite_support:
        raise ValueError("needs a finitely supported potential")
    sites = V.support()
    vals = V.evaluate(sites)
    if lam <= 0 or np.any(vals > 0):
        raise ValueError("needs lam > 0 and V <= 0")
    w = np.sqrt(np.abs(vals))
    lo = -lam * float(np.max(np.abs(vals))) - 1.0 if e_min is None else e_min

    def nus(E):
        M = lam * _dense_bs(sites, w, ComplexEnergy(E, 0.0), d).real
        return np.linalg.eigvalsh(0.5 * (M + M.T))

    hi = -1e-10
    top = nus(hi)
    roots = []
    for k in range(len(sites)):
        if top[k] <= 1.0:
            continue
        f = lambda E, k=k: nus(E)[k] - 1.0
        if f(lo) > 0:
            continue
        roots.append(brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps))
    return sorted(roots)
