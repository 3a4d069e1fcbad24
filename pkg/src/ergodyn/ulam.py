"""Finite Markov-chain approximations of interval maps (Ulam's method).

The unit interval is cut into cells ``S_i`` and the map is replaced by the
chain with ``p_ij = m(T^-1 S_j ∩ S_i) / m(S_i)``.  Entries come either from
exact branch preimages or from stratified Monte Carlo sampling.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, UnsupportedMapError
from .maps import PiecewiseMap
from .markov import StochasticMatrix
from .measures import CellDensity, transfer_operator, uniform_partition, w1_distance

log = logging.getLogger(__name__)

MC_ROW_TOL = 1e-3


@dataclass
class UlamApproximation:
    """Ulam chain of a map on a partition.

    ``raw_row_sums`` holds the row sums before renormalization (Monte Carlo
    rows are exact counts, so they already sum to 1 up to rounding).
    """

    partition: np.ndarray
    matrix: StochasticMatrix
    method: str
    samples: Optional[int] = None
    seed: Optional[int] = None
    raw_row_sums: Optional[np.ndarray] = None

    @property
    def W(self) -> int:
        return len(self.partition) - 1

    def dense(self) -> np.ndarray:
        return self.matrix.dense()


def ulam_matrix(m: PiecewiseMap, W: Optional[int] = None, method: str = "exact",
                samples: int = 10**6, seed: int = 0, partition=None) -> UlamApproximation:
    """Ulam transition matrix of ``m``.

    Parameters
    ----------
    m : PiecewiseMap
    W : int, optional
        Number of equal cells; ignored when ``partition`` is given.
    method : {"exact", "monte_carlo"}
        ``exact`` integrates branch preimages; maps without monotone branches
        fall back to ``monte_carlo`` with a warning.
    samples : int
        Total Monte Carlo sample count, split evenly over the cells.
    partition : array_like, optional
        Explicit breakpoints, e.g. the refined partition of a Markov model.
    """
    if partition is None:
        if W is None or W < 2:
            raise ValueError("W must be >= 2")
        partition = uniform_partition(W)
    partition = np.asarray(partition, dtype=float)
    if method == "exact":
        try:
            M = transfer_operator(m, partition)
        except UnsupportedMapError as exc:
            warnings.warn(f"{exc}; falling back to Monte Carlo", stacklevel=2)
            method = "monte_carlo"
        else:
            return UlamApproximation(partition, StochasticMatrix(M), "exact",
                                     raw_row_sums=np.asarray(M.sum(axis=1)).ravel())
    if method != "monte_carlo":
        raise ValueError(f"unknown method {method!r}")
    return _ulam_mc(m, partition, samples, seed)


def _ulam_mc(m: PiecewiseMap, partition: np.ndarray, samples: int, seed: int) -> UlamApproximation:
    # stratified sampling: each cell gets n_per jittered points, one per sub-slot
    W = len(partition) - 1
    n_per = max(1, samples // W)
    rng = np.random.default_rng(seed)
    rows, cols, vals = [], [], []
    lengths = np.diff(partition)
    slots = (np.arange(n_per) + 0.5) / n_per
    for i in range(W):
        u = slots + (rng.random(n_per) - 0.5) / n_per
        x = partition[i] + np.clip(u, 0.0, np.nextafter(1.0, 0.0)) * lengths[i]
        y = m.eval_array(x)
        j = np.clip(np.searchsorted(partition, y, side="right") - 1, 0, W - 1)
        c = np.bincount(j, minlength=W)
        nz = np.nonzero(c)[0]
        rows.append(np.full(len(nz), i))
        cols.append(nz)
        vals.append(c[nz] / n_per)
    M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(W, W))
    raw = np.asarray(M.sum(axis=1)).ravel()
    log.debug("Monte Carlo Ulam raw row sums in [%g, %g]", raw.min(), raw.max())
    M = sp.diags(1.0 / raw) @ M
    return UlamApproximation(partition, StochasticMatrix(M, tol=MC_ROW_TOL), "monte_carlo",
                             samples=n_per * W, seed=seed, raw_row_sums=raw)


@dataclass
class StationaryResult:
    """Outcome of :func:`stationary`.

    ``unique`` is False when restarts from random points of the simplex end
    at vectors more than ``10 * tol`` apart (in L1).
    """

    vector: np.ndarray
    residual: float
    iterations: int
    unique: Optional[bool] = None
    spread: float = 0.0
    restarts_unconverged: int = 0


def _as_csr(P):
    if isinstance(P, StochasticMatrix):
        return P.csr
    if isinstance(P, UlamApproximation):
        return P.matrix.csr
    return sp.csr_matrix(np.asarray(P, dtype=float) if not sp.issparse(P) else P)


def _power(PT, v, tol, max_iter, check_every=16):
    # lazy iteration v <- (v + vP)/2 shares fixed points with P and cannot cycle
    resid = np.inf
    for it in range(1, max_iter + 1):
        w = PT @ v
        if it == 1 or it % check_every == 0:
            resid = float(np.abs(w - v).sum())
            if resid < tol:
                return v, resid, it
        v = 0.5 * (v + w)
        v /= v.sum()
    w = PT @ v
    resid = float(np.abs(w - v).sum())
    return v, resid, max_iter


def stationary(P, tol: float = 1e-12, max_iter: int = 10**6, check_unique: bool = True,
               n_restarts: int = 20, seed: int = 0, v0=None) -> StationaryResult:
    """Stationary vector of a row-stochastic matrix by power iteration.

    Starts from the uniform vector (or ``v0``) and returns ``v`` with
    ``|vP - v|_1 < tol``.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` iterations do not reach ``tol``; carries the residual.
    """
    PT = _as_csr(P).T.tocsr()
    n = PT.shape[0]
    v = np.full(n, 1.0 / n) if v0 is None else np.asarray(v0, dtype=float).copy()
    v, resid, it = _power(PT, v, tol, max_iter)
    if resid >= tol:
        raise ConvergenceError(f"no stationary vector within {max_iter} iterations", resid)
    result = StationaryResult(v, resid, it)
    if check_unique:
        rng = np.random.default_rng(seed)
        ends = [v]
        bad = 0
        for _ in range(n_restarts):
            r, rr, _ = _power(PT, rng.dirichlet(np.ones(n)), tol, max_iter)
            if rr >= tol:
                bad += 1
                continue
            ends.append(r)
        spread = max(float(np.abs(e - v).sum()) for e in ends)
        result.spread = spread
        result.unique = spread <= 10 * tol
        result.restarts_unconverged = bad
    return result


def stationary_direct(P) -> np.ndarray:
    """Dense least-squares solve of ``v (P - I) = 0``, ``sum v = 1`` (small chains)."""
    A = _as_csr(P).toarray()
    n = A.shape[0]
    lhs = np.vstack([(A - np.eye(n)).T, np.ones(n)])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    v, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    return v


def ulam_invariant_density(m: PiecewiseMap, W: Optional[int] = None, partition=None,
                           tol: float = 1e-12, max_iter: int = 10**6, full: bool = False,
                           **kwargs):
    """Stationary vector of the Ulam chain read as a piecewise-uniform density.

    With ``full=True`` returns ``(density, StationaryResult)``.
    """
    approx = ulam_matrix(m, W, partition=partition, **kwargs)
    res = stationary(approx.matrix, tol=tol, max_iter=max_iter)
    mass = np.clip(res.vector, 0.0, None)
    dens = CellDensity(approx.partition, mass / mass.sum())
    return (dens, res) if full else dens


@dataclass
class RefinementStudy:
    W: list
    w1: list
    monotone: bool = field(default=False)


def refinement_study(m: PiecewiseMap, Ws: Sequence[int], reference, noise: float = 1e-9,
                     **kwargs) -> RefinementStudy:
    """W1 distance between the Ulam density and ``reference`` for each ``W``.

    ``monotone`` reports whether the error is nonincreasing in ``W`` up to
    ``noise``.
    """
    Ws = sorted(Ws)
    errs = [w1_distance(ulam_invariant_density(m, W, **kwargs), reference) for W in Ws]
    mono = all(b <= a + noise for a, b in zip(errs, errs[1:]))
    return RefinementStudy(list(Ws), errs, mono)
