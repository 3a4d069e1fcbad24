"""Piecewise-linear Markov maps that realize a given transition matrix.

Each state ``i`` owns an interval ``D_i``.  ``D_i`` is cut into pieces
``D_ij`` of length ``P[i, j] * |D_i|`` (one per positive entry, ordered by
the position of the target interval) and each piece is mapped affinely onto
``D_j``.  On piecewise-uniform densities the induced action of this map is
the left action ``p -> p P``.
"""

import itertools
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import InvalidChainError
from .maps import Affine, PiecewiseMap
from .measures import CellDensity, transfer_operator

ROW_TOL = 1e-12
DROP_BELOW = 1e-15


class StochasticMatrix:
    """Row-stochastic matrix stored in CSR form.

    Parameters
    ----------
    matrix : array_like or scipy.sparse matrix
        Square matrix of transition probabilities.
    tol : float
        Allowed deviation of each row sum from 1.
    """

    def __init__(self, matrix, tol: float = ROW_TOL):
        m = sp.csr_matrix(matrix, dtype=float)
        m.eliminate_zeros()
        if m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise InvalidChainError(f"matrix must be square and nonempty, got {m.shape}")
        if np.any(m.data < 0):
            raise InvalidChainError("negative transition probability")
        tiny = m.data < DROP_BELOW
        if np.any(tiny):
            warnings.warn(
                f"dropping {int(tiny.sum())} probabilities below {DROP_BELOW} (degenerate cells)",
                stacklevel=2,
            )
            m.data[tiny] = 0.0
            m.eliminate_zeros()
        sums = np.asarray(m.sum(axis=1)).ravel()
        if np.any(sums == 0):
            raise InvalidChainError(f"zero row(s): {np.nonzero(sums == 0)[0].tolist()}")
        if np.any(np.abs(sums - 1.0) > tol):
            worst = int(np.argmax(np.abs(sums - 1.0)))
            raise InvalidChainError(f"row {worst} sums to {float(sums[worst])!r}")
        m.sort_indices()
        self.csr = m

    @classmethod
    def from_triples(cls, n_states: int, triples, tol: float = ROW_TOL):
        rows, cols, vals = zip(*triples) if triples else ((), (), ())
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        if np.any((rows < 0) | (rows >= n_states) | (cols < 0) | (cols >= n_states)):
            raise InvalidChainError("state index out of range")
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=(n_states, n_states)), tol)

    @property
    def n_states(self) -> int:
        return self.csr.shape[0]

    def dense(self) -> np.ndarray:
        return self.csr.toarray()

    def row(self, i: int):
        lo, hi = self.csr.indptr[i], self.csr.indptr[i + 1]
        return self.csr.indices[lo:hi], self.csr.data[lo:hi]

    def rows(self) -> list:
        """Per-row lists of ``(column, probability)``."""
        return [list(zip(*map(np.ndarray.tolist, self.row(i)))) for i in range(self.n_states)]

    def triples(self) -> list:
        coo = self.csr.tocoo()
        return sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    @property
    def max_row_support(self) -> int:
        return int(np.diff(self.csr.indptr).max())

    def __matmul__(self, other):
        return self.csr @ other

    def __rmatmul__(self, other):
        return np.asarray(other) @ self.csr


def random_stochastic(n: int, rng: np.random.Generator, density: float = 0.5) -> StochasticMatrix:
    """Random row-stochastic matrix with about ``density * n`` entries per row."""
    a = rng.random((n, n)) * (rng.random((n, n)) < density)
    empty = a.sum(axis=1) == 0
    a[empty, rng.integers(0, n, empty.sum())] = 1.0
    a /= a.sum(axis=1, keepdims=True)
    return StochasticMatrix(a)


@dataclass(frozen=True, eq=False)
class MarkovMapModel:
    """Deterministic model of a finite Markov chain.

    Attributes
    ----------
    matrix : StochasticMatrix or None
    state_intervals : (N, 2) ndarray
        ``[lo, hi)`` of ``D_i`` for every state.
    refined_partition : ndarray
        Breakpoints of the pieces ``D_ij`` in increasing order.
    source_state, target_state : ndarray of int
        For each refined cell, the state that owns it and the state it maps onto.
    map : PiecewiseMap
        One affine branch per refined cell.
    """

    matrix: Optional[StochasticMatrix]
    state_intervals: np.ndarray
    refined_partition: np.ndarray
    source_state: np.ndarray
    target_state: np.ndarray
    map: PiecewiseMap
    meta: dict = field(default_factory=dict)

    @property
    def n_states(self) -> int:
        return len(self.state_intervals)

    @property
    def n_cells(self) -> int:
        return len(self.refined_partition) - 1

    @property
    def state_of_cell(self) -> np.ndarray:
        return self.source_state

    @property
    def cell_lengths(self) -> np.ndarray:
        return np.diff(self.refined_partition)

    @cached_property
    def transfer(self):
        """Exact transfer matrix on the refined partition."""
        return transfer_operator(self.map, self.refined_partition)

    def density(self, p) -> CellDensity:
        """Piecewise-uniform density on the refined cells with state masses ``p``."""
        p = np.asarray(p, dtype=float)
        state_len = self.state_intervals[:, 1] - self.state_intervals[:, 0]
        frac = self.cell_lengths / state_len[self.source_state]
        return CellDensity(self.refined_partition, p[self.source_state] * frac)

    @cached_property
    def _cell_fraction(self) -> np.ndarray:
        state_len = self.state_intervals[:, 1] - self.state_intervals[:, 0]
        return self.cell_lengths / state_len[self.source_state]

    @cached_property
    def _transfer_t(self):
        return self.transfer.T.tocsr()

    def lumped_step(self, p: np.ndarray) -> np.ndarray:
        """State masses after one step of the map, without validation."""
        pushed = self._transfer_t @ (p[self.source_state] * self._cell_fraction)
        return np.bincount(self.source_state, weights=pushed, minlength=self.n_states)

    def lump(self, density: CellDensity) -> np.ndarray:
        return np.bincount(self.source_state, weights=density.mass, minlength=self.n_states)


def _state_intervals(n: int, base_partition) -> np.ndarray:
    if base_partition is None:
        b = np.linspace(0.0, 1.0, n + 1)
        return np.column_stack([b[:-1], b[1:]])
    base = np.asarray(base_partition, dtype=float)
    if base.ndim == 1:
        if len(base) != n + 1:
            raise InvalidChainError(f"need {n + 1} breakpoints, got {len(base)}")
        base = np.column_stack([base[:-1], base[1:]])
    if base.shape != (n, 2) or np.any(base[:, 1] <= base[:, 0]):
        raise InvalidChainError("every state needs an interval of positive length")
    order = np.argsort(base[:, 0])
    ends = base[order]
    if ends[0, 0] != 0.0 or ends[-1, 1] != 1.0 or np.any(ends[1:, 0] != ends[:-1, 1]):
        raise InvalidChainError("state intervals must tile [0, 1]")
    return base


SLOPE_SNAP = 1e-12


def build_markov_map(P, base_partition=None) -> MarkovMapModel:
    """Compile a transition matrix into a piecewise-affine Markov map.

    Parameters
    ----------
    P : StochasticMatrix or array_like
    base_partition : array_like, optional
        Either ``N + 1`` breakpoints (state ``i`` owns the ``i``-th cell) or
        an ``(N, 2)`` array of per-state intervals tiling [0, 1].  Defaults to
        ``N`` equal cells.

    Returns
    -------
    MarkovMapModel
        Pieces of each ``D_i`` are laid out left to right by the position of
        their target interval; every branch has positive slope.
    """
    if not isinstance(P, StochasticMatrix):
        P = StochasticMatrix(P)
    n = P.n_states
    intervals = _state_intervals(n, base_partition)
    cells = []
    for i in range(n):
        cols, probs = P.row(i)
        order = np.argsort(intervals[cols, 0], kind="stable")
        cols, probs = cols[order], probs[order]
        lo, hi = intervals[i]
        cuts = lo + np.cumsum(probs) * (hi - lo)
        cuts[-1] = hi
        starts = np.concatenate([[lo], cuts[:-1]])
        for j, c0, c1 in zip(cols, starts, cuts):
            cells.append((c0, c1, i, int(j)))
    cells.sort()
    breaks = np.array([c[0] for c in cells] + [1.0])
    branches = []
    for c0, c1, _, j in cells:
        t0, t1 = intervals[j]
        slope = (t1 - t0) / (c1 - c0)
        if abs(slope - round(slope)) <= SLOPE_SNAP * slope:
            # rounding residue only; integer slopes enable exact rational orbits
            slope = float(round(slope))
        branches.append(Affine(slope, t0 - slope * c0))
    m = PiecewiseMap(breaks, branches, name="markov_model")
    return MarkovMapModel(
        matrix=P,
        state_intervals=intervals,
        refined_partition=breaks,
        source_state=np.array([c[2] for c in cells]),
        target_state=np.array([c[3] for c in cells]),
        map=m,
    )


@dataclass
class MarkovReport:
    ok: bool
    n_cells: int
    bound: Optional[int]
    violations: list

    def __bool__(self):
        return self.ok


def verify_markov(model: MarkovMapModel, tol: float = 1e-10) -> MarkovReport:
    """Check that every refined cell maps exactly onto one state interval."""
    m = model.map
    iv = model.state_intervals
    violations = []
    for k in range(m.n_branches):
        l, r = m.breakpoints[k], m.breakpoints[k + 1]
        br = m.branches[k]
        ends = sorted(float(v) for v in br(np.array([l, r])))
        err = np.abs(iv[:, 0] - ends[0]) + np.abs(iv[:, 1] - ends[1])
        j = int(np.argmin(err))
        if max(abs(iv[j, 0] - ends[0]), abs(iv[j, 1] - ends[1])) > tol:
            violations.append(f"cell {k} [{l:.6g}, {r:.6g}) maps onto "
                              f"[{ends[0]:.6g}, {ends[1]:.6g}], not a state interval")
    bound = None
    if model.matrix is not None:
        bound = model.matrix.n_states * model.matrix.max_row_support
        if model.n_cells > bound:
            violations.append(f"{model.n_cells} cells exceed N*K = {bound}")
    return MarkovReport(not violations, model.n_cells, bound, violations)


def verify_partition(m, base, tol: float = 1e-10) -> MarkovReport:
    """Markov check of an arbitrary piecewise map against base breakpoints.

    The domain is cut at the union of the map's and the base breakpoints;
    every piece must lie in one base cell and its image (one-sided limits at
    the ends) must run between base breakpoints, so each base cell maps onto
    a union of base cells.
    """
    base = np.asarray(base, dtype=float)
    if len(base) < 2 or base[0] != 0.0 or base[-1] != 1.0 or np.any(np.diff(base) <= 0):
        raise ValueError("base breakpoints must increase from 0 to 1")
    cuts = np.union1d(base, m.breakpoints)
    violations = []
    for l, r in zip(cuts[:-1], cuts[1:]):
        br = m.branches[m.branch_index(0.5 * (l + r))]
        for end in br(np.array([l, r])):
            if np.min(np.abs(base - float(end))) > tol:
                violations.append(f"piece [{l:.6g}, {r:.6g}) has image end {float(end):.6g}, "
                                  f"not a base breakpoint")
                break
    return MarkovReport(not violations, len(cuts) - 1, None, violations)


def lumped_action(model: MarkovMapModel, p) -> np.ndarray:
    """Push the state distribution ``p`` through the map and lump by state.

    The piecewise-uniform density with state masses ``p`` is pushed with the
    model's cached transfer matrix, then summed over the cells of each state.
    """
    p = np.asarray(p, dtype=float)
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p must sum to 1")
    return model.lumped_step(p)


def walk_matrix(kind: str, params, M: int) -> StochasticMatrix:
    """Random walk on ``0..M-1``; mass that would leave state ``M-1`` stays there."""
    if M < 2:
        raise InvalidChainError("truncation M must be >= 2")
    if kind == "homogeneous":
        pl, pr = map(float, params)
        if pl < 0 or pr < 0 or pl + pr > 1 + ROW_TOL:
            raise InvalidChainError(f"invalid walk probabilities p_L={pl}, p_R={pr}")
        triples = [(0.0, 1.0 - pr, pr)] + [(pl, 1.0 - pl - pr, pr)] * (M - 1)
    elif kind == "inhomogeneous":
        triples = [tuple(map(float, t)) for t in params]
        if len(triples) < M:
            raise InvalidChainError(f"need {M} triples, got {len(triples)}")
        triples = triples[:M]
        if triples[0][0] != 0.0:
            raise InvalidChainError("state 0 cannot step left")
    else:
        raise ValueError(f"unknown walk kind {kind!r}")
    P = np.zeros((M, M))
    for i, (pl, ps, pr) in enumerate(triples):
        if min(pl, ps, pr) < 0:
            raise InvalidChainError(f"negative probability in state {i}")
        if i > 0:
            P[i, i - 1] += pl
        P[i, i] += ps
        P[i, min(i + 1, M - 1)] += pr
    return StochasticMatrix(P)


def dyadic_intervals(M: int) -> np.ndarray:
    """State ``i`` owns ``[2^-(i+1), 2^-i)``; the last state absorbs ``[0, 2^-(M-1))``."""
    hi = 2.0 ** -np.arange(M)
    lo = 2.0 ** -np.arange(1, M + 1)
    lo[-1] = 0.0
    return np.column_stack([lo, hi])


def build_random_walk_map(kind: str, params, M: int) -> MarkovMapModel:
    """Deterministic model of a truncated random walk on the dyadic layout."""
    P = walk_matrix(kind, params, M)
    model = build_markov_map(P, dyadic_intervals(M))
    model.meta.update(kind=kind, truncation=M)
    return model


def continuous_arrangements(model: MarkovMapModel, circle: bool = False, tol: float = 1e-12) -> list:
    """Exhaustively search rearrangements of the refined cells for a continuous map.

    Every ordering of the refined cells (with their lengths kept) is tried.
    The cells of one state must be contiguous (an arc on the circle) so that
    the state owns an interval; each cell is then mapped affinely onto its
    target state's interval in either orientation.  Returns the continuous
    arrangements as ``(ordering, orientations)`` pairs.
    """
    lengths = model.cell_lengths
    src = model.source_state
    tgt = model.target_state
    n = len(lengths)
    found = []
    for perm in itertools.permutations(range(n)):
        pos = np.concatenate([[0.0], np.cumsum(lengths[list(perm)])])
        states = src[list(perm)]
        arcs = {}
        ok = True
        for s in np.unique(states):
            idx = np.nonzero(states == s)[0]
            run = _contiguous(idx, n, circle)
            if run is None:
                ok = False
                break
            first, last = run
            arcs[s] = (pos[first], pos[last % n + 1])
        if not ok:
            continue
        ends = [arcs[tgt[c]] for c in perm]
        for flips in itertools.product((False, True), repeat=n):
            vals = [(e[1], e[0]) if f else e for e, f in zip(ends, flips)]
            if _is_continuous(vals, circle, tol):
                found.append((perm, flips))
    return found


def _contiguous(idx, n, circle):
    """Return (first, last) positions when idx forms a run, else None."""
    idx = sorted(idx)
    if idx[-1] - idx[0] == len(idx) - 1:
        return idx[0], idx[-1]
    if circle:
        gaps = [b - a for a, b in zip(idx, idx[1:])]
        big = [g for g in gaps if g > 1]
        if len(big) == 1 and idx[0] == 0 and idx[-1] == n - 1:
            k = gaps.index(big[0])
            return idx[k + 1], idx[k] + n
    return None


def _is_continuous(vals, circle, tol):
    # vals[k] = (value at left end, value at right end) of cell k
    def wrap(v):
        return v % 1.0 if circle else v

    for (_, right), (left, _) in zip(vals, vals[1:]):
        if not _close(wrap(right), wrap(left), circle, tol):
            return False
    if circle and not _close(wrap(vals[-1][1]), wrap(vals[0][0]), circle, tol):
        return False
    return True


def _close(a, b, circle, tol):
    d = abs(a - b)
    if circle:
        d = min(d, 1.0 - d)
    return d <= tol
