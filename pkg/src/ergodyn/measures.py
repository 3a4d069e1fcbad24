"""Probability measures on [0, 1] and the transfer action of interval maps.

Two concrete measure types are used throughout:

* :class:`CellDensity`, a piecewise-uniform density given by breakpoints and
  per-cell masses;
* :class:`EmpiricalMeasure`, finitely many weighted atoms.

Pushforwards act on cell densities through a sparse transfer matrix whose
entries are the Ulam ratios ``|T^-1 C_j  ∩  S_i| / |S_i|``.  Distances are
Wasserstein-1, computed exactly from the cumulative distribution functions.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .maps import PiecewiseMap, classify_fixed_points, iter_orbit, preimage_bounds

MASS_TOL = 1e-12
PRUNE_BELOW = 1e-15
DEFAULT_W = 2000


# ---------------------------------------------------------------------------
# measure types


@dataclass(frozen=True, eq=False)
class CellDensity:
    """Piecewise-uniform probability measure.

    Parameters
    ----------
    partition : array_like
        Breakpoints ``0 = b_0 < ... < b_W = 1``.
    mass : array_like
        Probability of each cell; the density on cell ``k`` is
        ``mass[k] / (b_{k+1} - b_k)``.
    """

    partition: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.partition, dtype=float)
        m = np.asarray(self.mass, dtype=float)
        object.__setattr__(self, "partition", p)
        object.__setattr__(self, "mass", m)
        if p.ndim != 1 or len(p) != len(m) + 1:
            raise ValueError("partition must have one more entry than mass")
        if p[0] != 0.0 or p[-1] != 1.0 or np.any(np.diff(p) <= 0):
            raise ValueError("partition must increase strictly from 0 to 1")
        if np.any(m < 0):
            raise ValueError("negative cell mass")
        if abs(m.sum() - 1.0) > 1e-9:
            raise ValueError(f"total mass {m.sum()!r} differs from 1")

    @classmethod
    def uniform(cls, W: int = DEFAULT_W) -> "CellDensity":
        """Lebesgue measure on ``W`` equal cells."""
        return cls(uniform_partition(W), np.full(W, 1.0 / W))

    @classmethod
    def on_interval(cls, a: float, b: float, partition=None) -> "CellDensity":
        """Normalized Lebesgue measure on ``[a, b)``."""
        p = np.asarray(partition if partition is not None else [0.0, 1.0], dtype=float)
        p = np.unique(np.concatenate([p, [a, b]]))
        overlap = np.clip(np.minimum(p[1:], b) - np.maximum(p[:-1], a), 0, None)
        return cls(p, overlap / overlap.sum())

    @property
    def n_cells(self) -> int:
        return len(self.mass)

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.partition)

    @property
    def density(self) -> np.ndarray:
        return self.mass / self.lengths

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def cdf(self, x, side: str = "right") -> np.ndarray:
        x = np.asarray(x, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.mass)])
        k = np.clip(np.searchsorted(self.partition, x, side="right") - 1, 0, self.n_cells - 1)
        frac = np.clip((x - self.partition[k]) / self.lengths[k], 0.0, 1.0)
        return cum[k] + frac * self.mass[k]

    def knots(self) -> np.ndarray:
        return self.partition

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.quantile(rng.random(n))

    def quantile(self, u) -> np.ndarray:
        """Inverse CDF, so that shared uniforms give a monotone coupling."""
        u = np.asarray(u, dtype=float)
        cum = np.cumsum(self.mass)
        target = u * cum[-1]
        # first cell whose cumulative mass exceeds the target; never empty
        k = np.searchsorted(cum, target, side="right")
        k = np.minimum(k, np.nonzero(self.mass > 0)[0][-1])
        frac = (target - (cum[k] - self.mass[k])) / self.mass[k]
        x = self.partition[k] + np.clip(frac, 0.0, 1.0) * self.lengths[k]
        return np.minimum(x, np.nextafter(self.partition[k + 1], 0.0))

    def rebin(self, partition) -> "CellDensity":
        """Same measure expressed on another partition (uniform within cells)."""
        p = np.asarray(partition, dtype=float)
        cum = self.cdf(p)
        mass = np.clip(np.diff(cum), 0.0, None)
        return CellDensity(p, mass / mass.sum())

    def mix(self, other: "CellDensity", weight: float) -> "CellDensity":
        """``(1 - weight) * self + weight * other`` on a common partition."""
        if np.array_equal(self.partition, other.partition):
            return CellDensity(self.partition, (1 - weight) * self.mass + weight * other.mass)
        p = np.union1d(self.partition, other.partition)
        return self.rebin(p).mix(other.rebin(p), weight)


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Finite weighted sum of point masses on [0, 1].

    Atoms are stored sorted by location with duplicates combined.
    """

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.locations, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if x.shape != w.shape or x.size == 0:
            raise ValueError("need matching, nonempty locations and weights")
        if np.any(w <= 0):
            raise ValueError("atom weights must be positive")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"atom weights sum to {w.sum()!r}")
        ux, inv = np.unique(x, return_inverse=True)
        uw = np.bincount(inv, weights=w)
        object.__setattr__(self, "locations", ux)
        object.__setattr__(self, "weights", uw)

    @classmethod
    def from_points(cls, points) -> "EmpiricalMeasure":
        x = np.asarray(points, dtype=float).ravel()
        ux, counts = np.unique(x, return_counts=True)
        return cls(ux, counts / x.size)

    @classmethod
    def dirac(cls, x: float) -> "EmpiricalMeasure":
        return cls([x], [1.0])

    @property
    def atoms(self) -> list:
        return list(zip(self.locations.tolist(), self.weights.tolist()))

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def cdf(self, x, side: str = "right") -> np.ndarray:
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        return cum[np.searchsorted(self.locations, np.asarray(x, dtype=float), side=side)]

    def knots(self) -> np.ndarray:
        return self.locations

    def histogram(self, W: int) -> CellDensity:
        cells = np.minimum((self.locations * W).astype(np.int64), W - 1)
        return CellDensity(uniform_partition(W), np.bincount(cells, self.weights, minlength=W))


Measure = Union[CellDensity, EmpiricalMeasure]


@dataclass(frozen=True, eq=False)
class Mixture:
    """Convex combination of measures, used for targets such as ``(d0 + d1)/2``."""

    parts: tuple
    coefficients: tuple

    def cdf(self, x, side: str = "right") -> np.ndarray:
        return sum(c * p.cdf(x, side) for p, c in zip(self.parts, self.coefficients))

    def knots(self) -> np.ndarray:
        return np.unique(np.concatenate([p.knots() for p in self.parts]))


@dataclass
class Atom:
    location: float
    weight: float


@dataclass
class MeasureEstimate:
    """Measure together with its detected point masses and convergence trace.

    ``trace`` rows are ``(n, dist(avg_n, avg_{n/2}))`` at powers of two.
    """

    representation: Measure
    atom_summary: list
    trace: list = field(default_factory=list)

    def __post_init__(self):
        if sum(a.weight for a in self.atom_summary) > self.representation.total + MASS_TOL:
            raise ValueError("atom weights exceed total mass")

    def atom_near(self, x: float, radius: float = 0.01) -> float:
        return sum(a.weight for a in self.atom_summary if abs(a.location - x) <= radius)


def uniform_partition(W: int) -> np.ndarray:
    if W < 1:
        raise ValueError("W must be >= 1")
    p = np.arange(W + 1, dtype=float) / W
    return p


# ---------------------------------------------------------------------------
# distance


def w1_distance(mu, nu) -> float:
    """Wasserstein-1 distance ``∫ |F_mu - F_nu| dx`` computed exactly.

    Between consecutive knots of either measure both CDFs are affine, so the
    integral of the absolute difference is evaluated in closed form.
    """
    x = np.union1d(np.union1d(mu.knots(), nu.knots()), [0.0, 1.0])
    x = x[(x >= 0) & (x <= 1)]
    if len(x) < 2:
        return 0.0
    left, right = x[:-1], x[1:]
    h0 = mu.cdf(left, "right") - nu.cdf(left, "right")
    h1 = mu.cdf(right, "left") - nu.cdf(right, "left")
    length = right - left
    same = h0 * h1 >= 0
    a0, a1 = np.abs(h0), np.abs(h1)
    denom = np.where(same, 1.0, a0 + a1)
    seg = np.where(same, 0.5 * (a0 + a1), (h0 * h0 + h1 * h1) / (2.0 * denom)) * length
    return float(seg.sum())


# ---------------------------------------------------------------------------
# transfer operator


def transfer_operator(m: PiecewiseMap, source, target=None) -> sp.csr_matrix:
    """Sparse matrix of ``|T^-1 C_j ∩ S_i| / |S_i|`` for cells ``S_i``, ``C_j``.

    Parameters
    ----------
    m : PiecewiseMap
        Map with monotone (or constant) branches.
    source, target : array_like
        Breakpoints of the source and target partitions; ``target`` defaults
        to ``source``.

    Rows are renormalized to sum to 1 so that mass is conserved exactly; the
    correction is at rounding level because the preimages of a partition
    tile [0, 1].  Entries below 1e-15 are pruned first.
    """
    src = np.asarray(source, dtype=float)
    tgt = src if target is None else np.asarray(target, dtype=float)
    lo, hi = preimage_bounds(m, tgt[:-1], tgt[1:])
    k_idx, j_idx = np.nonzero(hi > lo)
    plo, phi = lo[k_idx, j_idx], hi[k_idx, j_idx]
    # source cells overlapped by each preimage piece
    i0 = np.clip(np.searchsorted(src, plo, side="right") - 1, 0, len(src) - 2)
    i1 = np.clip(np.searchsorted(src, phi, side="left") - 1, 0, len(src) - 2)
    span = np.maximum(i1 - i0 + 1, 1)
    piece = np.repeat(np.arange(len(plo)), span)
    offs = np.arange(span.sum()) - np.repeat(np.cumsum(span) - span, span)
    rows = i0[piece] + offs
    overlap = np.minimum(phi[piece], src[rows + 1]) - np.maximum(plo[piece], src[rows])
    keep = overlap > 0
    rows, cols, overlap = rows[keep], j_idx[piece][keep], overlap[keep]
    vals = overlap / np.diff(src)[rows]
    M = sp.coo_matrix((vals, (rows, cols)), shape=(len(src) - 1, len(tgt) - 1)).tocsr()
    M.sum_duplicates()
    M.data[M.data < PRUNE_BELOW] = 0.0
    M.eliminate_zeros()
    sums = np.asarray(M.sum(axis=1)).ravel()
    sums[sums == 0] = 1.0
    M = sp.diags(1.0 / sums) @ M
    return M.tocsr()


def pushforward(m: PiecewiseMap, mu: CellDensity, W: Optional[int] = None,
                partition=None, operator=None) -> CellDensity:
    """One application of the transfer action ``T* mu (A) = mu(T^-1 A)``.

    The image lives on ``partition`` if given, else on ``W`` uniform cells if
    ``W`` is given, else on the partition of ``mu``.  For a piecewise-affine
    Markov map on its refined partition the result is exact.
    """
    if partition is None:
        partition = uniform_partition(W) if W is not None else mu.partition
    partition = np.asarray(partition, dtype=float)
    if operator is None:
        operator = transfer_operator(m, mu.partition, partition)
    mass = operator.T @ mu.mass
    mass = np.clip(mass, 0.0, None)
    return CellDensity(partition, mass / mass.sum())


def push_mc(m: PiecewiseMap, mu: CellDensity, W: Optional[int] = None,
            n_samples: int = 10**6, seed: int = 0) -> CellDensity:
    """Monte Carlo pushforward: sample ``mu``, map the points, histogram."""
    W = W or mu.n_cells
    rng = np.random.default_rng(seed)
    y = m.eval_array(mu.sample(n_samples, rng))
    cells = np.minimum((y * W).astype(np.int64), W - 1)
    return CellDensity(uniform_partition(W), np.bincount(cells, minlength=W) / n_samples)


def extract_atoms(mu: CellDensity, factor: float = 10.0, floor: float = 0.01,
                  half_width: Optional[int] = None) -> list:
    """Detect point masses in a cell density.

    A cell is atomic when its mass is at least ``factor`` times the median
    mass of the cells within ``half_width`` on either side (itself excluded).
    Runs of atomic cells form one atom at their mass-weighted midpoint;
    atoms lighter than ``floor`` are dropped.
    """
    W = mu.n_cells
    h = half_width or max(2, W // 50)
    mass = mu.mass
    padded = np.concatenate([np.full(h, np.nan), mass, np.full(h, np.nan)])
    windows = np.lib.stride_tricks.sliding_window_view(padded, 2 * h + 1).copy()
    windows[:, h] = np.nan
    ref = np.nanmedian(windows, axis=1)
    atomic = (mass > 0) & (mass >= factor * ref)
    mids = 0.5 * (mu.partition[:-1] + mu.partition[1:])
    atoms = []
    k = 0
    while k < W:
        if not atomic[k]:
            k += 1
            continue
        j = k
        while j + 1 < W and atomic[j + 1]:
            j += 1
        w = mass[k:j + 1].sum()
        if w >= floor:
            atoms.append(Atom(float(np.dot(mids[k:j + 1], mass[k:j + 1]) / w), float(w)))
        k = j + 1
    return atoms


# ---------------------------------------------------------------------------
# natural measure and orbit statistics


def cesaro_natural(m: PiecewiseMap, mu0: Optional[CellDensity] = None, n_steps: int = 10**4,
                   W: int = DEFAULT_W, operator=None) -> MeasureEstimate:
    """Cesaro average ``(1/n) sum_{k<n} (T*)^k mu0`` on ``W`` uniform cells.

    The trace records ``w1(avg_n, avg_{n/2})`` at every power of two ``n``.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    grid = uniform_partition(W)
    mu0 = CellDensity.uniform(W) if mu0 is None else mu0.rebin(grid)
    if operator is None:
        operator = transfer_operator(m, grid)
    PT = operator.T.tocsr()
    cur = mu0.mass.copy()
    acc = np.zeros(W)
    trace = []
    half_avg = None
    for k in range(1, n_steps + 1):
        acc += cur
        if k & (k - 1) == 0:
            avg = CellDensity(grid, acc / acc.sum())
            if half_avg is not None:
                trace.append((k, w1_distance(avg, half_avg)))
            half_avg = avg
        if k < n_steps:
            cur = PT @ cur
    avg = CellDensity(grid, acc / acc.sum())
    if trace and trace[-1][0] != n_steps and half_avg is not None:
        trace.append((n_steps, w1_distance(avg, half_avg)))
    return MeasureEstimate(avg, extract_atoms(avg), trace)


def birkhoff(m: PiecewiseMap, x0, n: int, exact: Optional[bool] = None) -> MeasureEstimate:
    """Occupation measure ``(1/n) sum_{k<n} delta_{T^k x0}`` with its trace."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pts = np.concatenate(list(iter_orbit(m, x0, n - 1, exact)))
    emp = EmpiricalMeasure.from_points(pts)
    trace = []
    k = 2
    while k <= n:
        a = EmpiricalMeasure.from_points(pts[:k])
        b = EmpiricalMeasure.from_points(pts[:k // 2])
        trace.append((k, w1_distance(a, b)))
        k *= 2
    atoms = [Atom(x, w) for x, w in emp.atoms if w >= 0.01]
    return MeasureEstimate(emp, atoms, trace)


@dataclass
class OccupationTrace:
    """Running averages ``a_n`` of an indicator along an orbit.

    ``tail_max``/``tail_min`` are exact over all ``n >= tail_start``; the
    stored ``n``/``values`` arrays are a log-spaced subsample for output.
    """

    n: np.ndarray
    values: np.ndarray
    tail_start: int
    tail_max: float
    tail_min: float
    final: float


def occupation_fraction(m: PiecewiseMap, x0, interval: Sequence[float], n: int,
                        exact: Optional[bool] = None, tail_fraction: float = 0.01,
                        n_trace: int = 1000) -> OccupationTrace:
    """Running fraction of time the orbit spends in the closed ``interval``.

    The tail is ``n >= tail_fraction * n_total``, which skips the start-up
    transient where ``a_n`` trivially equals 0 or 1.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    a, b = float(interval[0]), float(interval[1])
    tail_start = max(1, int(math.ceil(tail_fraction * n)))
    keep = np.unique(np.geomspace(1, n, n_trace).astype(np.int64))
    hits = 0
    done = 0
    tmax, tmin = -np.inf, np.inf
    trace_vals = []
    for chunk in iter_orbit(m, x0, n - 1, exact):
        inside = ((chunk >= a) & (chunk <= b)).astype(np.int64)
        counts = hits + np.cumsum(inside)
        idx = done + np.arange(1, len(chunk) + 1)
        avg = counts / idx
        tail = idx >= tail_start
        if np.any(tail):
            tmax = max(tmax, float(avg[tail].max()))
            tmin = min(tmin, float(avg[tail].min()))
        sel = np.isin(idx, keep)
        trace_vals.append(np.column_stack([idx[sel], avg[sel]]))
        hits = int(counts[-1])
        done += len(chunk)
    tr = np.concatenate(trace_vals)
    return OccupationTrace(tr[:, 0].astype(np.int64), tr[:, 1], tail_start, tmax, tmin, hits / n)


@dataclass
class ErgodicityReport:
    non_ergodic: bool
    clusters: list
    dispersion: dict
    max_dispersion: float
    notes: list


TEST_FUNCTIONS = {
    "x": lambda x: x,
    "x^2": lambda x: x * x,
    "sin(pi x)": lambda x: np.sin(np.pi * x),
}


def ergodicity_report(m: PiecewiseMap, estimate: Optional[MeasureEstimate] = None,
                      n_probes: int = 20, n_steps: int = 10**5, seed: int = 0,
                      cluster_radius: float = 0.01, min_weight: float = 0.1) -> ErgodicityReport:
    """Look for evidence that the estimated natural measure is not ergodic.

    Atoms of ``estimate`` are attached to fixed points of ``m`` within
    ``cluster_radius``.  Two or more fixed points carrying weight at least
    ``min_weight`` each are flagged as non-ergodic evidence.  The spread of
    Birkhoff averages of a few test functions over ``n_probes`` random
    starts is reported alongside.
    """
    notes = []
    clusters = []
    if estimate is not None and estimate.atom_summary:
        fps = classify_fixed_points(m)
        locs = np.array(fps.locations()) if not fps.degenerate else np.array([])
        weight = {}
        for atom in estimate.atom_summary:
            if locs.size:
                k = int(np.argmin(np.abs(locs - atom.location)))
                if abs(locs[k] - atom.location) <= cluster_radius:
                    weight[float(locs[k])] = weight.get(float(locs[k]), 0.0) + atom.weight
                    continue
            if fps.degenerate and abs(m(atom.location) - atom.location) <= cluster_radius:
                weight[atom.location] = weight.get(atom.location, 0.0) + atom.weight
                continue
            notes.append(f"atom at {atom.location:.4g} is not at a fixed point")
        clusters = sorted(weight.items())
    heavy = [c for c in clusters if c[1] >= min_weight]
    rng = np.random.default_rng(seed)
    starts = np.round(rng.random(n_probes), 12)
    avgs = {name: [] for name in TEST_FUNCTIONS}
    for x0 in starts:
        sums = dict.fromkeys(TEST_FUNCTIONS, 0.0)
        for chunk in iter_orbit(m, float(x0), n_steps - 1):
            for name, f in TEST_FUNCTIONS.items():
                sums[name] += float(np.sum(f(chunk)))
        for name in TEST_FUNCTIONS:
            avgs[name].append(sums[name] / n_steps)
    dispersion = {name: float(np.std(v)) for name, v in avgs.items()}
    return ErgodicityReport(
        non_ergodic=len(heavy) >= 2,
        clusters=clusters,
        dispersion=dispersion,
        max_dispersion=max(dispersion.values()),
        notes=notes,
    )


# ---------------------------------------------------------------------------
# CSV


def write_measure_csv(path, measure, atoms: Sequence = ()) -> None:
    """Rows ``cell, left_break, right_break, mass`` then ``atom, location, weight``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if isinstance(measure, CellDensity):
            for l, r, q in zip(measure.partition[:-1], measure.partition[1:], measure.mass):
                w.writerow(["cell", repr(float(l)), repr(float(r)), repr(float(q))])
        elif isinstance(measure, EmpiricalMeasure):
            for x, q in measure.atoms:
                w.writerow(["point", repr(x), repr(q)])
        for a in atoms:
            w.writerow(["atom", repr(a.location), repr(a.weight)])


def read_measure_csv(path):
    """Inverse of :func:`write_measure_csv`; returns ``(measure, atoms)``."""
    cells, points, atoms = [], [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            if row[0] == "cell":
                cells.append(tuple(map(float, row[1:4])))
            elif row[0] == "point":
                points.append(tuple(map(float, row[1:3])))
            elif row[0] == "atom":
                atoms.append(Atom(float(row[1]), float(row[2])))
    if cells:
        arr = np.array(cells)
        measure = CellDensity(np.append(arr[:, 0], arr[-1, 1]), arr[:, 2])
    else:
        arr = np.array(points)
        measure = EmpiricalMeasure(arr[:, 0], arr[:, 1])
    return measure, atoms


def write_trace_csv(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "value"])
        for n, v in trace:
            w.writerow([int(n), repr(float(v))])
