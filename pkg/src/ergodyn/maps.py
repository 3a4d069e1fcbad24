"""Piecewise maps of the unit interval.

A :class:`PiecewiseMap` is a list of breakpoints ``0 = b_0 < ... < b_m = 1``
and one branch per interval ``[b_k, b_{k+1})``; the last branch also owns
the point 1.  Branches are either :class:`Affine` or :class:`CatalogBranch`
(closed-form nonlinear formulas).  Isolated redefinitions such as ``T(0) = 1``
are stored as point overrides.

The named example maps live in :data:`CATALOG` and are built by
:func:`catalog`.
"""

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import InvalidMapError, UnsupportedMapError

RANGE_TOL = 1e-12
NEUTRAL_BAND = 1e-6
FD_STEP = 1e-7


@dataclass(frozen=True)
class Affine:
    """Branch ``x -> slope * x + intercept``.

    ``slope`` and ``intercept`` may be ints or Fractions; exact orbit
    computations use them as given, numerics use their float values.
    """

    slope: object
    intercept: object

    @property
    def a(self) -> float:
        return float(self.slope)

    @property
    def b(self) -> float:
        return float(self.intercept)

    @property
    def direction(self) -> int:
        return int(np.sign(self.a))

    def __call__(self, x):
        return self.a * x + self.b

    def scalar(self, x: float) -> float:
        return self.a * x + self.b

    def derivative(self, x):
        return np.zeros_like(np.asarray(x, dtype=float)) + self.a

    def inverse(self, y, lo: float, hi: float):
        return (np.asarray(y, dtype=float) - self.b) / self.a


@dataclass(frozen=True, eq=False)
class CatalogBranch:
    """Closed-form nonlinear branch.

    ``func`` must accept numpy arrays; ``scalar`` is an optional fast path
    for Python floats used by orbit loops.  ``direction`` is +1 or -1 for
    strictly monotone branches and 0 otherwise.
    """

    name: str
    func: Callable
    direction: int
    deriv: Optional[Callable] = None
    scalar_func: Optional[Callable] = None
    params: tuple = ()

    def __call__(self, x):
        return self.func(x)

    def scalar(self, x: float) -> float:
        if self.scalar_func is not None:
            return self.scalar_func(x)
        return float(self.func(x))

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.deriv is not None:
            return self.deriv(x)
        return (self.func(x + FD_STEP) - self.func(x - FD_STEP)) / (2 * FD_STEP)

    def inverse(self, y, lo: float, hi: float):
        if self.direction == 0:
            raise UnsupportedMapError(f"branch {self.name!r} is not monotone")
        y = np.asarray(y, dtype=float)
        a = np.full(y.shape, lo)
        b = np.full(y.shape, hi)
        # bisection on g(x) = direction * (f(x) - y), increasing in x
        for _ in range(64):
            mid = 0.5 * (a + b)
            above = self.direction * (self.func(mid) - y) > 0
            b = np.where(above, mid, b)
            a = np.where(above, a, mid)
        return 0.5 * (a + b)


@dataclass(frozen=True, eq=False)
class PiecewiseMap:
    """Map of [0, 1] defined branch by branch.

    Parameters
    ----------
    breakpoints : array_like
        Strictly increasing, starting at 0 and ending at 1.
    branches : sequence
        One :class:`Affine` or :class:`CatalogBranch` per interval.
    point_overrides : sequence of (point, image)
        Isolated redefinitions, applied before the branch formulas.
    overrides_isolated : bool
        Declares that no orbit started off the override points reaches one
        in exact arithmetic.  Orbits then treat a floating-point landing on an
        override point as a rounding artifact and keep using the branch
        formula (the one-sided limit) there.
    name : str
        Label used in reports and CLI output.
    """

    breakpoints: np.ndarray
    branches: tuple
    point_overrides: tuple = ()
    overrides_isolated: bool = False
    name: str = "custom"
    _inner: list = field(init=False, repr=False)

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(
            self,
            "point_overrides",
            tuple((float(p), float(v)) for p, v in self.point_overrides),
        )
        if bp.ndim != 1 or len(bp) < 2:
            raise InvalidMapError("need at least two breakpoints")
        if bp[0] != 0.0 or bp[-1] != 1.0:
            raise InvalidMapError("breakpoints must start at 0 and end at 1")
        if np.any(np.diff(bp) <= 0):
            raise InvalidMapError("breakpoints must be strictly increasing")
        if len(self.branches) != len(bp) - 1:
            raise InvalidMapError(
                f"{len(bp) - 1} intervals but {len(self.branches)} branches"
            )
        for p, v in self.point_overrides:
            if not (0.0 <= p <= 1.0 and 0.0 <= v <= 1.0):
                raise InvalidMapError(f"override ({p}, {v}) leaves [0, 1]")
        for k, br in enumerate(self.branches):
            xs = np.linspace(bp[k], bp[k + 1], 33)
            ys = br(xs)
            if np.any(ys < -RANGE_TOL) or np.any(ys > 1 + RANGE_TOL):
                raise InvalidMapError(
                    f"branch {k} on [{bp[k]}, {bp[k + 1]}] leaves [0, 1]"
                )
        object.__setattr__(self, "_inner", bp[1:-1].tolist())

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def is_affine(self) -> bool:
        return all(isinstance(b, Affine) for b in self.branches)

    @property
    def is_monotone(self) -> bool:
        return all(isinstance(b, Affine) or b.direction != 0 for b in self.branches)

    def branch_index(self, x: float) -> int:
        return bisect.bisect_right(self._inner, x)

    def __call__(self, x: float) -> float:
        return eval_map(self, x)

    def eval_array(self, x) -> np.ndarray:
        """Vectorized evaluation with overrides and range checking."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0) or np.any(x > 1):
            raise ValueError("points must lie in [0, 1]")
        idx = np.searchsorted(self.breakpoints[1:-1], x, side="right")
        out = np.empty_like(x)
        for k, br in enumerate(self.branches):
            mask = idx == k
            if np.any(mask):
                out[mask] = br(x[mask])
        for p, v in self.point_overrides:
            out[x == p] = v
        return _checked(out)

    def derivative(self, x):
        """Branch derivative (closed form or central difference)."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints[1:-1], x, side="right")
        out = np.empty_like(x)
        for k, br in enumerate(self.branches):
            mask = idx == k
            if np.any(mask):
                out[mask] = br.derivative(x[mask])
        return out

    def table(self) -> list:
        """Rows ``(breakpoint, slope, intercept)`` for affine maps."""
        if not self.is_affine:
            raise UnsupportedMapError("only affine maps export a table")
        return [
            (float(self.breakpoints[k]), br.a, br.b)
            for k, br in enumerate(self.branches)
        ]

    def merged(self, tol: float = 1e-12) -> "PiecewiseMap":
        """Merge contiguous affine branches with equal coefficients."""
        bps = [self.breakpoints[0]]
        brs = []
        for k, br in enumerate(self.branches):
            if (
                brs
                and isinstance(br, Affine)
                and isinstance(brs[-1], Affine)
                and abs(br.a - brs[-1].a) <= tol
                and abs(br.b - brs[-1].b) <= tol
            ):
                bps[-1] = self.breakpoints[k + 1]
                continue
            brs.append(br)
            bps.append(self.breakpoints[k + 1])
        return PiecewiseMap(
            bps, brs, self.point_overrides, self.overrides_isolated, self.name
        )


def from_table(rows: Sequence, overrides: Sequence = (), name: str = "custom"):
    """Build an affine map from ``(left_breakpoint, slope, intercept)`` rows."""
    rows = sorted(rows, key=lambda r: r[0])
    bps = [float(r[0]) for r in rows] + [1.0]
    brs = [Affine(r[1], r[2]) for r in rows]
    return PiecewiseMap(bps, brs, overrides, name=name)


def _checked(y):
    if np.any(y < -RANGE_TOL) or np.any(y > 1 + RANGE_TOL):
        bad = y[(y < -RANGE_TOL) | (y > 1 + RANGE_TOL)]
        raise InvalidMapError(f"map value {bad.flat[0]!r} outside [0, 1]")
    return np.clip(y, 0.0, 1.0)


def eval_map(m: PiecewiseMap, x: float) -> float:
    """Evaluate ``m`` at ``x``; overrides take precedence over branches."""
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x = {x!r} outside [0, 1]")
    for p, v in m.point_overrides:
        if x == p:
            return v
    y = m.branches[m.branch_index(x)].scalar(x)
    if y < -RANGE_TOL or y > 1 + RANGE_TOL:
        raise InvalidMapError(f"T({x!r}) = {y!r} outside [0, 1]")
    return min(max(y, 0.0), 1.0)


# ---------------------------------------------------------------------------
# orbits


def _integral_slopes(m: PiecewiseMap) -> bool:
    return m.is_affine and all(Fraction(b.slope).denominator == 1 for b in m.branches)


def exact_seed(x0) -> Fraction:
    """Rational value of a seed; floats are read via their shortest repr."""
    if isinstance(x0, Fraction):
        return x0
    if isinstance(x0, (int, np.integer)):
        return Fraction(int(x0))
    if isinstance(x0, str):
        return Fraction(x0)
    return Fraction(repr(float(x0)))


def iter_orbit(m: PiecewiseMap, x0, n: int, exact: Optional[bool] = None, chunk: int = 1 << 16):
    """Yield the orbit ``x0, T x0, ..., T^n x0`` as float arrays of <= chunk points.

    ``exact=None`` selects rational arithmetic for affine maps with integer
    slopes (where floating-point doubling would collapse orbits onto 0) and
    floating point otherwise.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if exact is None:
        exact = _integral_slopes(m)
    if exact:
        if not m.is_affine:
            raise UnsupportedMapError("exact orbits need affine branches")
        step = _exact_stepper(m, exact_seed(x0))
    else:
        step = _float_stepper(m, float(x0))
    remaining = n + 1
    while remaining > 0:
        k = min(chunk, remaining)
        yield np.fromiter((step() for _ in range(k)), dtype=float, count=k)
        remaining -= k


def orbit(m: PiecewiseMap, x0, n: int, exact: Optional[bool] = None) -> np.ndarray:
    """Return the ``n + 1`` orbit points starting at ``x0``."""
    return np.concatenate(list(iter_orbit(m, x0, n, exact)))


def _float_stepper(m: PiecewiseMap, x0: float):
    if not 0.0 <= x0 <= 1.0:
        raise ValueError(f"x0 = {x0!r} outside [0, 1]")
    inner = m._inner
    funcs = [b.scalar for b in m.branches]
    overrides = dict(m.point_overrides)
    if m.overrides_isolated and x0 not in overrides:
        overrides = {}
    lo, hi = -RANGE_TOL, 1 + RANGE_TOL
    state = [x0, True]

    def step():
        x = state[0]
        if state[1]:
            state[1] = False
            return x
        y = overrides.get(x) if overrides else None
        if y is None:
            y = funcs[bisect.bisect_right(inner, x)](x)
            if not lo <= y <= hi:
                raise InvalidMapError(f"T({x!r}) = {y!r} outside [0, 1]")
            y = min(max(y, 0.0), 1.0)
        state[0] = y
        return y

    return step


def _exact_stepper(m: PiecewiseMap, x0: Fraction):
    if not 0 <= x0 <= 1:
        raise ValueError(f"x0 = {x0} outside [0, 1]")
    bps = [Fraction(float(b)) for b in m.breakpoints]
    slopes = [Fraction(b.slope) for b in m.branches]
    cepts = [Fraction(b.intercept) for b in m.branches]
    overrides = {Fraction(p): Fraction(v) for p, v in m.point_overrides}
    if m.overrides_isolated and x0 not in overrides:
        overrides = {}
    if all(s.denominator == 1 for s in slopes) and not overrides:
        # integer lattice (1/Q)Z is invariant: iterate numerators only
        q = math.lcm(x0.denominator, *(b.denominator for b in bps), *(c.denominator for c in cepts))
        inner = [int(b * q) for b in bps[1:-1]]
        s_int = [int(s) for s in slopes]
        c_int = [int(c * q) for c in cepts]
        state = [int(x0 * q), True]

        def step():
            p = state[0]
            if state[1]:
                state[1] = False
                return p / q
            k = bisect.bisect_right(inner, p)
            p = s_int[k] * p + c_int[k]
            if p < 0 or p > q:
                raise InvalidMapError("exact orbit left [0, 1]")
            state[0] = p
            return p / q

        return step

    inner = bps[1:-1]
    state = [x0, True]

    def step_fraction():
        x = state[0]
        if state[1]:
            state[1] = False
            return float(x)
        y = overrides.get(x)
        if y is None:
            k = bisect.bisect_right(inner, x)
            y = slopes[k] * x + cepts[k]
        if y < 0 or y > 1:
            raise InvalidMapError("exact orbit left [0, 1]")
        state[0] = y
        return float(y)

    return step_fraction


# ---------------------------------------------------------------------------
# preimages


def _image_ends(br, l: float, r: float):
    fl = float(br(np.array([l]))[0])
    fr = float(br(np.array([r]))[0])
    return fl, fr


def preimage_bounds(m: PiecewiseMap, a, b):
    """Preimage of each target interval ``[a_j, b_j)`` within each branch.

    Returns arrays ``lo, hi`` of shape ``(n_branches, n_targets)``; the
    preimage of target ``j`` inside branch ``k`` is ``[lo[k, j], hi[k, j])``
    (empty when ``hi <= lo``).  The topmost target is treated as closed at 1.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    top = b.max() if b.size else 1.0
    nb = m.n_branches
    lo = np.zeros((nb, a.size))
    hi = np.zeros((nb, a.size))
    bp = m.breakpoints
    for k, br in enumerate(m.branches):
        l, r = bp[k], bp[k + 1]
        direction = br.direction
        if isinstance(br, Affine) and direction == 0:
            c = br.b
            hit = ((a <= c) & (c < b)) | ((c == b) & (b == top))
            lo[k] = np.where(hit, l, 0.0)
            hi[k] = np.where(hit, r, 0.0)
            continue
        if direction == 0:
            raise UnsupportedMapError(
                f"branch {k} of map {m.name!r} is not monotone; use push_mc"
            )
        fl, fr = _image_ends(br, l, r)
        ymin, ymax = min(fl, fr), max(fl, fr)
        ya = np.clip(a, ymin, ymax)
        yb = np.clip(b, ymin, ymax)
        valid = yb > ya
        inv_a = np.clip(br.inverse(ya, l, r), l, r)
        inv_b = np.clip(br.inverse(yb, l, r), l, r)
        if direction > 0:
            klo = np.where(a <= fl, l, inv_a)
            khi = np.where(b >= fr, r, inv_b)
        else:
            klo = np.where(b >= fl, l, inv_b)
            khi = np.where(a <= fr, r, inv_a)
        lo[k] = np.where(valid, klo, 0.0)
        hi[k] = np.where(valid, np.maximum(khi, klo), 0.0)
    return lo, hi


def branch_preimages(m: PiecewiseMap, interval) -> list:
    """Full preimage ``T^{-1}[a, b)`` as a sorted list of disjoint intervals."""
    a, b = float(interval[0]), float(interval[1])
    lo, hi = preimage_bounds(m, [a], [b])
    pieces = sorted(
        (float(lo[k, 0]), float(hi[k, 0]))
        for k in range(m.n_branches)
        if hi[k, 0] > lo[k, 0]
    )
    merged = []
    for p in pieces:
        if merged and p[0] <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], p[1]))
        else:
            merged.append(p)
    return merged


# ---------------------------------------------------------------------------
# fixed points and transitivity


class FixedPoint(NamedTuple):
    point: float
    stability: str
    derivative: float


@dataclass
class FixedPointReport:
    points: list
    degenerate: bool = False

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def locations(self) -> list:
        return [p.point for p in self.points]


def _stability(d: float) -> str:
    if abs(d - 1.0) < NEUTRAL_BAND:
        return "neutral"
    return "stable" if abs(d) < 1.0 else "unstable"


def classify_fixed_points(m: PiecewiseMap, grid_resolution: int = 10001,
                          xtol: float = 1e-10) -> FixedPointReport:
    """Locate fixed points by sign changes of ``T(x) - x`` and classify them.

    Brackets that collapse onto a jump of ``T`` are discarded.  Fixed points
    created by a point override where the branch formula disagrees are
    reported as unstable.  When most grid points are fixed the map is
    flagged ``degenerate`` and no individual points are listed.
    """
    xs = np.linspace(0.0, 1.0, grid_resolution)
    g = m.eval_array(xs) - xs
    zero = np.abs(g) <= 1e-14
    if zero.mean() > 0.5:
        return FixedPointReport([], degenerate=True)
    found = [float(x) for x in xs[zero]]
    overrides = dict(m.point_overrides)
    for p, v in overrides.items():
        if p == v:
            found.append(p)
    sgn = np.sign(g)
    for k in np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]:
        lo, hi = xs[k], xs[k + 1]
        glo = g[k]
        while hi - lo > xtol:
            mid = 0.5 * (lo + hi)
            gm = eval_map(m, mid) - mid
            if gm == 0:
                lo = hi = mid
                break
            if np.sign(gm) == np.sign(glo):
                lo, glo = mid, gm
            else:
                hi = mid
        if max(abs(eval_map(m, lo) - lo), abs(eval_map(m, hi) - hi)) < 1e-8:
            found.append(0.5 * (lo + hi))
    found.sort()
    points = []
    for x in found:
        if points and abs(x - points[-1].point) < 1e-8:
            continue
        k = m.branch_index(x)
        d = float(m.branches[k].derivative(np.array([x]))[0])
        stab = _stability(d)
        if x in overrides:
            branch_val = float(m.branches[k](np.array([x]))[0])
            if abs(branch_val - x) > 1e-8:
                stab = "unstable"
        points.append(FixedPoint(x, stab, d))
    return FixedPointReport(points)


@dataclass
class TransitivityReport:
    coverages: np.ndarray
    visited_cells: np.ndarray
    attractor_cells: np.ndarray
    max_coverage: float
    best_x0: float
    covering_orbit: np.ndarray


def transitivity_scan(m: PiecewiseMap, x0_samples, n: int, eps_net: float,
                      exact: Optional[bool] = None) -> TransitivityReport:
    """Fraction of the detected attractor visited by each sampled orbit.

    The attractor is estimated as the union of cells of width ``eps_net``
    visited by the second halves of all sampled orbits.
    """
    if eps_net <= 0:
        raise ValueError("eps_net must be positive")
    n_cells = int(math.ceil(1.0 / eps_net))
    samples = list(x0_samples)
    visited = []
    tails = np.zeros(n_cells, dtype=bool)
    orbits = []
    for x0 in samples:
        orb = orbit(m, x0, n, exact)
        cells = np.minimum((orb * n_cells).astype(np.int64), n_cells - 1)
        seen = np.zeros(n_cells, dtype=bool)
        seen[cells] = True
        visited.append(seen)
        tails[cells[len(cells) // 2:]] = True
        orbits.append(orb)
    attractor = np.nonzero(tails)[0]
    cov = np.array([v[attractor].sum() / len(attractor) for v in visited])
    best = int(np.argmax(cov))
    return TransitivityReport(
        coverages=cov,
        visited_cells=np.array([v.sum() for v in visited]),
        attractor_cells=attractor,
        max_coverage=float(cov[best]),
        best_x0=samples[best],
        covering_orbit=orbits[best],
    )


# ---------------------------------------------------------------------------
# catalog


def del_magno() -> PiecewiseMap:
    """``(1 - sin(pi x - pi/2)) / 2`` on (0, 1) with both endpoints fixed."""
    half_pi = math.pi / 2
    br = CatalogBranch(
        "del_magno",
        func=lambda x: (1.0 - np.sin(np.pi * x - half_pi)) / 2.0,
        direction=-1,
        deriv=lambda x: -half_pi * np.cos(np.pi * x - half_pi),
        scalar_func=lambda x: (1.0 - math.sin(math.pi * x - half_pi)) / 2.0,
    )
    return PiecewiseMap([0.0, 1.0], [br], [(0.0, 0.0), (1.0, 1.0)],
                        overrides_isolated=True, name="del_magno")


def inoue() -> PiecewiseMap:
    """Two full branches with neutral fixed points at 0 and 1."""
    left = CatalogBranch(
        "inoue_left",
        func=lambda x: x + 4.0 * x * x * x,
        direction=1,
        deriv=lambda x: 1.0 + 12.0 * x * x,
    )
    right = CatalogBranch(
        "inoue_right",
        func=lambda x: x - 4.0 * (1.0 - x) ** 3,
        direction=1,
        deriv=lambda x: 1.0 + 12.0 * (1.0 - x) ** 2,
    )
    return PiecewiseMap([0.0, 0.5, 1.0], [left, right], name="inoue")


def cubic_pitchfork() -> PiecewiseMap:
    """``x - x (x - 1)^2 / 6``: stable fixed point 0, neutral fixed point 1.

    The sign of the cubic term is the one for which 0 attracts and 1 is
    neutrally unstable; with the opposite sign the roles swap.
    """
    br = CatalogBranch(
        "cubic_pitchfork",
        func=lambda x: x - x * (x - 1.0) ** 2 / 6.0,
        direction=1,
        deriv=lambda x: 1.0 - ((x - 1.0) ** 2 + 2.0 * x * (x - 1.0)) / 6.0,
    )
    return PiecewiseMap([0.0, 1.0], [br], name="cubic_pitchfork")


def doubling() -> PiecewiseMap:
    return PiecewiseMap([0.0, 0.5, 1.0], [Affine(2, 0), Affine(2, -1)], name="doubling")


def shrink_jump() -> PiecewiseMap:
    """``x / 2`` on (0, 1] with the single jump ``T(0) = 1``."""
    return PiecewiseMap([0.0, 1.0], [Affine(Fraction(1, 2), 0)], [(0.0, 1.0)],
                        overrides_isolated=True, name="shrink_jump")


def identity() -> PiecewiseMap:
    return PiecewiseMap([0.0, 1.0], [Affine(1, 0)], name="identity")


def contraction() -> PiecewiseMap:
    """Continuous ``x / 2`` (no jump at the origin)."""
    return PiecewiseMap([0.0, 1.0], [Affine(Fraction(1, 2), 0)], name="contraction")


CATALOG = {
    "del_magno": del_magno,
    "inoue": inoue,
    "cubic_pitchfork": cubic_pitchfork,
    "doubling": doubling,
    "shrink_jump": shrink_jump,
    "identity": identity,
    "contraction": contraction,
}


def catalog(name: str) -> PiecewiseMap:
    try:
        return CATALOG[name]()
    except KeyError:
        raise KeyError(f"unknown map {name!r}; choose from {sorted(CATALOG)}") from None
