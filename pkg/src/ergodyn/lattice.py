"""Finite coupled map lattices.

A :class:`LatticeSystem` on ``d`` sites combines local interval maps with a
convex finite-range coupling

    (I x)_i = (1 - eps) x_i + eps * sum_{|j| <= K} a_j x_{i+j},

where neighbours outside the window are frozen at ``y`` (:class:`Fixed`) or
wrap around (:class:`Periodic`).  States are numpy arrays of shape ``(d,)``
or batches of shape ``(B, d)``.
"""

import csv
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .maps import PiecewiseMap
from .measures import EmpiricalMeasure, w1_distance

INTERACTION_AFTER_MAP = "interaction_after_map"
MAP_AFTER_INTERACTION = "map_after_interaction"


@dataclass(frozen=True)
class Fixed:
    """Out-of-window neighbours held at ``y`` forever."""

    y: float

    def __post_init__(self):
        if not 0.0 <= self.y <= 1.0:
            raise ValueError("boundary value must lie in [0, 1]")


@dataclass(frozen=True)
class Periodic:
    """Site indices wrap modulo ``d``."""


Boundary = Union[Fixed, Periodic]


def parse_boundary(text: str) -> Boundary:
    """``"periodic"`` or ``"fixed:<y>"``."""
    text = text.strip().lower()
    if text == "periodic":
        return Periodic()
    if text.startswith("fixed:"):
        return Fixed(float(text.split(":", 1)[1]))
    raise ValueError(f"unknown boundary {text!r}; use 'periodic' or 'fixed:<y>'")


@dataclass(frozen=True, eq=False)
class CouplingSpec:
    """Coupling strength, weights ``a_{-K..K}`` and boundary condition."""

    epsilon: float
    weights: np.ndarray
    boundary: Boundary = field(default_factory=Periodic)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "weights", w)
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if len(w) % 2 != 1:
            raise ValueError("need 2K + 1 weights for offsets -K..K")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")

    @property
    def K(self) -> int:
        return len(self.weights) // 2

    def offsets(self):
        return range(-self.K, self.K + 1)


def diffusive(epsilon: float, boundary: Boundary = Periodic()) -> CouplingSpec:
    """Nearest-neighbour coupling with equal weights 1/3."""
    return CouplingSpec(epsilon, np.full(3, 1.0 / 3.0), boundary)


def _neighbours(spec: CouplingSpec, x: np.ndarray, j: int) -> np.ndarray:
    """Array whose site ``i`` holds ``x_{i+j}`` under the boundary rule."""
    if j == 0:
        return x
    d = x.shape[-1]
    if isinstance(spec.boundary, Periodic):
        return np.roll(x, -j, axis=-1)
    out = np.full_like(x, spec.boundary.y)
    if abs(j) < d:
        if j > 0:
            out[..., : d - j] = x[..., j:]
        else:
            out[..., -j:] = x[..., : d + j]
    return out


def neighbour_average(spec: CouplingSpec, x) -> np.ndarray:
    """``sum_j a_j x_{i+j}`` for every site."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for a, j in zip(spec.weights, spec.offsets()):
        if a:
            out += a * _neighbours(spec, x, j)
    return out


def apply_coupling(spec: CouplingSpec, x) -> np.ndarray:
    """Apply the convex interaction.

    Written as ``x_i + eps * sum_j a_j (x_{i+j} - x_i)`` so that constant
    (diagonal) states are reproduced bit for bit, then clipped to the
    neighbourhood range to remove rounding excursions.
    """
    x = np.asarray(x, dtype=float)
    if spec.epsilon == 0:
        return x.copy()
    delta = np.zeros_like(x)
    lo = x.copy()
    hi = x.copy()
    for a, j in zip(spec.weights, spec.offsets()):
        if a:
            nb = _neighbours(spec, x, j)
            delta += a * (nb - x)
            np.minimum(lo, nb, out=lo)
            np.maximum(hi, nb, out=hi)
    return np.clip(x + spec.epsilon * delta, lo, hi)


def laplacian(spec: CouplingSpec, x) -> np.ndarray:
    """Discrete Laplacian ``x_{i+1} - 2 x_i + x_{i-1}`` with the coupling's boundary."""
    x = np.asarray(x, dtype=float)
    return _neighbours(spec, x, 1) - 2.0 * x + _neighbours(spec, x, -1)


@dataclass(frozen=True, eq=False)
class LatticeSystem:
    """Local maps on ``d`` sites composed with a coupling.

    Parameters
    ----------
    d : int
        Number of sites.
    local_maps : PiecewiseMap or sequence of PiecewiseMap
        A single map is shared by all sites (homogeneous mode).
    coupling : CouplingSpec
    composition_order : str
        ``"interaction_after_map"`` gives ``x -> I(T x)``.
        ``"map_after_interaction"`` gives the form in which the coupling
        acts on the current state, ``x_i -> (1 - eps) T x_i + eps sum_j a_j x_{i+j}``.
    """

    d: int
    local_maps: Union[PiecewiseMap, tuple]
    coupling: CouplingSpec
    composition_order: str = INTERACTION_AFTER_MAP

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("need at least one site")
        if not isinstance(self.local_maps, PiecewiseMap):
            maps = tuple(self.local_maps)
            if len(maps) != self.d:
                raise ValueError(f"{len(maps)} local maps for {self.d} sites")
            object.__setattr__(self, "local_maps", maps)
        if self.composition_order not in (INTERACTION_AFTER_MAP, MAP_AFTER_INTERACTION):
            raise ValueError(f"unknown composition order {self.composition_order!r}")

    @property
    def homogeneous(self) -> bool:
        return isinstance(self.local_maps, PiecewiseMap)

    def site_map(self, i: int) -> PiecewiseMap:
        return self.local_maps if self.homogeneous else self.local_maps[i]

    def local(self, x) -> np.ndarray:
        """Apply each site's map to its coordinate."""
        x = np.asarray(x, dtype=float)
        if self.homogeneous:
            return self.local_maps.eval_array(x)
        out = np.empty_like(x)
        for i, m in enumerate(self.local_maps):
            out[..., i] = m.eval_array(x[..., i])
        return out

    def with_sites(self, d: int) -> "LatticeSystem":
        """Same system on a window of ``d`` sites (heterogeneous maps: central ones)."""
        if self.homogeneous:
            maps = self.local_maps
        else:
            start = (self.d - d) // 2
            maps = self.local_maps[start:start + d]
        return LatticeSystem(d, maps, self.coupling, self.composition_order)


def step(system: LatticeSystem, x) -> np.ndarray:
    """One synchronous update of a state or a batch of states."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != system.d:
        raise ValueError(f"state has {x.shape[-1]} sites, system has {system.d}")
    spec = system.coupling
    if system.composition_order == INTERACTION_AFTER_MAP:
        return apply_coupling(spec, system.local(x))
    eps = spec.epsilon
    return (1.0 - eps) * system.local(x) + eps * neighbour_average(spec, x)


def trajectory(system, x0, n: int) -> np.ndarray:
    """States ``x0, ..., x_n`` stacked along axis 0."""
    x = np.asarray(x0, dtype=float)
    out = np.empty((n + 1,) + x.shape)
    out[0] = x
    for t in range(n):
        x = system.step(x) if hasattr(system, "step") else step(system, x)
        out[t + 1] = x
    return out


@dataclass(frozen=True, eq=False)
class DoublingSystem:
    """``2d``-site system built from a map-after-interaction lattice.

    Each site carries ``(x_i, y_i)``; the local map is ``(x, y) -> (T x, x)``
    and the interaction is

        x_i' = (1 - eps) x_i + eps sum_j a_j y_{i+j}
        y_i' = (1 - eps) y_i + eps sum_j a_j y_{i+j}.

    States are arrays of shape ``(..., 2d)`` holding ``x`` then ``y``.
    """

    base: LatticeSystem

    @property
    def d(self) -> int:
        return 2 * self.base.d

    @property
    def composition_order(self) -> str:
        return INTERACTION_AFTER_MAP

    def local(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        x = z[..., : self.base.d]
        return np.concatenate([self.base.local(x), x], axis=-1)

    def interaction(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        n = self.base.d
        x, y = z[..., :n], z[..., n:]
        spec = self.base.coupling
        eps = spec.epsilon
        avg = neighbour_average(spec, y)
        return np.concatenate([(1.0 - eps) * x + eps * avg, (1.0 - eps) * y + eps * avg], axis=-1)

    def step(self, z) -> np.ndarray:
        return self.interaction(self.local(z))

    def lift(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.concatenate([x, x], axis=-1)

    def project(self, z) -> np.ndarray:
        return np.asarray(z)[..., : self.base.d]


def doubling_transform(system: LatticeSystem) -> DoublingSystem:
    """Rewrite a map-after-interaction lattice as an interaction-after-map one."""
    if system.composition_order != MAP_AFTER_INTERACTION:
        raise ValueError("doubling applies to map_after_interaction systems")
    return DoublingSystem(system)


def project_marginals(states, sites: Sequence[int] = None) -> list:
    """Per-site occupation measures of a sample of states ``(T, d)``."""
    states = np.asarray(states, dtype=float)
    if states.ndim != 2 or len(states) == 0:
        raise ValueError("need a nonempty (T, d) sample")
    sites = range(states.shape[1]) if sites is None else sites
    return [EmpiricalMeasure.from_points(states[:, i]) for i in sites]


def product_distance(mus: Sequence, nus: Sequence) -> float:
    """Largest per-site W1 distance between two lists of marginals."""
    if len(mus) != len(nus):
        raise ValueError("marginal lists differ in length")
    return max(w1_distance(a, b) for a, b in zip(mus, nus))


def cloud_distance(a, b) -> float:
    """Product distance between two particle clouds ``(n, d)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return max(_w1_samples(a[:, i], b[:, i]) for i in range(a.shape[1]))


def _w1_samples(u, v) -> float:
    # equal-size clouds with equal weights: W1 = mean |sorted u - sorted v|
    if len(u) == len(v):
        return float(np.mean(np.abs(np.sort(u) - np.sort(v))))
    return w1_distance(EmpiricalMeasure.from_points(u), EmpiricalMeasure.from_points(v))


def write_trajectory_csv(path, traj) -> None:
    traj = np.asarray(traj)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x_{i}" for i in range(traj.shape[1])])
        for t, row in enumerate(traj):
            w.writerow([t] + [repr(float(v)) for v in row])
