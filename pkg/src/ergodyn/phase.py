"""Attractor censuses, parameter sweeps and stability diagnostics for lattices.

A census iterates many initial states, summarizes each tail, and merges
tails that end up within ``merge_radius`` of each other (max-coordinate
distance, single linkage).  Each resulting cluster is counted as one
attractor.  Sweeping a parameter and watching the count change is the
operational form of a phase transition.
"""

import csv
import itertools
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from .lattice import LatticeSystem, apply_coupling, cloud_distance, step
from .measures import EmpiricalMeasure

MAX_PERIOD = 64
CORNER_LIMIT = 12


@dataclass
class Attractor:
    representative: np.ndarray
    basin_fraction: float
    classification: str
    period: int
    n_members: int
    marginals: list = field(default_factory=list, repr=False)

    def corner_distance(self) -> float:
        """Max-coordinate distance to the nearest vertex of the cube."""
        r = self.representative
        return float(np.max(np.minimum(r, 1.0 - r)))


@dataclass
class AttractorCensus:
    attractors: list
    unresolved: int
    unresolved_fraction: float
    parameters: dict
    sample_size: int

    @property
    def count(self) -> int:
        return len(self.attractors)


def _corner_seeds(d: int, offset: float) -> np.ndarray:
    corners = np.array(list(itertools.product((0.0, 1.0), repeat=d)))
    return np.abs(corners - offset)


def _tail_summary(tail: np.ndarray, radius: float):
    """Classify each tail: period (1 = fixed) or 0 when unresolved.

    A tail has period ``p`` when every state stays within ``radius`` of the
    state at the same phase in the first period, so slow drifts are caught.
    """
    n_tail, B, _ = tail.shape
    period = np.zeros(B, dtype=int)
    for p in range(1, min(MAX_PERIOD, n_tail // 2) + 1):
        todo = np.nonzero(period == 0)[0]
        if not len(todo):
            break
        phase = np.arange(n_tail) % p
        ref = tail[phase][:, todo] if p > 1 else tail[:1, todo]
        dev = np.max(np.abs(tail[:, todo] - ref), axis=(0, 2))
        period[todo[dev <= radius]] = p
    return period


def attractor_census(system: LatticeSystem, n_transient: int = 5000, n_tail: int = 200,
                     n_samples: int = 200, merge_radius: float = 1e-4, seed: int = 0,
                     corners: Optional[bool] = None, corner_offset: float = 1e-3,
                     parameters: Optional[dict] = None) -> AttractorCensus:
    """Count attractors of a finite lattice from random and corner seeds.

    Parameters
    ----------
    system : LatticeSystem
    n_transient, n_tail : int
        Steps discarded, then steps summarized.
    n_samples : int
        Uniform random initial states; basin fractions are measured on these.
    merge_radius : float
        Single-linkage cut in max-coordinate distance between tail means.
    corners : bool, optional
        Add every vertex of the cube, moved ``corner_offset`` inward.  Defaults
        to ``d <= 12``.

    Tails that are neither fixed nor periodic with period <= 64 (within
    ``merge_radius``) are counted as unresolved and never merged.
    """
    if n_transient < 1 or n_tail < 1:
        raise ValueError("n_transient and n_tail must be >= 1")
    d = system.d
    rng = np.random.default_rng(seed)
    x = rng.random((n_samples, d))
    if corners is None:
        corners = d <= CORNER_LIMIT
    if corners:
        x = np.vstack([x, _corner_seeds(d, corner_offset)])
    for _ in range(n_transient):
        x = step(system, x)
    tail = np.empty((n_tail,) + x.shape)
    for t in range(n_tail):
        tail[t] = x
        x = step(system, x)
    period = _tail_summary(tail, merge_radius)
    means = tail.mean(axis=0)
    resolved = np.nonzero(period > 0)[0]
    attractors = []
    if len(resolved):
        if len(resolved) == 1:
            labels = np.array([1])
        else:
            Z = linkage(means[resolved], method="single", metric="chebyshev")
            labels = fcluster(Z, t=merge_radius, criterion="distance")
        # deterministic order: sort clusters by their representative
        groups = {}
        for idx, lab in zip(resolved, labels):
            groups.setdefault(lab, []).append(idx)
        reps = []
        for members in groups.values():
            members = np.array(members)
            rep = means[members].mean(axis=0)
            reps.append((tuple(np.round(rep, 12)), rep, members))
        reps.sort(key=lambda r: r[0])
        for _, rep, members in reps:
            per = int(period[members].max())
            basin = float(np.sum(members < n_samples)) / max(n_samples, 1)
            member = members[0]
            marg = [EmpiricalMeasure.from_points(tail[:, member, i]) for i in range(d)]
            attractors.append(Attractor(
                representative=rep,
                basin_fraction=basin,
                classification="fixed" if per == 1 else "periodic",
                period=per,
                n_members=len(members),
                marginals=marg,
            ))
    unresolved = int(np.sum(period == 0))
    unresolved_random = int(np.sum(period[:n_samples] == 0))
    params = {"d": d, "seed": seed, "merge_radius": merge_radius}
    params.update(parameters or {})
    return AttractorCensus(attractors, unresolved, unresolved_random / max(n_samples, 1),
                           params, len(x))


@dataclass
class SweepResult:
    gammas: list
    counts: list
    censuses: list
    transitions: list
    quality: list


def phase_sweep(family: Callable[[float], LatticeSystem], gammas: Sequence[float],
                jobs: int = 1, **census_kwargs) -> SweepResult:
    """Census at every grid value and the grid intervals where the count changes.

    ``quality`` is ``"ok"`` or ``"unresolved"`` per grid point.  Results are
    returned in grid order whatever ``jobs`` is.
    """
    gammas = list(gammas)
    if not gammas:
        raise ValueError("empty parameter grid")

    def run(g):
        return attractor_census(family(g), parameters={"gamma": g}, **census_kwargs)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            censuses = list(pool.map(run, gammas))
    else:
        censuses = [run(g) for g in gammas]
    counts = [c.count for c in censuses]
    transitions = [
        (gammas[k], gammas[k + 1], counts[k], counts[k + 1])
        for k in range(len(gammas) - 1)
        if counts[k] != counts[k + 1]
    ]
    quality = ["unresolved" if c.unresolved else "ok" for c in censuses]
    return SweepResult(gammas, counts, censuses, transitions, quality)


# ---------------------------------------------------------------------------
# stability diagnostics


@dataclass
class StabilityDiagnostics:
    """Finite-sample estimates of the stability hypotheses.

    Attributes
    ----------
    C_hat, C_hat_interaction : float
        Largest observed ratio ``dist(T*mu, T*nu) / dist(mu, nu)`` for the
        full step and for the interaction alone.
    psi_hat : dict
        Window size -> largest distance between the small-window push and
        the restriction of the large-window push.
    phi_hat : dict
        Step count n -> largest distance between an n-step push and the
        reference natural measure.
    phi_decays : bool
        Whether ``phi_hat`` at the largest n fell below ``decay_ratio`` times
        its value at the smallest n (or below ``floor``).
    """

    C_hat: float
    C_hat_interaction: float
    psi_hat: dict
    phi_hat: dict
    phi_decays: bool
    n_pairs: int
    n_particles: int
    warnings: list = field(default_factory=list)


def random_product_measure(rng, d: int, n_cells: int = 8) -> np.ndarray:
    """Cell masses ``(d, n_cells)`` of a random piecewise-uniform product measure."""
    return rng.dirichlet(np.ones(n_cells), size=d)


def concentrated_measure(corner: np.ndarray, n_cells: int = 64) -> np.ndarray:
    """Product measure uniform on the cell touching the given cube vertex."""
    d = len(corner)
    masses = np.zeros((d, n_cells))
    masses[np.arange(d), np.where(np.asarray(corner) > 0.5, n_cells - 1, 0)] = 1.0
    return masses


def particles(masses: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF samples of a product measure for shared uniforms ``u`` (n, d)."""
    d, W = masses.shape
    cum = np.cumsum(masses, axis=1)
    out = np.empty_like(u)
    for i in range(d):
        k = np.minimum(np.searchsorted(cum[i], u[:, i], side="right"), W - 1)
        start = cum[i, k] - masses[i, k]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(masses[i, k] > 0, (u[:, i] - start) / masses[i, k], 0.5)
        out[:, i] = (k + np.clip(frac, 0.0, 1.0)) / W
    return np.minimum(out, np.nextafter(1.0, 0.0))


def _push(system, cloud, n):
    for _ in range(n):
        cloud = step(system, cloud)
    return cloud


def stability_diagnostics(system: LatticeSystem, windows: Sequence[int] = (),
                          n_pairs: int = 20, n_particles: int = 2000,
                          n_steps: Sequence[int] = (1, 2, 4, 8, 16, 32),
                          n_reference: int = 2000, seed: int = 0,
                          decay_ratio: float = 0.1, floor: float = 1e-6) -> StabilityDiagnostics:
    """Estimate expansion, locality and relaxation constants from particle clouds.

    Measures are piecewise-uniform product measures sampled by the inverse
    CDF with shared uniforms, so each pair of clouds is coupled monotonically
    site by site.  ``dist`` is the product metric (largest per-site W1).

    * ``C_hat``: random pairs, one step of the system and of the interaction.
    * ``psi_hat``: for each window size ``s < d`` in ``windows``, the central
      ``s`` sites evolved alone versus inside the full ``d``-site system.
    * ``phi_hat``: distance of ``T^n mu`` to the reference measure, obtained
      by pushing the uniform measure ``n_reference`` steps; ``mu`` ranges over
      random measures and measures concentrated at cube vertices.
    """
    d = system.d
    rng = np.random.default_rng(seed)
    u = rng.random((n_particles, d))
    notes = []
    C = 0.0
    C_int = 0.0
    for _ in range(n_pairs):
        a = particles(random_product_measure(rng, d), u)
        b = particles(random_product_measure(rng, d), u)
        base = cloud_distance(a, b)
        if base < 1e-6:
            notes.append("pair with dist < 1e-6 skipped")
            continue
        C = max(C, cloud_distance(step(system, a), step(system, b)) / base)
        C_int = max(C_int, cloud_distance(apply_coupling(system.coupling, a),
                                          apply_coupling(system.coupling, b)) / base)
    psi = {}
    for s in windows:
        if not 0 < s < d:
            raise ValueError("window sizes must lie strictly between 0 and d")
        small = system.with_sites(s)
        start = (d - s) // 2
        worst = 0.0
        for _ in range(n_pairs):
            cloud = particles(random_product_measure(rng, d), u)
            full = step(system, cloud)[:, start:start + s]
            part = step(small, cloud[:, start:start + s])
            worst = max(worst, cloud_distance(full, part))
        psi[s] = worst
    reference = _push(system, u.copy(), n_reference)
    probes = [random_product_measure(rng, d) for _ in range(n_pairs)]
    corner_list = [np.zeros(d), np.ones(d)]
    corner_list += [rng.integers(0, 2, d).astype(float) for _ in range(max(0, n_pairs - 2))]
    probes += [concentrated_measure(c) for c in corner_list]
    phi = {n: 0.0 for n in n_steps}
    steps_sorted = sorted(n_steps)
    for masses in probes:
        cloud = particles(masses, u)
        done = 0
        for n in steps_sorted:
            cloud = _push(system, cloud, n - done)
            done = n
            phi[n] = max(phi[n], cloud_distance(cloud, reference))
    first, last = phi[steps_sorted[0]], phi[steps_sorted[-1]]
    decays = last <= floor or last <= decay_ratio * first
    if C_int > 1 + 1e-9:
        notes.append(f"interaction expansion {C_int!r} exceeds 1")
    return StabilityDiagnostics(C, C_int, psi, phi, decays, n_pairs, n_particles, notes)


# ---------------------------------------------------------------------------
# CSV


def write_census_csv(path, rows) -> None:
    """``rows`` is a list of ``(gamma, census)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        d = max((c.parameters["d"] for _, c in rows), default=0)
        w.writerow(["gamma", "attractor_id", "basin_fraction", "classification"]
                   + [f"x_{i}" for i in range(d)])
        for gamma, census in rows:
            for k, a in enumerate(census.attractors):
                w.writerow([repr(float(gamma)), k, repr(a.basin_fraction), a.classification]
                           + [repr(float(v)) for v in a.representative])


def write_transitions_csv(path, transitions) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma_left", "gamma_right", "count_left", "count_right"])
        for row in transitions:
            w.writerow([repr(float(row[0])), repr(float(row[1])), row[2], row[3]])
