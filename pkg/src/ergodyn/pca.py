"""Deterministic interval-map models of probabilistic cellular automata.

Every vertex ``g`` of a finite graph carries a state in ``0..K-1``; its next
state is drawn from a probability row that depends on the current states of
its neighbourhood ``O(g)`` (which contains ``g``).  The compiler replaces
each vertex by a coordinate ``x_g`` in [0, 1], with state ``s`` encoded by
the cell ``[s/K, (s+1)/K)``, and each neighbourhood configuration by a
piecewise-affine Markov map whose action on uniform cell densities is the
corresponding probability row.
"""

import csv
import itertools
from dataclasses import dataclass, field
from typing import Hashable, Optional

import numpy as np

from .errors import InvalidChainError, SpecError
from .markov import MarkovMapModel, StochasticMatrix, build_markov_map, verify_markov
from .measures import pushforward

DEFAULT_MAX_NEIGHBOURHOOD = 16
EXACT_STATE_LIMIT = 1 << 12


@dataclass(frozen=True, eq=False)
class PcaSpec:
    """Probabilistic cellular automaton on a finite graph.

    Parameters
    ----------
    n_states : int
    vertices : sequence
        Vertex labels; order fixes the coordinate order.
    edges : sequence of pairs
        Undirected adjacency.
    table : dict
        ``table[v][config]`` is the probability row of vertex ``v`` for the
        neighbourhood configuration ``config`` (a tuple of states listed in
        the order of :meth:`neighbourhood`).
    max_neighbourhood : int
        Largest allowed ``|O(g)|``.
    """

    n_states: int
    vertices: tuple
    edges: tuple
    table: dict
    max_neighbourhood: int = DEFAULT_MAX_NEIGHBOURHOOD
    _nbhd: dict = field(init=False, repr=False)

    def __post_init__(self):
        verts = tuple(self.vertices)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        if self.n_states < 1:
            raise SpecError("need at least one state")
        if len(set(verts)) != len(verts):
            raise SpecError("duplicate vertex labels")
        pos = {v: i for i, v in enumerate(verts)}
        adj = {v: {v} for v in verts}
        for u, v in self.edges:
            if u not in pos or v not in pos:
                raise SpecError(f"edge ({u}, {v}) uses an unknown vertex")
            adj[u].add(v)
            adj[v].add(u)
        nbhd = {v: tuple(sorted(adj[v], key=pos.__getitem__)) for v in verts}
        for v, nb in nbhd.items():
            if len(nb) > self.max_neighbourhood:
                raise SpecError(f"vertex {v} has {len(nb)} neighbours > {self.max_neighbourhood}")
        object.__setattr__(self, "_nbhd", nbhd)
        K = self.n_states
        for v in verts:
            rows = self.table.get(v)
            if rows is None:
                raise SpecError(f"no transition table for vertex {v}")
            for config in itertools.product(range(K), repeat=len(nbhd[v])):
                row = rows.get(config)
                if row is None:
                    raise SpecError(f"vertex {v}: missing row for configuration {config}")
                row = np.asarray(row, dtype=float)
                if row.shape != (K,) or np.any(row < 0) or abs(row.sum() - 1.0) > 1e-12:
                    raise InvalidChainError(f"vertex {v}, configuration {config}: bad row {row}")

    def neighbourhood(self, v: Hashable) -> tuple:
        """``O(v)`` in vertex order, ``v`` included."""
        return self._nbhd[v]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def row(self, v, config) -> np.ndarray:
        return np.asarray(self.table[v][tuple(config)], dtype=float)


@dataclass(frozen=True, eq=False)
class CompiledPca:
    """Per-vertex families of Markov maps indexed by neighbourhood configuration."""

    spec: PcaSpec
    models: dict

    @property
    def n_states(self) -> int:
        return self.spec.n_states

    def family_size(self, v) -> int:
        return len(self.models[v])

    def decode(self, x) -> np.ndarray:
        """Automaton states of coordinates: ``floor(x * K)``, clipped to ``K - 1``."""
        K = self.n_states
        return np.minimum((np.asarray(x) * K).astype(np.int64), K - 1)

    def encode(self, states, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Points inside the cells of ``states`` (uniform if ``rng`` is given, else midpoints)."""
        states = np.asarray(states)
        off = rng.random(states.shape) if rng is not None else 0.5
        return (states + off) / self.n_states


def compile_pca(spec: PcaSpec) -> CompiledPca:
    """Build the per-vertex, per-configuration Markov maps.

    The probability row of a configuration becomes a ``K x K`` matrix with
    identical rows, so the image distribution depends on the configuration
    only; it is compiled on ``K`` equal cells.
    """
    K = spec.n_states
    models = {}
    for v in spec.vertices:
        fam = {}
        for config in itertools.product(range(K), repeat=len(spec.neighbourhood(v))):
            row = spec.row(v, config)
            fam[config] = build_markov_map(StochasticMatrix(np.tile(row, (K, 1))))
        models[v] = fam
    return CompiledPca(spec, models)


compile = compile_pca


def _configs(compiled: CompiledPca, states: np.ndarray):
    """Per vertex: configuration codes of a batch of global states ``(B, n)``."""
    spec = compiled.spec
    K = spec.n_states
    pos = {v: i for i, v in enumerate(spec.vertices)}
    codes = []
    for v in spec.vertices:
        idx = [pos[u] for u in spec.neighbourhood(v)]
        weights = K ** np.arange(len(idx) - 1, -1, -1)
        codes.append(states[:, idx] @ weights)
    return codes


def _config_of_code(code: int, length: int, K: int) -> tuple:
    digits = []
    for _ in range(length):
        digits.append(code % K)
        code //= K
    return tuple(reversed(digits))


def step_compiled(compiled: CompiledPca, x) -> np.ndarray:
    """Synchronous update of points ``(n,)`` or batches ``(B, n)``."""
    x = np.asarray(x, dtype=float)
    batch = x.reshape(-1, x.shape[-1])
    states = compiled.decode(batch)
    codes = _configs(compiled, states)
    out = np.empty_like(batch)
    K = compiled.n_states
    for col, v in enumerate(compiled.spec.vertices):
        L = len(compiled.spec.neighbourhood(v))
        for code in np.unique(codes[col]):
            mask = codes[col] == code
            model = compiled.models[v][_config_of_code(int(code), L, K)]
            out[mask, col] = model.map.eval_array(batch[mask, col])
    return out.reshape(x.shape)


def simulate_pca(spec: PcaSpec, states0, n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """Direct stochastic simulation; returns states ``(n_steps + 1, B, n)``."""
    K = spec.n_states
    s = np.atleast_2d(np.asarray(states0, dtype=np.int64))
    tables = {}
    for v in spec.vertices:
        L = len(spec.neighbourhood(v))
        cum = np.array([np.cumsum(spec.row(v, _config_of_code(c, L, K))) for c in range(K ** L)])
        cum[:, -1] = 1.0
        tables[v] = cum
    out = np.empty((n_steps + 1,) + s.shape, dtype=np.int64)
    out[0] = s
    fake = CompiledPca(spec, {})
    for t in range(n_steps):
        codes = _configs(fake, s)
        u = rng.random(s.shape)
        nxt = np.empty_like(s)
        for col, v in enumerate(spec.vertices):
            cum = tables[v][codes[col]]
            nxt[:, col] = (u[:, [col]] >= cum).sum(axis=1)
        s = np.minimum(nxt, K - 1)
        out[t + 1] = s
    return out


def global_matrix(spec: PcaSpec) -> np.ndarray:
    """Transition matrix on the ``K^n`` global configurations (exact mode)."""
    K, n = spec.n_states, spec.n_vertices
    if K ** n > EXACT_STATE_LIMIT:
        raise SpecError(f"{K ** n} global states exceed the exact-mode limit")
    states = np.array(list(itertools.product(range(K), repeat=n)))
    codes = _configs(CompiledPca(spec, {}), states)
    Q = np.ones((len(states), len(states)))
    for col, v in enumerate(spec.vertices):
        L = len(spec.neighbourhood(v))
        rows = np.array([spec.row(v, _config_of_code(int(c), L, K)) for c in codes[col]])
        Q *= rows[:, states[:, col]]
    return Q


def compiled_distribution_step(compiled: CompiledPca, p: np.ndarray) -> np.ndarray:
    """Push a distribution over global configurations through the compiled maps.

    Each configuration ``s`` stands for the uniform measure on the product
    of cells ``[s_g/K, (s_g+1)/K)``.  Every vertex pushes its uniform cell
    density through its configuration's map (a density pushforward); the
    lumped cell masses of the vertices multiply because the coordinates
    evolve independently given ``s``.
    """
    spec = compiled.spec
    K, n = spec.n_states, spec.n_vertices
    states = np.array(list(itertools.product(range(K), repeat=n)))
    codes = _configs(compiled, states)
    out = np.zeros(K ** n)
    for idx in np.nonzero(p)[0]:
        factors = []
        for col, v in enumerate(spec.vertices):
            L = len(spec.neighbourhood(v))
            model = compiled.models[v][_config_of_code(int(codes[col][idx]), L, K)]
            start = np.zeros(K)
            start[states[idx, col]] = 1.0
            pushed = pushforward(model.map, model.density(start), operator=model.transfer)
            factors.append(model.lump(pushed))
        joint = factors[0]
        for f in factors[1:]:
            joint = np.multiply.outer(joint, f)
        out += p[idx] * joint.ravel()
    return out


@dataclass
class EquivalenceReport:
    mode: str
    tv: np.ndarray

    @property
    def max_divergence(self) -> float:
        return float(self.tv.max())


def equivalence_report(spec: PcaSpec, compiled: Optional[CompiledPca] = None, horizon: int = 50,
                       n_runs: int = 10**5, seed: int = 0, mode: str = "auto",
                       initial=None) -> EquivalenceReport:
    """Total-variation distance per time step between automaton and compiled model.

    ``exact`` mode evolves the configuration distribution by the global
    transition matrix on one side and by per-vertex density pushforwards on
    the other.  ``monte_carlo`` mode compares empirical configuration
    frequencies of ``n_runs`` direct simulations with those of ``n_runs``
    compiled orbits started from uniform points in the initial cells.
    ``initial`` is a distribution over configurations (default uniform).
    """
    compiled = compiled or compile_pca(spec)
    K, n = spec.n_states, spec.n_vertices
    N = K ** n
    if mode == "auto":
        mode = "exact" if N <= EXACT_STATE_LIMIT else "monte_carlo"
    p0 = np.full(N, 1.0 / N) if initial is None else np.asarray(initial, dtype=float)
    if mode == "exact":
        Q = global_matrix(spec)
        a = p0.copy()
        b = p0.copy()
        tv = [0.0]
        for _ in range(horizon):
            a = a @ Q
            b = compiled_distribution_step(compiled, b)
            tv.append(0.5 * float(np.abs(a - b).sum()))
        return EquivalenceReport("exact", np.array(tv))
    if mode != "monte_carlo":
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    idx0 = rng.choice(N, size=n_runs, p=p0)
    place = K ** np.arange(n - 1, -1, -1)
    s0 = (idx0[:, None] // place) % K
    direct = simulate_pca(spec, s0, horizon, rng)
    idx1 = rng.choice(N, size=n_runs, p=p0)
    x = compiled.encode((idx1[:, None] // place) % K, rng)
    tv = []
    for t in range(horizon + 1):
        ha = np.bincount(direct[t] @ place, minlength=N) / n_runs
        hb = np.bincount(compiled.decode(x) @ place, minlength=N) / n_runs
        tv.append(0.5 * float(np.abs(ha - hb).sum()))
        if t < horizon:
            x = step_compiled(compiled, x)
    return EquivalenceReport("monte_carlo", np.array(tv))


def verify_compiled(compiled: CompiledPca) -> list:
    """Violations found by running :func:`verify_markov` on every member map."""
    bad = []
    for v, fam in compiled.models.items():
        for config, model in fam.items():
            rep = verify_markov(model)
            if not rep.ok:
                bad.append((v, config, rep.violations))
    return bad


# ---------------------------------------------------------------------------
# example automata


def flip_chain(q: float) -> PcaSpec:
    """One vertex, two states, switching state with probability ``q``."""
    table = {0: {(0,): (1 - q, q), (1,): (q, 1 - q)}}
    return PcaSpec(2, (0,), (), table)


def voter_ring(n: int = 3, error: float = 0.1) -> PcaSpec:
    """Majority of {left, self, right} on a ring, wrong with probability ``error``."""
    verts = tuple(range(n))
    edges = tuple((i, (i + 1) % n) for i in range(n)) if n > 1 else ()
    table = {}
    for v in verts:
        size = len({v, (v - 1) % n, (v + 1) % n})
        rows = {}
        for config in itertools.product((0, 1), repeat=size):
            maj = int(sum(config) * 2 > size)
            row = [error, error]
            row[maj] = 1 - error
            rows[config] = tuple(row)
        table[v] = rows
    return PcaSpec(2, verts, edges, table)


def deterministic_rule(n: int, rule) -> PcaSpec:
    """Ring automaton with a deterministic local ``rule(config) -> state``."""
    verts = tuple(range(n))
    edges = tuple((i, (i + 1) % n) for i in range(n))
    table = {}
    for v in verts:
        size = len({v, (v - 1) % n, (v + 1) % n})
        rows = {}
        for config in itertools.product((0, 1), repeat=size):
            row = [0.0, 0.0]
            row[rule(config)] = 1.0
            rows[config] = tuple(row)
        table[v] = rows
    return PcaSpec(2, verts, edges, table)


# ---------------------------------------------------------------------------
# text format


def parse_pca(text: str) -> PcaSpec:
    """Parse the plain-text automaton format.

    ::

        states 2
        vertex a
        vertex b
        edge a b
        a 01 -> 0.9 0.1

    Configuration strings list one digit per neighbourhood vertex, in vertex
    declaration order (the vertex itself included).
    """
    K = None
    verts, edges, rows = [], [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "states":
                K = int(parts[1])
            elif parts[0] == "vertex":
                verts.append(parts[1])
            elif parts[0] == "edge":
                edges.append((parts[1], parts[2]))
            elif "->" in parts:
                arrow = parts.index("->")
                v, config = parts[0], parts[1]
                probs = tuple(float(p) for p in parts[arrow + 1:])
                cfg = tuple(int(c) for c in config.replace(",", ""))
                rows.setdefault(v, {})[cfg] = probs
            else:
                raise SpecError("unrecognized line")
        except (IndexError, ValueError) as exc:
            raise SpecError(f"line {lineno}: {raw.strip()!r}: {exc}") from None
    if K is None:
        raise SpecError("missing 'states K' line")
    return PcaSpec(K, tuple(verts), tuple(edges), rows)


def format_pca(spec: PcaSpec) -> str:
    lines = [f"states {spec.n_states}"]
    lines += [f"vertex {v}" for v in spec.vertices]
    lines += [f"edge {u} {v}" for u, v in spec.edges]
    for v in spec.vertices:
        for config, row in sorted(spec.table[v].items()):
            lines.append(f"{v} {''.join(map(str, config))} -> " + " ".join(repr(float(p)) for p in row))
    return "\n".join(lines) + "\n"


def write_divergence_csv(path, report: EquivalenceReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "tv_distance"])
        for t, d in enumerate(report.tv):
            w.writerow([t, repr(float(d))])
