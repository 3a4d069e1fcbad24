"""Command-line front end.

Every subcommand resolves its parameters as defaults < ``--config`` JSON <
command-line flags, writes its CSV artifacts as ``<subcommand>-<hash>.csv``
(the hash covers the resolved configuration) and a JSON manifest echoing
that configuration.  A manifest can be passed back through ``--config`` to
reproduce a run.

Exit codes: 0 success, 1 bad configuration, 2 computation error.
"""

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io, lattice, maps, markov, measures, pca, phase, ulam
from .errors import ErgodynError

OUT_ENV = "ERGODYN_OUT"

DEFAULTS = {
    "build-map": {"matrix": None, "walk": None, "walk_params": None, "M": 10, "merge": True},
    "verify-map": {"matrix": None, "table": None, "base": None},
    "natural-measure": {"map": None, "table": None, "n": 10000, "W": 2000},
    "birkhoff": {"map": None, "table": None, "x0": 0.3, "n": 100000},
    "occupation": {"map": None, "table": None, "x0": 0.37, "a": 0.0, "b": 0.05, "n": 100000},
    "ulam": {"map": None, "table": None, "W": 64, "method": "exact", "samples": 1000000,
             "max_iter": 1000000},
    "lattice-run": {"map": None, "d": 4, "eps": 0.05, "weights": None, "boundary": "periodic",
                    "order": lattice.INTERACTION_AFTER_MAP, "n": 100, "x0": None},
    "doubling-check": {"map": "cubic_pitchfork", "d": 4, "eps": 0.1, "weights": None,
                       "boundary": "periodic", "n": 1000, "runs": 20},
    "census": {"map": "cubic_pitchfork", "d": 3, "eps": 0.05, "weights": None,
               "boundary": "fixed:0", "n_transient": 5000, "n_tail": 200, "samples": 200,
               "merge_radius": 1e-4},
    "sweep": {"map": "cubic_pitchfork", "d": 3, "eps": 0.05, "weights": None,
              "boundary": "fixed:0", "param": "y", "grid": "0,1", "n_transient": 5000,
              "n_tail": 200, "samples": 200, "merge_radius": 1e-4},
    "stability": {"map": "cubic_pitchfork", "d": 3, "eps": 0.05, "weights": None,
                  "boundary": "fixed:1", "windows": "", "pairs": 20, "particles": 2000,
                  "steps": "1,2,4,8,16,32"},
    "pca-compile": {"spec": None, "example": "voter:3:0.1"},
    "pca-equiv": {"spec": None, "example": "flip:0.3", "horizon": 50, "runs": 100000,
                  "mode": "auto"},
}

HELP = {
    "build-map": "compile a transition matrix or random walk into a Markov map",
    "verify-map": "check the Markov property of a compiled or tabulated map",
    "natural-measure": "Cesaro estimate of the natural measure from Lebesgue",
    "birkhoff": "occupation measure of one orbit",
    "occupation": "running fraction of time an orbit spends in an interval",
    "ulam": "Ulam chain and its stationary density",
    "lattice-run": "trajectory of a coupled map lattice",
    "doubling-check": "compare a lattice with its doubled form",
    "census": "count attractors of a finite lattice",
    "sweep": "attractor counts over a parameter grid",
    "stability": "estimate expansion, locality and relaxation constants",
    "pca-compile": "compile a probabilistic cellular automaton into interval maps",
    "pca-equiv": "divergence between an automaton and its compiled model",
}


class ConfigError(Exception):
    """Invalid or inconsistent run configuration (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_options(sub: argparse.ArgumentParser, name: str) -> None:
    sub.add_argument("--config", help="JSON config or manifest file")
    sub.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    sub.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or .)")
    sub.add_argument("--jobs", type=int, default=None, help="worker threads for sweeps")
    for key, default in DEFAULTS[name].items():
        flag = "--" + key.replace("_", "-")
        if isinstance(default, bool):
            sub.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction, default=None)
        elif isinstance(default, int) and key not in ("x0",):
            sub.add_argument(flag, dest=key, type=int, default=None)
        elif isinstance(default, float):
            sub.add_argument(flag, dest=key, type=float, default=None)
        else:
            sub.add_argument(flag, dest=key, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ergodyn", description="Natural measures, Markov models and "
                     "coupled map lattices on the unit interval.")
    subs = parser.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    for name in DEFAULTS:
        sub = subs.add_parser(name, help=HELP[name], description=HELP[name])
        _add_options(sub, name)
    return parser


def resolve_config(name: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[name])
    cfg["seed"] = 0
    cfg["jobs"] = 1
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if "config" in loaded and isinstance(loaded["config"], dict):
            loaded = loaded["config"]
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        loaded.pop("command", None)
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys for {name}: {sorted(unknown)}")
        cfg.update(loaded)
    for key in list(cfg):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def config_hash(name: str, cfg: dict) -> str:
    blob = json.dumps({"command": name, **cfg}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# input helpers (failures here are configuration errors)


def _load_map(cfg) -> maps.PiecewiseMap:
    if cfg.get("table"):
        try:
            return io.parse_map_table(Path(cfg["table"]).read_text(), name=Path(cfg["table"]).stem)
        except (OSError, ErgodynError) as exc:
            raise ConfigError(str(exc)) from None
    if not cfg.get("map"):
        raise ConfigError("give --map NAME or --table FILE")
    if cfg["map"] not in maps.CATALOG:
        raise ConfigError(f"unknown map {cfg['map']!r}; choose from {sorted(maps.CATALOG)}")
    try:
        return maps.catalog(cfg["map"])
    except TypeError as exc:
        raise ConfigError(f"map {cfg['map']!r}: {exc}") from None


def _floats(text, what):
    if text is None or text == "":
        return []
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{what} must be a comma-separated list of numbers") from None


def _coupling(cfg) -> lattice.CouplingSpec:
    try:
        boundary = lattice.parse_boundary(cfg["boundary"])
        weights = _floats(cfg.get("weights"), "weights") or [1 / 3, 1 / 3, 1 / 3]
        return lattice.CouplingSpec(float(cfg["eps"]), weights, boundary)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _system(cfg, order=lattice.INTERACTION_AFTER_MAP) -> lattice.LatticeSystem:
    d = int(cfg["d"])
    if d < 1:
        raise ConfigError("d must be >= 1")
    return lattice.LatticeSystem(d, _load_map(cfg), _coupling(cfg), order)


def _pca_spec(cfg) -> pca.PcaSpec:
    if cfg.get("spec"):
        try:
            return pca.parse_pca(Path(cfg["spec"]).read_text())
        except (OSError, ErgodynError) as exc:
            raise ConfigError(str(exc)) from None
    kind, *rest = str(cfg["example"]).split(":")
    try:
        if kind == "flip":
            return pca.flip_chain(float(rest[0]))
        if kind == "voter":
            return pca.voter_ring(int(rest[0]), float(rest[1]))
    except (IndexError, ValueError):
        pass
    raise ConfigError(f"unknown example {cfg['example']!r}; use flip:<q> or voter:<n>:<error>")


# ---------------------------------------------------------------------------
def _read_matrix(path):
    try:
        return io.read_matrix(path)
    except (OSError, ErgodynError) as exc:
        raise ConfigError(f"matrix file {path}: {exc}") from None


# ---------------------------------------------------------------------------
# subcommands; each returns {suffix: (header, rows)} or writes files itself


def _rows_measure(est):
    rows = []
    rep = est.representation
    if isinstance(rep, measures.CellDensity):
        rows += [("cell", repr(float(l)), repr(float(r)), repr(float(q)))
                 for l, r, q in zip(rep.partition[:-1], rep.partition[1:], rep.mass)]
    else:
        rows += [("point", repr(x), repr(w), "") for x, w in rep.atoms]
    rows += [("atom", repr(a.location), repr(a.weight), "") for a in est.atom_summary]
    return rows


def _trace_rows(trace):
    return [(int(n), repr(float(v))) for n, v in trace]


def cmd_build_map(cfg):
    if cfg.get("matrix"):
        model = markov.build_markov_map(_read_matrix(cfg["matrix"]))
    elif cfg.get("walk"):
        params = _floats(cfg.get("walk_params"), "walk_params")
        if cfg["walk"] == "inhomogeneous":
            params = [params[k:k + 3] for k in range(0, len(params), 3)]
        model = markov.build_random_walk_map(cfg["walk"], params, int(cfg["M"]))
    else:
        raise ConfigError("give --matrix FILE or --walk KIND")
    m = model.map.merged() if cfg["merge"] else model.map
    rows = [(repr(b), repr(a), repr(c)) for b, a, c in m.table()]
    cells = [(k, repr(float(l)), repr(float(r)), int(s), int(t))
             for k, (l, r, s, t) in enumerate(zip(model.refined_partition[:-1],
                                                  model.refined_partition[1:],
                                                  model.source_state, model.target_state))]
    return {"": (["breakpoint", "slope", "intercept"], rows),
            "cells": (["cell", "left", "right", "state", "target"], cells)}


def cmd_verify_map(cfg):
    if cfg.get("matrix"):
        rep = markov.verify_markov(markov.build_markov_map(_read_matrix(cfg["matrix"])))
    elif cfg.get("table"):
        m = _load_map(cfg)
        base = _floats(cfg.get("base"), "base")
        try:
            rep = markov.verify_partition(m, base)
        except ValueError as exc:
            raise ConfigError(f"--base: {exc}") from None
    else:
        raise ConfigError("give --matrix FILE or --table FILE --base ...")
    rows = [("markov", rep.ok, rep.n_cells, "" if rep.bound is None else rep.bound)]
    rows += [("violation", False, "", v) for v in rep.violations]
    return {"": (["check", "ok", "cells", "detail"], rows)}


def cmd_natural_measure(cfg):
    est = measures.cesaro_natural(_load_map(cfg), n_steps=int(cfg["n"]), W=int(cfg["W"]))
    return {"": (["kind", "a", "b", "c"], _rows_measure(est)),
            "trace": (["n", "value"], _trace_rows(est.trace))}


def cmd_birkhoff(cfg):
    est = measures.birkhoff(_load_map(cfg), float(cfg["x0"]), int(cfg["n"]))
    return {"": (["kind", "a", "b", "c"], _rows_measure(est)),
            "trace": (["n", "value"], _trace_rows(est.trace))}


def cmd_occupation(cfg):
    tr = measures.occupation_fraction(_load_map(cfg), float(cfg["x0"]),
                                      (float(cfg["a"]), float(cfg["b"])), int(cfg["n"]))
    rows = [(int(n), repr(float(v))) for n, v in zip(tr.n, tr.values)]
    summary = [("tail_start", tr.tail_start), ("tail_max", repr(tr.tail_max)),
               ("tail_min", repr(tr.tail_min)), ("final", repr(tr.final))]
    return {"": (["n", "value"], rows), "summary": (["quantity", "value"], summary)}


def cmd_ulam(cfg):
    if cfg["method"] not in ("exact", "monte_carlo"):
        raise ConfigError("--method must be exact or monte_carlo")
    approx = ulam.ulam_matrix(_load_map(cfg), int(cfg["W"]), method=cfg["method"],
                              samples=int(cfg["samples"]), seed=int(cfg["seed"]))
    res = ulam.stationary(approx.matrix, seed=int(cfg["seed"]), max_iter=int(cfg["max_iter"]))
    p = approx.partition
    rows = [(k, repr(float(p[k])), repr(float(p[k + 1])), repr(float(v)))
            for k, v in enumerate(res.vector)]
    info = [("residual", repr(res.residual)), ("iterations", res.iterations),
            ("unique", res.unique), ("spread", repr(res.spread))]
    return {"": (["cell", "left", "right", "mass"], rows),
            "matrix": (["row", "col", "prob"], approx.matrix.triples()),
            "summary": (["quantity", "value"], info)}


def cmd_lattice_run(cfg):
    system = _system(cfg, cfg["order"])
    x0 = _floats(cfg.get("x0"), "x0")
    if not x0:
        x0 = np.random.default_rng(int(cfg["seed"])).random(system.d)
    if len(x0) != system.d:
        raise ConfigError(f"x0 has {len(x0)} entries, d = {system.d}")
    traj = lattice.trajectory(system, np.array(x0), int(cfg["n"]))
    rows = [[t] + [repr(float(v)) for v in row] for t, row in enumerate(traj)]
    return {"": (["t"] + [f"x_{i}" for i in range(system.d)], rows)}


def cmd_doubling_check(cfg):
    system = _system(cfg, lattice.MAP_AFTER_INTERACTION)
    dbl = lattice.doubling_transform(system)
    rows = []
    for run in range(int(cfg["runs"])):
        x0 = np.random.default_rng([int(cfg["seed"]), run]).random(system.d)
        a = lattice.trajectory(system, x0, int(cfg["n"]))
        b = dbl.project(lattice.trajectory(dbl, dbl.lift(x0), int(cfg["n"])))
        rows.append((run, repr(float(np.max(np.abs(a - b))))))
    return {"": (["run", "max_deviation"], rows)}


def _census_kwargs(cfg):
    return dict(n_transient=int(cfg["n_transient"]), n_tail=int(cfg["n_tail"]),
                n_samples=int(cfg["samples"]), merge_radius=float(cfg["merge_radius"]),
                seed=int(cfg["seed"]))


def _census_rows(pairs):
    rows = []
    for gamma, census in pairs:
        for k, a in enumerate(census.attractors):
            rows.append([repr(float(gamma)), k, repr(a.basin_fraction), a.classification]
                        + [repr(float(v)) for v in a.representative])
    return rows


def cmd_census(cfg):
    system = _system(cfg)
    census = phase.attractor_census(system, **_census_kwargs(cfg))
    header = ["gamma", "attractor_id", "basin_fraction", "classification"]
    header += [f"x_{i}" for i in range(system.d)]
    info = [("count", census.count), ("unresolved", census.unresolved)]
    return {"": (header, _census_rows([(cfg["eps"], census)])),
            "summary": (["quantity", "value"], info)}


def cmd_sweep(cfg):
    grid = _floats(cfg["grid"], "grid")
    if not grid:
        raise ConfigError("empty --grid")
    if cfg["param"] not in ("y", "eps"):
        raise ConfigError("--param must be 'y' or 'eps'")
    base = _system(cfg)

    def family(g):
        spec = base.coupling
        if cfg["param"] == "y":
            spec = lattice.CouplingSpec(spec.epsilon, spec.weights, lattice.Fixed(g))
        else:
            spec = lattice.CouplingSpec(g, spec.weights, spec.boundary)
        return lattice.LatticeSystem(base.d, base.local_maps, spec)

    res = phase.phase_sweep(family, grid, jobs=int(cfg["jobs"]), **_census_kwargs(cfg))
    header = ["gamma", "attractor_id", "basin_fraction", "classification"]
    header += [f"x_{i}" for i in range(base.d)]
    counts = [(repr(float(g)), c, q) for g, c, q in zip(res.gammas, res.counts, res.quality)]
    trans = [(repr(float(a)), repr(float(b)), ca, cb) for a, b, ca, cb in res.transitions]
    return {"": (header, _census_rows(zip(res.gammas, res.censuses))),
            "counts": (["gamma", "count", "quality"], counts),
            "transitions": (["gamma_left", "gamma_right", "count_left", "count_right"], trans)}


def cmd_stability(cfg):
    system = _system(cfg)
    windows = [int(w) for w in _floats(cfg.get("windows"), "windows")]
    steps = [int(s) for s in _floats(cfg.get("steps"), "steps")]
    try:
        diag = phase.stability_diagnostics(system, windows=windows, n_pairs=int(cfg["pairs"]),
                                           n_particles=int(cfg["particles"]), n_steps=steps,
                                           seed=int(cfg["seed"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = [("C_hat", "", repr(diag.C_hat)),
            ("C_hat_interaction", "", repr(diag.C_hat_interaction)),
            ("phi_decays", "", diag.phi_decays)]
    rows += [("psi_hat", s, repr(v)) for s, v in diag.psi_hat.items()]
    rows += [("phi_hat", n, repr(v)) for n, v in diag.phi_hat.items()]
    return {"": (["quantity", "key", "value"], rows)}


def cmd_pca_compile(cfg):
    spec = _pca_spec(cfg)
    compiled = pca.compile_pca(spec)
    rows = []
    for v, fam in compiled.models.items():
        for config, model in fam.items():
            for b, a, c in model.map.table():
                rows.append((v, "".join(map(str, config)), repr(b), repr(a), repr(c)))
    bad = pca.verify_compiled(compiled)
    if bad:
        raise ErgodynError(f"compiled maps fail the Markov check: {bad[:3]}")
    return {"": (["vertex", "config", "breakpoint", "slope", "intercept"], rows)}


def cmd_pca_equiv(cfg):
    if cfg["mode"] not in ("auto", "exact", "monte_carlo"):
        raise ConfigError("--mode must be auto, exact or monte_carlo")
    spec = _pca_spec(cfg)
    rep = pca.equivalence_report(spec, horizon=int(cfg["horizon"]), n_runs=int(cfg["runs"]),
                                 seed=int(cfg["seed"]), mode=cfg["mode"])
    rows = [(t, repr(float(d))) for t, d in enumerate(rep.tv)]
    return {"": (["t", "tv_distance"], rows),
            "summary": (["quantity", "value"], [("mode", rep.mode),
                                                 ("max_divergence", repr(rep.max_divergence))])}


COMMANDS = {
    "build-map": cmd_build_map,
    "verify-map": cmd_verify_map,
    "natural-measure": cmd_natural_measure,
    "birkhoff": cmd_birkhoff,
    "occupation": cmd_occupation,
    "ulam": cmd_ulam,
    "lattice-run": cmd_lattice_run,
    "doubling-check": cmd_doubling_check,
    "census": cmd_census,
    "sweep": cmd_sweep,
    "stability": cmd_stability,
    "pca-compile": cmd_pca_compile,
    "pca-equiv": cmd_pca_equiv,
}


def run(argv=None) -> int:
    """Parse ``argv``, run the subcommand and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_help()
        return 1
    name = args.command
    try:
        cfg = resolve_config(name, args)
        out = Path(args.out or cfg.pop("out", None) or os.environ.get(OUT_ENV, "."))
        cfg.pop("out", None)
        out.mkdir(parents=True, exist_ok=True)
        digest = config_hash(name, cfg)
        results = COMMANDS[name](cfg)
    except (ConfigError, argparse.ArgumentTypeError) as exc:
        print(f"ergodyn {name}: bad config: {exc}", file=sys.stderr)
        return 1
    except (ErgodynError, ValueError) as exc:
        print(f"ergodyn {name}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    written = []
    for suffix, (header, rows) in results.items():
        fname = f"{name}-{digest}{'-' + suffix if suffix else ''}.csv"
        io.write_rows_csv(out / fname, header, rows)
        written.append(fname)
    manifest = {"command": name, "config": cfg, "hash": digest, "outputs": written}
    (out / f"{name}-{digest}.manifest.json").write_text(json.dumps(manifest, indent=2,
                                                                   sort_keys=True, default=str))
    for fname in written:
        print(out / fname)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
