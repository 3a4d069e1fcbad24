"""Plain-text formats for matrices and piecewise-affine maps."""

import csv
from pathlib import Path

from .errors import InvalidChainError, InvalidMapError
from .maps import PiecewiseMap, from_table
from .markov import StochasticMatrix


def parse_matrix(text: str) -> StochasticMatrix:
    """First non-comment line ``N``, then one ``row col prob`` triple per line."""
    lines = [l.split("#", 1)[0].strip() for l in text.splitlines()]
    lines = [l for l in lines if l]
    if not lines:
        raise InvalidChainError("empty matrix file")
    try:
        n = int(lines[0])
        triples = []
        for l in lines[1:]:
            i, j, p = l.split()
            triples.append((int(i), int(j), _number(p)))
    except ValueError as exc:
        raise InvalidChainError(f"malformed matrix file: {exc}") from None
    return StochasticMatrix.from_triples(n, triples)


def _number(text: str) -> float:
    if "/" in text:
        num, den = text.split("/")
        return float(num) / float(den)
    return float(text)


def format_matrix(P) -> str:
    if not isinstance(P, StochasticMatrix):
        P = StochasticMatrix(P)
    rows = [str(P.n_states)] + [f"{i} {j} {p!r}" for i, j, p in P.triples()]
    return "\n".join(rows) + "\n"


def read_matrix(path) -> StochasticMatrix:
    return parse_matrix(Path(path).read_text())


def write_matrix(path, P) -> None:
    Path(path).write_text(format_matrix(P))


def parse_map_table(text: str, name: str = "custom") -> PiecewiseMap:
    """Rows ``breakpoint, slope, intercept``; optional ``override, point, image`` rows."""
    rows, overrides = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            if parts[0] == "override":
                overrides.append((_number(parts[1]), _number(parts[2])))
            elif parts[0] == "breakpoint":
                continue
            else:
                rows.append(tuple(_number(p) for p in parts[:3]))
        except (IndexError, ValueError):
            raise InvalidMapError(f"line {lineno}: cannot parse {raw.strip()!r}") from None
    if not rows:
        raise InvalidMapError("map table has no branches")
    return from_table(rows, overrides, name=name)


def format_map_table(m: PiecewiseMap) -> str:
    out = ["breakpoint,slope,intercept"]
    out += [f"{b!r},{a!r},{c!r}" for b, a, c in m.table()]
    out += [f"override,{p!r},{v!r}" for p, v in m.point_overrides]
    return "\n".join(out) + "\n"


def write_rows_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
