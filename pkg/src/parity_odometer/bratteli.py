"""Two-vertex Bratteli diagram, its AF-measure and the map onto the product space.

Level ``n`` has vertices ``v_{n,0}`` and ``v_{n,1}``. An edge into level ``n``
is labelled by ``(x, v_prev, v)`` with ``x = 0`` for a self-edge and
``x in 1..q**n`` for a cross-edge. Edge lists are never materialized.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

from .errors import InvalidPath
from .measure import BaseSchedule, cylinder_measure, Cylinder, parity

PathPrefix = tuple  # ((x_1, v_1), ..., (x_n, v_n))


@dataclass(frozen=True)
class Edge:
    level: int
    source: int
    target: int
    label: int


@dataclass(frozen=True)
class BratteliDiagram:
    q: int
    levels: int

    def vertices(self, n: int) -> tuple[int, ...]:
        return (0,) if n == 0 else (0, 1)

    def multiplicity(self, n: int, source: int, target: int) -> int:
        """Number of edges ``v_{n-1,source} -> v_{n,target}``."""
        if not 1 <= n <= self.levels:
            raise ValueError(f"level {n} outside 1..{self.levels}")
        if n == 1:
            if source != 0:
                return 0
            return 1 if target == 0 else self.q
        return 1 if source == target else self.q**n

    def edge_counts(self, n: int) -> dict[tuple[int, int], int]:
        sources = (0,) if n == 1 else (0, 1)
        return {(s, t): self.multiplicity(n, s, t) for s in sources for t in (0, 1)}

    def is_edge(self, n: int, x: int, source: int, target: int) -> bool:
        if not 1 <= n <= self.levels or source not in self.vertices(n - 1) or target not in (0, 1):
            return False
        if source == target:
            return x == 0
        return 1 <= x <= self.q**n

    def out_edges(self, n: int, source: int) -> Iterator[Edge]:
        """Edges leaving ``v_{n-1,source}``; cross-edges are generated lazily."""
        for target in (0, 1):
            if n == 1 and target == 0:
                yield Edge(1, 0, 0, 0)
            elif source == target:
                yield Edge(n, source, target, 0)
            else:
                for x in range(1, self.q**n + 1):
                    yield Edge(n, source, target, x)

    def to_dot(self) -> str:
        lines = ["digraph bratteli {", "  rankdir=TB;", '  "v0_0" [label="v(0,0)"];']
        for n in range(1, self.levels + 1):
            for v in (0, 1):
                lines.append(f'  "v{n}_{v}" [label="v({n},{v})"];')
        for n in range(1, self.levels + 1):
            for (s, t), mult in sorted(self.edge_counts(n).items()):
                if mult:
                    lines.append(f'  "v{n - 1}_{s}" -> "v{n}_{t}" [label="{mult}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_diagram(q: int, levels: int) -> BratteliDiagram:
    if q < 2 or levels < 1:
        raise ValueError("need q >= 2 and levels >= 1")
    return BratteliDiagram(q, levels)


def first_violation(diagram: BratteliDiagram, path: Sequence[tuple[int, int]]) -> int | None:
    """Index (1-based level) of the first invalid edge, or None if valid."""
    prev = 0
    for n, (x, v) in enumerate(path, start=1):
        if n > diagram.levels or x < 0 or x > diagram.q**n or v not in (0, 1):
            return n
        if (prev + parity(n, x)) % 2 != v or not diagram.is_edge(n, x, prev, v):
            return n
        prev = v
    return None


def validate_path(diagram: BratteliDiagram, path: Sequence[tuple[int, int]]) -> bool:
    return first_violation(diagram, path) is None


def transition_probability(q: int, edge: Edge) -> Fraction:
    diagram = BratteliDiagram(q, edge.level)
    if not diagram.is_edge(edge.level, edge.label, edge.source, edge.target):
        raise InvalidPath(f"no such edge {edge}")
    if edge.label == 0:
        return Fraction(1, 2)
    return Fraction(1, 2 * q**edge.level)


def _require_valid(q: int, path: Sequence[tuple[int, int]]) -> None:
    diagram = BratteliDiagram(q, max(len(path), 1))
    bad = first_violation(diagram, path)
    if bad is not None:
        raise InvalidPath(f"path invalid at level {bad}: {list(path)}")


def af_cylinder_measure(q: int, path: Sequence[tuple[int, int]]) -> Fraction:
    _require_valid(q, path)
    out = Fraction(1)
    prev = 0
    for n, (x, v) in enumerate(path, start=1):
        out *= transition_probability(q, Edge(n, prev, v, x))
        prev = v
    return out


def path_to_point(path: Sequence[tuple[int, int]], q: int | None = None) -> tuple[int, ...]:
    if q is not None:
        _require_valid(q, path)
    else:
        prev = 0
        for n, (x, v) in enumerate(path, start=1):
            if (prev + parity(n, x)) % 2 != v:
                raise InvalidPath(f"parity mismatch at level {n}")
            prev = v
    return tuple(x for x, _ in path)


def point_to_path(word: Sequence[int]) -> PathPrefix:
    """Inverse of :func:`path_to_point`: vertices are running parity sums."""
    out = []
    v = 0
    for n, x in enumerate(word, start=1):
        v = (v + parity(n, x)) % 2
        out.append((x, v))
    return tuple(out)


def tail_equivalent(e: Sequence[tuple[int, int]], f: Sequence[tuple[int, int]], n: int) -> bool:
    if len(e) != len(f):
        raise ValueError("paths must have equal length")
    if n > len(e):
        raise ValueError("n exceeds path length")
    if any(a[0] != b[0] for a, b in zip(e[n:], f[n:])):
        return False
    diff = sum(parity(j, a[0]) - parity(j, b[0]) for j, (a, b) in enumerate(zip(e[:n], f[:n]), start=1))
    return diff % 2 == 0


def pushforward_check(q: int, path: Sequence[tuple[int, int]]) -> tuple[Fraction, Fraction]:
    """(AF-measure of the path cylinder, product measure of its image)."""
    af = af_cylinder_measure(q, path)
    word = path_to_point(path, q)
    schedule = BaseSchedule(q, max(len(word), 1))
    return af, cylinder_measure(schedule, Cylinder.from_prefix(word))


def iter_paths(q: int, length: int) -> Iterable[PathPrefix]:
    """All valid path prefixes of a given length (via their point images)."""
    sizes = [q**j + 1 for j in range(1, length + 1)]
    for word in itertools.product(*(range(s) for s in sizes)):
        yield point_to_path(word)


def pushforward_audit(q: int, depth: int) -> dict:
    """Compare both measures on every path prefix of length ``depth``."""
    checked = mismatches = 0
    total_af = Fraction(0)
    for path in iter_paths(q, depth):
        af, mu = pushforward_check(q, path) if path else (Fraction(1), Fraction(1))
        checked += 1
        total_af += af
        if af != mu:
            mismatches += 1
    return {"q": q, "depth": depth, "checked": checked, "mismatches": mismatches, "total_af": total_af}


def path_to_json(path: Sequence[tuple[int, int]]) -> list[dict]:
    return [{"x": x, "v": v} for x, v in path]


def path_from_json(data: Iterable[dict]) -> PathPrefix:
    return tuple((int(e["x"]), int(e["v"])) for e in data)
