"""The parity-constrained odometer, its inverse, the relation R and cocycles.

Points are finite buffers ``(x_1, ..., x_L)`` followed by an all-zero tail.
Carries that would leave the buffer raise :class:`BufferOverflow` instead of
wrapping around.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import prod
from typing import Iterable, Sequence

from .errors import BudgetExceeded, BufferOverflow, NotRelated, SymbolOutOfRange
from .measure import LogValue, parity

DEFAULT_BUDGET = 10**7


@dataclass(frozen=True)
class Point:
    buffer: tuple[int, ...]
    q: int = 5
    tail_policy: str = "zeros"

    def __post_init__(self):
        object.__setattr__(self, "buffer", tuple(int(v) for v in self.buffer))
        if len(self.buffer) < 2:
            raise ValueError("working buffer needs L >= 2")
        if self.tail_policy != "zeros":
            raise ValueError(f"unsupported tail policy {self.tail_policy!r}")
        for j, v in enumerate(self.buffer, start=1):
            if not 0 <= v <= self.q**j:
                raise SymbolOutOfRange(f"x_{j}={v} outside 0..{self.q}^{j}")

    @property
    def L(self) -> int:
        return len(self.buffer)

    def coord(self, j: int) -> int:
        return self.buffer[j - 1] if j <= self.L else 0

    def with_buffer(self, buffer: Sequence[int]) -> Point:
        return Point(tuple(buffer), self.q, self.tail_policy)

    def to_json(self) -> dict:
        return {"x": list(self.buffer), "L": self.L, "q": self.q, "tail_policy": self.tail_policy}

    @classmethod
    def from_json(cls, data: dict) -> Point:
        buf = list(data["x"])
        L = int(data.get("L", len(buf)))
        buf = buf + [0] * (L - len(buf))
        return cls(tuple(buf[:L]), int(data.get("q", 5)), data.get("tail_policy", "zeros"))


def _buf(x) -> tuple[int, ...]:
    return x.buffer if isinstance(x, Point) else tuple(x)


def _coord(buf: Sequence[int], j: int) -> int:
    return buf[j - 1] if j <= len(buf) else 0


# --------------------------------------------------------------------------
# Product odometer


def product_odometer_step(point, level_sizes: Sequence[int]) -> tuple[int, ...]:
    """Add one with carry; ``level_sizes[j-1]`` is the alphabet size at level j."""
    x = list(_buf(point))
    if len(level_sizes) < len(x):
        raise ValueError("need a level size for every buffer coordinate")
    for n, v in enumerate(x):
        if v < level_sizes[n] - 1:
            x[n] = v + 1
            for k in range(n):
                x[k] = 0
            return tuple(x)
    raise BufferOverflow("product odometer carry leaves the buffer")


# --------------------------------------------------------------------------
# The transformation T


def _tops(q: int, L: int) -> list[int]:
    return [q**j for j in range(1, L + 1)]


def _forward(x: tuple[int, ...], q: int, tops: Sequence[int]) -> tuple[int, ...]:
    x1 = x[0]
    if 1 <= x1 <= q - 1:
        return (x1 + 1,) + x[1:]
    L = len(x)
    for i in range(1, L):
        if x[i] < tops[i]:
            n = i + 1
            break
    else:
        raise BufferOverflow(f"N(x) > L={L}")
    total = (x1 != 0) + sum(1 for v in x[1:n] if v)
    a = (total - 1) % 2
    return (a,) + (0,) * (n - 2) + (x[n - 1] + 1,) + x[n:]


def _backward(y: tuple[int, ...], q: int, tops: Sequence[int]) -> tuple[int, ...]:
    y1 = y[0]
    if 2 <= y1 <= q:
        return (y1 - 1,) + y[1:]
    L = len(y)
    for i in range(1, L):
        if y[i] > 0:
            n = i + 1
            break
    else:
        raise BufferOverflow(f"inverse carry leaves the buffer L={L}")
    xn = y[n - 1] - 1
    head_parity = (y1 + 1 - (n - 2) - (xn != 0)) % 2
    x1 = q if head_parity else 0
    return (x1,) + tuple(tops[1 : n - 1]) + (xn,) + y[n:]


def t_step(point, q: int | None = None):
    """Apply T once. Returns the same type as given (Point or tuple)."""
    if isinstance(point, Point):
        q = point.q if q is None else q
        return point.with_buffer(_forward(point.buffer, q, _tops(q, point.L)))
    x = tuple(point)
    return _forward(x, q, _tops(q, len(x)))


def t_inverse_step(point, q: int | None = None):
    if isinstance(point, Point):
        q = point.q if q is None else q
        return point.with_buffer(_backward(point.buffer, q, _tops(q, point.L)))
    y = tuple(point)
    return _backward(y, q, _tops(q, len(y)))


def carry_depth(point, q: int | None = None) -> int:
    """Deepest coordinate T modifies: 1 in the simple case, else N(x)."""
    x = _buf(point)
    q = point.q if isinstance(point, Point) and q is None else q
    if 1 <= x[0] <= q - 1:
        return 1
    for i in range(1, len(x)):
        if x[i] < q ** (i + 1):
            return i + 1
    return len(x) + 1


# --------------------------------------------------------------------------
# Relation R and cocycles


def _padded(buf: tuple[int, ...], size: int) -> tuple[int, ...]:
    return buf if len(buf) >= size else buf + (0,) * (size - len(buf))


def prefix_parity(x, n: int) -> int:
    buf = _padded(_buf(x), n)
    return sum(1 for v in buf[:n] if v) % 2


def related(x, y, n: int) -> bool:
    bx, by = _buf(x), _buf(y)
    size = max(len(bx), len(by), n)
    bx, by = _padded(bx, size), _padded(by, size)
    if bx[n:] != by[n:]:
        return False
    return sum(1 for v in bx[:n] if v) % 2 == sum(1 for v in by[:n] if v) % 2


def cocycle(x, y, n: int, q: int | None = None) -> LogValue:
    """log of mu(Z_{y[:n]}) / mu(Z_{x[:n]}) for R-related points."""
    if not related(x, y, n):
        raise NotRelated(f"points are not related at depth {n}")
    bx, by = _padded(_buf(x), n), _padded(_buf(y), n)
    b = sum(j * ((u != 0) - (v != 0)) for j, u, v in zip(range(1, n + 1), bx, by))
    return LogValue(0, b)


def class_enumerate(x, n: int, q: int, budget: int = DEFAULT_BUDGET) -> list[tuple[int, ...]]:
    """All depth-``n`` prefixes R-related (at depth n) to the prefix of ``x``."""
    total = prod(q**j + 1 for j in range(1, n + 1))
    if total > budget:
        raise BudgetExceeded(f"depth-{n} prefix space has {total} states > budget {budget}")
    target = prefix_parity(x, n)
    out = []
    for word in itertools.product(*(range(q**j + 1) for j in range(1, n + 1))):
        if sum(1 for v in word if v) % 2 == target:
            out.append(word)
    return out


# --------------------------------------------------------------------------
# Block transports (finite pieces of the full group)


@dataclass(frozen=True)
class Transport:
    u: tuple[int, ...]
    source: tuple[int, ...]
    target: tuple[int, ...]

    def __post_init__(self):
        if len(self.source) != len(self.target):
            raise ValueError("source and target blocks differ in length")
        if self._block_parity(self.source) != self._block_parity(self.target):
            raise NotRelated("transport blocks have different parity")

    @property
    def first(self) -> int:
        return len(self.u) + 1

    @property
    def last(self) -> int:
        return len(self.u) + len(self.source)

    def _block_parity(self, block) -> int:
        return sum(1 for v in block if v) % 2

    def cocycle(self) -> LogValue:
        b = sum(
            j * (parity(j, s) - parity(j, t))
            for j, s, t in zip(range(self.first, self.last + 1), self.source, self.target)
        )
        return LogValue(0, b)


def transport_apply(transport: Transport, x):
    buf = _buf(x)
    I, K = len(transport.u), transport.last
    if tuple(buf[:I]) != transport.u or tuple(_coord(buf, j) for j in range(I + 1, K + 1)) != transport.source:
        raise ValueError("point is not in Z_u ∩ Z_source")
    if len(buf) < K:
        raise BufferOverflow("buffer shorter than transport block")
    out = buf[:I] + transport.target + buf[K:]
    return x.with_buffer(out) if isinstance(x, Point) else out


# --------------------------------------------------------------------------
# Orbits


@dataclass
class OrbitWalk:
    prefixes: set[tuple[int, ...]] = field(default_factory=set)
    forward_steps: int = 0
    backward_steps: int = 0
    forward_overflow: bool = False
    backward_overflow: bool = False
    truncated: bool = False

    @property
    def complete(self) -> bool:
        return self.forward_overflow and self.backward_overflow and not self.truncated


def induced_return_orbit(x, n: int, L: int | None = None, q: int | None = None,
                         budget: int = DEFAULT_BUDGET) -> OrbitWalk:
    """Walk the T-orbit of ``x`` inside the buffer in both directions.

    Records the depth-``n`` prefix of every visited state whose coordinates
    ``n+1..L`` agree with those of ``x``. The walk in each direction stops at
    the buffer overflow; hitting ``budget`` sets ``truncated``.
    """
    if isinstance(x, Point):
        q = x.q if q is None else q
        buf = x.buffer
    else:
        buf = tuple(x)
    L = len(buf) if L is None else L
    buf = (tuple(buf) + (0,) * L)[:L]
    if not n < L:
        raise ValueError("need n < L")
    tops = _tops(q, L)
    upper = buf[n:]
    walk = OrbitWalk()
    walk.prefixes.add(buf[:n])
    for step, attr, flag in ((_forward, "forward_steps", "forward_overflow"),
                             (_backward, "backward_steps", "backward_overflow")):
        state = buf
        count = 0
        while True:
            if walk.forward_steps + walk.backward_steps + count >= budget:
                walk.truncated = True
                break
            try:
                state = step(state, q, tops)
            except BufferOverflow:
                setattr(walk, flag, True)
                break
            count += 1
            if state[n:] == upper:
                walk.prefixes.add(state[:n])
        setattr(walk, attr, count)
    return walk


def orbit_rows(point: Point, steps: int) -> tuple[list[tuple[int, tuple[int, ...], LogValue]], bool]:
    """Forward orbit with the cocycle of each state relative to the start.

    Returns ``(rows, overflowed)``; rows stop early on overflow.
    """
    rows = []
    state = point.buffer
    tops = _tops(point.q, point.L)
    for t in range(1, steps + 1):
        try:
            state = _forward(state, point.q, tops)
        except BufferOverflow:
            return rows, True
        rows.append((t, state, cocycle(point.buffer, state, point.L)))
    return rows, False
