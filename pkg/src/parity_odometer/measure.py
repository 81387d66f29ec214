"""Exact measure substrate: alphabets, cylinders, product measures, log lattice.

Level ``j`` carries the alphabet ``{0, 1, ..., q**j}``; symbol 0 has mass 1/2
and every nonzero symbol mass ``1/(2 q**j)``. All measures are
:class:`fractions.Fraction`. Logarithms of measures live in the lattice
``Z log 2 + Z log q`` (:class:`LogValue`), with rational coefficients allowed
for centering constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import DepthExceeded, SymbolOutOfRange

Rational = Fraction
Prefix = tuple  # (x_1, ..., x_n)

LN2 = math.log(2.0)


def fmt_rational(x) -> str:
    """Serialize as ``"num/den"`` (always with a denominator)."""
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def parse_rational(text: str | int) -> Fraction:
    return Fraction(text)


@dataclass(frozen=True)
class BaseSchedule:
    q: int = 5
    depth: int = 64

    def __post_init__(self):
        if self.q < 2:
            raise ValueError(f"base q must be >= 2, got {self.q}")
        if self.depth < 0:
            raise ValueError("depth must be non-negative")

    def level_size(self, j: int) -> int:
        self.check_level(j)
        return self.q**j + 1

    def top(self, j: int) -> int:
        return self.q**j

    def check_level(self, j: int) -> None:
        if j < 1:
            raise SymbolOutOfRange(f"levels start at 1, got {j}")
        if j > self.depth:
            raise DepthExceeded(f"level {j} exceeds schedule depth {self.depth}")

    def check_symbol(self, j: int, v: int) -> None:
        self.check_level(j)
        if not 0 <= v <= self.q**j:
            raise SymbolOutOfRange(f"symbol {v} outside 0..{self.q}^{j}")


def parity(j: int, v: int, q: int | None = None) -> int:
    """0 for the zero symbol, 1 otherwise."""
    if j < 1 or v < 0 or (q is not None and v > q**j):
        raise SymbolOutOfRange(f"symbol {v} not in level {j}")
    return 0 if v == 0 else 1


def symbol_measure(schedule: BaseSchedule, j: int, v: int) -> Fraction:
    schedule.check_symbol(j, v)
    if v == 0:
        return Fraction(1, 2)
    return Fraction(1, 2 * schedule.q**j)


def level_masses(schedule: BaseSchedule, j: int) -> tuple[Fraction, Fraction]:
    """(mass of {0}, mass of all nonzero symbols) at level ``j``."""
    top = schedule.top(j)
    return symbol_measure(schedule, j, 0), top * symbol_measure(schedule, j, top)


def validate_prefix(schedule: BaseSchedule, word: Sequence[int]) -> Prefix:
    for j, v in enumerate(word, start=1):
        schedule.check_symbol(j, v)
    return tuple(word)


def prefix_measure(schedule: BaseSchedule, word: Sequence[int]) -> Fraction:
    out = Fraction(1)
    for j, v in enumerate(word, start=1):
        out *= symbol_measure(schedule, j, v)
    return out


# --------------------------------------------------------------------------
# Log lattice


def _frac_or_int(x):
    x = Fraction(x)
    return x.numerator if x.denominator == 1 else x


@dataclass(frozen=True)
class LogValue:
    """``a*log 2 + b*log q`` with exact (integer or rational) coefficients."""

    a: int | Fraction = 0
    b: int | Fraction = 0

    def __post_init__(self):
        object.__setattr__(self, "a", _frac_or_int(self.a))
        object.__setattr__(self, "b", _frac_or_int(self.b))

    def __add__(self, other: LogValue) -> LogValue:
        return LogValue(self.a + other.a, self.b + other.b)

    def __sub__(self, other: LogValue) -> LogValue:
        return LogValue(self.a - other.a, self.b - other.b)

    def __neg__(self) -> LogValue:
        return LogValue(-self.a, -self.b)

    def scale(self, k) -> LogValue:
        k = Fraction(k)
        return LogValue(self.a * k, self.b * k)

    def real(self, q: int) -> float:
        return logvalue_real(self, q)

    def sign(self, q: int) -> int:
        """Exact sign of the real value (integer comparison when close to 0)."""
        a, b = Fraction(self.a), Fraction(self.b)
        if a == 0 and b == 0:
            return 0
        lq = math.log(q)
        value = float(a) * LN2 + float(b) * lq
        scale = abs(float(a)) * LN2 + abs(float(b)) * lq
        if abs(value) > 1e-9 * scale:
            return 1 if value > 0 else -1
        d = math.lcm(a.denominator, b.denominator)
        A, B = int(a * d), int(b * d)
        num = 2 ** max(A, 0) * q ** max(B, 0)
        den = 2 ** max(-A, 0) * q ** max(-B, 0)
        return (num > den) - (num < den)

    def compare(self, other: LogValue, q: int) -> int:
        return (self - other).sign(q)

    def to_json(self) -> dict:
        def enc(c):
            return c if isinstance(c, int) else fmt_rational(c)

        return {"log2": enc(self.a), "logq": enc(self.b)}

    @classmethod
    def from_json(cls, data: Mapping) -> LogValue:
        return cls(Fraction(data["log2"]), Fraction(data["logq"]))


def log_measure(schedule: BaseSchedule, j: int, v: int) -> LogValue:
    """log of ``symbol_measure`` as a lattice point: ``-log 2 - parity*j*log q``."""
    schedule.check_symbol(j, v)
    return LogValue(-1, -parity(j, v) * j)


def prefix_log_measure(schedule: BaseSchedule, word: Sequence[int]) -> LogValue:
    total = LogValue()
    for j, v in enumerate(word, start=1):
        total = total + log_measure(schedule, j, v)
    return total


def logvalue_real(value: LogValue, q: int) -> float:
    """Double-precision ``a ln 2 + b ln q``.

    Each term carries at most ~2 ulp of error from ``math.log`` and the
    product, and the sum adds one more rounding, so the relative error per
    term stays below 4 machine epsilons.
    """
    return float(value.a) * LN2 + float(value.b) * math.log(q)


# --------------------------------------------------------------------------
# Symbol sets and cylinders


@dataclass(frozen=True)
class SymbolSet:
    """Finite set of symbols stored as sorted disjoint inclusive ranges."""

    ranges: tuple[tuple[int, int], ...] = ()

    @classmethod
    def of(cls, symbols: Iterable[int]) -> SymbolSet:
        out: list[list[int]] = []
        for s in sorted(set(symbols)):
            if out and out[-1][1] + 1 == s:
                out[-1][1] = s
            else:
                out.append([s, s])
        return cls(tuple((lo, hi) for lo, hi in out))

    @classmethod
    def interval(cls, lo: int, hi: int) -> SymbolSet:
        return cls(((lo, hi),)) if lo <= hi else cls()

    @classmethod
    def full(cls, q: int, j: int) -> SymbolSet:
        return cls.interval(0, q**j)

    @classmethod
    def zero(cls) -> SymbolSet:
        return cls(((0, 0),))

    @classmethod
    def nonzero(cls, q: int, j: int) -> SymbolSet:
        return cls.interval(1, q**j)

    def __bool__(self) -> bool:
        return bool(self.ranges)

    def __len__(self) -> int:
        return sum(hi - lo + 1 for lo, hi in self.ranges)

    def __contains__(self, v: int) -> bool:
        return any(lo <= v <= hi for lo, hi in self.ranges)

    def __iter__(self) -> Iterator[int]:
        for lo, hi in self.ranges:
            yield from range(lo, hi + 1)

    @property
    def min(self) -> int:
        return self.ranges[0][0]

    @property
    def max(self) -> int:
        return self.ranges[-1][1]

    def has_zero(self) -> bool:
        return bool(self.ranges) and self.ranges[0][0] == 0

    def size(self) -> int:
        """Cardinality; unlike ``len`` this works past the machine word size."""
        return sum(hi - lo + 1 for lo, hi in self.ranges)

    def count_nonzero(self) -> int:
        return self.size() - (1 if self.has_zero() else 0)

    def __and__(self, other: SymbolSet) -> SymbolSet:
        out = []
        i = k = 0
        a, b = self.ranges, other.ranges
        while i < len(a) and k < len(b):
            lo = max(a[i][0], b[k][0])
            hi = min(a[i][1], b[k][1])
            if lo <= hi:
                out.append((lo, hi))
            if a[i][1] < b[k][1]:
                i += 1
            else:
                k += 1
        return SymbolSet(tuple(out))

    def __sub__(self, other: SymbolSet) -> SymbolSet:
        out = []
        for lo, hi in self.ranges:
            cur = lo
            for olo, ohi in other.ranges:
                if ohi < cur or olo > hi:
                    continue
                if olo > cur:
                    out.append((cur, olo - 1))
                cur = max(cur, ohi + 1)
                if cur > hi:
                    break
            if cur <= hi:
                out.append((cur, hi))
        return SymbolSet(tuple(out))

    def issubset(self, other: SymbolSet) -> bool:
        return not (self - other)

    def measure(self, schedule: BaseSchedule, j: int) -> Fraction:
        zero, nonzero = Fraction(1, 2), Fraction(1, 2 * schedule.q**j)
        return (zero if self.has_zero() else 0) + self.count_nonzero() * nonzero

    def to_json(self) -> list:
        return [[lo, hi] for lo, hi in self.ranges]

    @classmethod
    def from_json(cls, data) -> SymbolSet:
        ranges = [(int(lo), int(hi)) for lo, hi in data]
        return cls.of(()) if not ranges else cls._normalized(ranges)

    @classmethod
    def _normalized(cls, ranges) -> SymbolSet:
        out: list[list[int]] = []
        for lo, hi in sorted(ranges):
            if lo > hi:
                continue
            if out and lo <= out[-1][1] + 1:
                out[-1][1] = max(out[-1][1], hi)
            else:
                out.append([lo, hi])
        return cls(tuple((lo, hi) for lo, hi in out))


@dataclass(frozen=True)
class Box:
    """Product event: coordinate ``j`` restricted to ``pins[j]``; others free."""

    pins: tuple[tuple[int, SymbolSet], ...] = ()

    @classmethod
    def make(cls, pins: Mapping[int, SymbolSet | Iterable[int]]) -> Box:
        items = []
        for j, s in pins.items():
            if not isinstance(s, SymbolSet):
                s = SymbolSet.of(s)
            items.append((int(j), s))
        return cls(tuple(sorted(items)))

    @classmethod
    def from_prefix(cls, word: Sequence[int], start: int = 1) -> Box:
        return cls.make({start + i: SymbolSet.of([v]) for i, v in enumerate(word)})

    @property
    def coords(self) -> tuple[int, ...]:
        return tuple(j for j, _ in self.pins)

    def as_dict(self) -> dict[int, SymbolSet]:
        return dict(self.pins)

    def get(self, j: int, q: int) -> SymbolSet:
        for k, s in self.pins:
            if k == j:
                return s
        return SymbolSet.full(q, j)

    def is_empty(self) -> bool:
        return any(not s for _, s in self.pins)

    def measure(self, schedule: BaseSchedule) -> Fraction:
        out = Fraction(1)
        for j, s in self.pins:
            schedule.check_level(j)
            out *= s.measure(schedule, j)
        return out

    def contains(self, word: Sequence[int], start: int = 1) -> bool:
        for j, s in self.pins:
            i = j - start
            if not 0 <= i < len(word):
                raise DepthExceeded(f"word does not cover pinned coordinate {j}")
            if word[i] not in s:
                return False
        return True

    def intersect(self, other: Box) -> Box | None:
        pins = dict(self.pins)
        for j, s in other.pins:
            pins[j] = pins[j] & s if j in pins else s
        out = Box.make(pins)
        return None if out.is_empty() else out

    def minus(self, other: Box, q: int) -> list[Box]:
        """Disjoint boxes whose union is ``self \\ other``."""
        if self.intersect(other) is None:
            return [self]
        pieces = []
        current = dict(self.pins)
        for j, s in other.pins:
            mine = current.get(j, SymbolSet.full(q, j))
            outside = mine - s
            if outside:
                piece = dict(current)
                piece[j] = outside
                pieces.append(Box.make(piece))
            current[j] = mine & s
        return pieces

    def restrict(self, coords: Iterable[int]) -> Box:
        keep = set(coords)
        return Box(tuple((j, s) for j, s in self.pins if j in keep))

    def drop(self, coords: Iterable[int]) -> Box:
        skip = set(coords)
        return Box(tuple((j, s) for j, s in self.pins if j not in skip))

    def to_json(self) -> dict:
        return {str(j): s.to_json() for j, s in self.pins}


def disjointify(boxes: Iterable[Box], q: int) -> list[Box]:
    """Rewrite a union of boxes as a union of pairwise disjoint boxes."""
    result: list[Box] = []
    for box in boxes:
        if box.is_empty():
            continue
        pieces = [box]
        for done in result:
            nxt = []
            for p in pieces:
                nxt.extend(p.minus(done, q))
            pieces = nxt
            if not pieces:
                break
        result.extend(pieces)
    return result


@dataclass(frozen=True)
class Cylinder:
    """Finite union of boxes (disjunctive normal form over symbol sets)."""

    boxes: tuple[Box, ...] = ()
    empty: bool = False

    def __post_init__(self):
        if not self.boxes and not self.empty:
            raise ValueError("a cylinder with no boxes must be declared empty=True")

    @classmethod
    def whole(cls) -> Cylinder:
        return cls((Box(),))

    @classmethod
    def from_prefix(cls, word: Sequence[int]) -> Cylinder:
        return cls((Box.from_prefix(word),))

    @classmethod
    def from_tuples(cls, support: Sequence[int], tuples: Iterable[Sequence[int]]) -> Cylinder:
        boxes = tuple(
            Box.make({j: [v] for j, v in zip(support, t, strict=True)}) for t in set(map(tuple, tuples))
        )
        return cls(boxes) if boxes else cls((), empty=True)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(sorted({j for b in self.boxes for j in b.coords}))

    def disjoint_boxes(self, q: int) -> list[Box]:
        return disjointify(self.boxes, q)

    def contains(self, word: Sequence[int]) -> bool:
        return any(b.contains(word) for b in self.boxes)

    def union(self, other: Cylinder) -> Cylinder:
        boxes = self.boxes + other.boxes
        return Cylinder(boxes) if boxes else Cylinder((), empty=True)

    def intersect(self, other: Cylinder) -> Cylinder:
        boxes = []
        for a in self.boxes:
            for b in other.boxes:
                c = a.intersect(b)
                if c is not None:
                    boxes.append(c)
        return Cylinder(tuple(boxes)) if boxes else Cylinder((), empty=True)

    def complement_within(self, box: Box, q: int) -> list[Box]:
        """Disjoint boxes covering ``box`` minus this cylinder."""
        pieces = [box]
        for b in self.boxes:
            nxt = []
            for p in pieces:
                nxt.extend(p.minus(b, q))
            pieces = nxt
        return pieces

    def to_json(self) -> dict:
        support = list(self.support)
        constraints = []
        for b in self.boxes:
            d = b.as_dict()
            constraints.append([d[j].to_json() if j in d else None for j in support])
        return {"support": support, "constraints": constraints}

    @classmethod
    def from_json(cls, data: Mapping, q: int | None = None) -> Cylinder:
        support = [int(j) for j in data["support"]]
        boxes = []
        for row in data["constraints"]:
            pins = {}
            for j, entry in zip(support, row, strict=True):
                if entry is None:
                    continue
                pins[j] = SymbolSet.from_json(entry)
            boxes.append(Box.make(pins))
        return cls(tuple(boxes)) if boxes else cls((), empty=True)


def cylinder_measure(schedule: BaseSchedule, cylinder: Cylinder) -> Fraction:
    if cylinder.empty:
        return Fraction(0)
    support = cylinder.support
    if support and support[-1] > schedule.depth:
        raise DepthExceeded(
            f"cylinder support reaches level {support[-1]} > depth {schedule.depth}"
        )
    return sum((b.measure(schedule) for b in cylinder.disjoint_boxes(schedule.q)), Fraction(0))


def iter_prefixes(schedule: BaseSchedule, n: int) -> Iterator[Prefix]:
    """All words of length ``n`` in lexicographic order."""
    import itertools

    sizes = [schedule.level_size(j) for j in range(1, n + 1)]
    return itertools.product(*(range(s) for s in sizes))
