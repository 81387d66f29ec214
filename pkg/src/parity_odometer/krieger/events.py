"""Exact events over a coordinate block ``[first, last]``.

Sets used in the density argument depend on a block word ``v`` only through

* the weighted parity sum ``m(v) = sum j * parity(v_j)``,
* the popcount parity of ``v``,
* the symbols at a few pinned coordinates (the head coordinate and any
  coordinate a defect of ``B`` constrains).

:class:`BlockLaw` splits the block into pinned coordinates, enumerated as
finitely many *cells*, and free coordinates, handled by a
:class:`WeightedParityTable`. Measures of predicates are then exact sums over
cells of table ranges.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from ..errors import BudgetExceeded, HypothesisViolated
from ..measure import BaseSchedule, Box, Cylinder, LogValue, SymbolSet, disjointify, parity, prefix_measure
from .tables import table_over

CELL_BUDGET = 200_000


# --------------------------------------------------------------------------
# Regions B = Z_u minus defects


@dataclass(frozen=True)
class Region:
    """``B = Z_u`` minus a disjoint union of defect boxes (pins on coords > I)."""

    q: int
    u: tuple[int, ...]
    defects: tuple[Box, ...] = ()

    @classmethod
    def build(cls, q: int, u: Sequence[int], defects: Iterable[Box] = ()) -> Region:
        u = tuple(u)
        I = len(u)
        kept = []
        for box in defects:
            d = box.as_dict()
            if any(j <= I and u[j - 1] not in s for j, s in d.items()):
                continue  # misses Z_u entirely
            kept.append(box.drop(range(1, I + 1)))
        return cls(q, u, tuple(disjointify(kept, q)))

    @classmethod
    def from_cylinder(cls, q: int, u: Sequence[int], A: Cylinder) -> Region:
        """The region ``A ∩ Z_u`` written as ``Z_u`` minus defects."""
        zu = Box.from_prefix(tuple(u))
        if A.empty:
            return cls.build(q, u, [zu])
        return cls.build(q, u, A.complement_within(zu, q))

    @property
    def I(self) -> int:
        return len(self.u)

    @property
    def max_coord(self) -> int:
        coords = [j for d in self.defects for j in d.coords]
        return max(coords + [self.I, 1])

    def schedule(self, depth: int = 0) -> BaseSchedule:
        return BaseSchedule(self.q, max(self.max_coord, depth, 1))

    def mu_u(self) -> Fraction:
        return prefix_measure(self.schedule(), self.u)

    def relative_defect(self) -> Fraction:
        sch = self.schedule()
        return sum((d.measure(sch) for d in self.defects), Fraction(0))

    def measure(self) -> Fraction:
        return self.mu_u() * (1 - self.relative_defect())

    def contains(self, word: Sequence[int]) -> bool:
        if tuple(word[: self.I]) != self.u:
            return False
        return not any(d.contains(word) for d in self.defects)

    def outside_part(self, defect: Box, first: int, last: int) -> Box:
        return Box(tuple((j, s) for j, s in defect.pins if not first <= j <= last))

    def block_part(self, defect: Box, first: int, last: int) -> Box:
        return Box(tuple((j, s) for j, s in defect.pins if first <= j <= last))

    def block_loss(self, word: Sequence[int], first: int) -> Fraction:
        """``1 - mu(B ∩ Z_v) / (mu(Z_u) mu(Z_v))`` for a block word ``v``."""
        last = first + len(word) - 1
        sch = self.schedule(last)
        loss = Fraction(0)
        for d in self.defects:
            if self.block_part(d, first, last).contains(word, start=first):
                loss += self.outside_part(d, first, last).measure(sch)
        return loss

    def density_hypothesis(self, xi) -> tuple[bool, Fraction, Fraction]:
        """``mu(B) > (1 - xi/128) mu(Z_u)``, with both sides."""
        lhs = self.measure()
        rhs = (1 - Fraction(xi) / 128) * self.mu_u()
        return lhs > rhs, lhs, rhs

    def to_json(self) -> dict:
        return {"q": self.q, "u": list(self.u), "defects": [d.to_json() for d in self.defects]}


def union_measure(boxes: Sequence[Box], schedule: BaseSchedule) -> Fraction:
    return sum((b.measure(schedule) for b in disjointify(boxes, schedule.q)), Fraction(0))


# --------------------------------------------------------------------------
# Block statistic


@dataclass(frozen=True)
class StatFrame:
    """``stat(v) = offset + m(v) log q`` on the block ``[first, last]``.

    ``centering="block"`` subtracts the block mean, so ``stat`` is
    ``(m - mean) log q``; ``"full"`` uses the full centering constant c(last),
    giving ``c(last) - sum_{j in block} log mu_j(v_j)`` literally.
    """

    q: int
    first: int
    last: int
    centering: str = "block"

    def __post_init__(self):
        if not 1 <= self.first <= self.last:
            raise ValueError("empty block")
        if self.centering not in ("block", "full"):
            raise ValueError(f"unknown centering {self.centering!r}")

    @property
    def coords(self) -> tuple[int, ...]:
        return tuple(range(self.first, self.last + 1))

    @property
    def max_m(self) -> int:
        return sum(self.coords)

    @property
    def offset(self) -> LogValue:
        if self.centering == "block":
            return LogValue(0, Fraction(-self.max_m, 2))
        n = self.last - self.first + 1
        K = self.last
        return LogValue(n - K, Fraction(-K * (K + 1), 4))

    def stat(self, m: int) -> LogValue:
        return self.offset + LogValue(0, m)

    def stat_of(self, word: Sequence[int]) -> LogValue:
        return self.stat(self.m_of(word))

    def m_of(self, word: Sequence[int]) -> int:
        return sum(j * parity(j, v) for j, v in zip(self.coords, word, strict=True))

    def _first_m_ge(self, target: LogValue) -> int:
        d = target - self.offset
        est = math.ceil(d.real(self.q) / math.log(self.q))
        while LogValue(0, est - 1).compare(d, self.q) >= 0:
            est -= 1
        while LogValue(0, est).compare(d, self.q) < 0:
            est += 1
        return est

    def _last_m_le(self, target: LogValue) -> int:
        d = target - self.offset
        est = math.floor(d.real(self.q) / math.log(self.q))
        while LogValue(0, est + 1).compare(d, self.q) <= 0:
            est += 1
        while LogValue(0, est).compare(d, self.q) > 0:
            est -= 1
        return est

    def m_bounds(self, lo: LogValue | None, hi: LogValue | None) -> tuple[int, int]:
        mlo = 0 if lo is None else max(0, self._first_m_ge(lo))
        mhi = self.max_m if hi is None else min(self.max_m, self._last_m_le(hi))
        return mlo, mhi


@dataclass(frozen=True)
class StatPredicate:
    """Block words with ``lo <= stat <= hi``, given total parity and head bit.

    ``head`` constrains the parity bit of the first block coordinate.
    """

    lo: LogValue | None = None
    hi: LogValue | None = None
    parity: int | None = None
    head: int | None = None
    name: str = ""

    def shifted(self, k, name: str | None = None) -> StatPredicate:
        """Window moved by ``k log q``."""
        step = LogValue(0, k)
        return StatPredicate(
            None if self.lo is None else self.lo + step,
            None if self.hi is None else self.hi + step,
            self.parity, self.head, self.name if name is None else name,
        )

    def with_(self, **kw) -> StatPredicate:
        data = dict(lo=self.lo, hi=self.hi, parity=self.parity, head=self.head, name=self.name)
        data.update(kw)
        return StatPredicate(**data)

    def holds(self, frame: StatFrame, word: Sequence[int]) -> bool:
        st = frame.stat_of(word)
        if self.lo is not None and st.compare(self.lo, frame.q) < 0:
            return False
        if self.hi is not None and st.compare(self.hi, frame.q) > 0:
            return False
        if self.parity is not None and sum(1 for v in word if v) % 2 != self.parity:
            return False
        if self.head is not None and parity(frame.first, word[0]) != self.head:
            return False
        return True

    def within(self, other: StatPredicate, q: int) -> bool:
        """Sufficient containment test: window inside, constraints at least as strong."""
        if other.lo is not None and (self.lo is None or self.lo.compare(other.lo, q) < 0):
            return False
        if other.hi is not None and (self.hi is None or self.hi.compare(other.hi, q) > 0):
            return False
        if other.parity is not None and self.parity != other.parity:
            return False
        if other.head is not None and self.head != other.head:
            return False
        return True

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "lo": None if self.lo is None else self.lo.to_json(),
            "hi": None if self.hi is None else self.hi.to_json(),
            "parity": self.parity,
            "head": self.head,
        }


# --------------------------------------------------------------------------
# Cell-decomposed block law


@dataclass(frozen=True)
class Cell:
    atoms: tuple[int, ...]  # atom index per pinned coordinate
    m: int
    parity: int
    head: int
    weight: Fraction  # block measure of the pinned-coordinate atoms
    defects: frozenset[int]  # indices of defects whose block part contains the cell
    loss: Fraction


@dataclass
class BlockLaw:
    frame: StatFrame
    region: Region | None = None
    pinned: tuple[int, ...] = ()
    atoms: dict[int, list[SymbolSet]] = field(default_factory=dict)
    free: tuple[int, ...] = ()
    cells: list[Cell] = field(default_factory=list)
    _cum: tuple[list[int], list[int]] = ((), ())
    _free_den: int = 1

    @classmethod
    def build(cls, frame: StatFrame, region: Region | None = None,
              cell_budget: int = CELL_BUDGET) -> BlockLaw:
        q, first, last = frame.q, frame.first, frame.last
        if region is not None and region.I >= first:
            raise ValueError("block must lie strictly after the u-coordinates")
        defects = region.defects if region is not None else ()
        pinned = {first}
        for d in defects:
            pinned.update(j for j in d.coords if first <= j <= last)
        pinned = tuple(sorted(pinned))
        atoms: dict[int, list[SymbolSet]] = {}
        for j in pinned:
            parts = [SymbolSet.zero(), SymbolSet.nonzero(q, j)]
            for d in defects:
                s = d.as_dict().get(j)
                if s is None:
                    continue
                nxt = []
                for a in parts:
                    for piece in (a & s, a - s):
                        if piece:
                            nxt.append(piece)
                parts = nxt
            atoms[j] = sorted(parts, key=lambda a: a.min)
        n_cells = math.prod(len(atoms[j]) for j in pinned)
        if n_cells > cell_budget:
            raise BudgetExceeded(f"{n_cells} cells exceed budget {cell_budget}")
        free = tuple(j for j in frame.coords if j not in atoms)
        table = table_over(free)
        cum = []
        for p in (0, 1):
            acc, row = 0, [0]
            for c in table.counts[p]:
                acc += c
                row.append(acc)
            cum.append(row)
        law = cls(frame, region, pinned, atoms, free, [], (cum[0], cum[1]), table.denominator)
        law._table = table
        sch = region.schedule(last) if region is not None else BaseSchedule(q, last)
        out_measure = [region.outside_part(d, first, last).measure(sch) for d in defects] if defects else []
        block_parts = [region.block_part(d, first, last).as_dict() for d in defects] if defects else []
        for combo in itertools.product(*(range(len(atoms[j])) for j in pinned)):
            m = par = 0
            weight = Fraction(1)
            for j, k in zip(pinned, combo):
                a = atoms[j][k]
                bit = 0 if a.has_zero() else 1
                m += j * bit
                par ^= bit
                weight *= a.measure(sch, j)
            hit = []
            for idx, bp in enumerate(block_parts):
                if all(atoms[j][combo[pinned.index(j)]].issubset(s) for j, s in bp.items()):
                    hit.append(idx)
            loss = sum((out_measure[i] for i in hit), Fraction(0))
            head = 0 if atoms[first][combo[0]].has_zero() else 1
            law.cells.append(Cell(combo, m, par, head, weight, frozenset(hit), loss))
        return law

    # -- free-coordinate queries

    def free_count(self, lo: int, hi: int, p: int | None) -> int:
        top = len(self._cum[0]) - 2
        lo, hi = max(lo, 0), min(hi, top)
        if lo > hi:
            return 0
        parities = (0, 1) if p is None else (p % 2,)
        return sum(self._cum[k][hi + 1] - self._cum[k][lo] for k in parities)

    def free_values(self, lo: int, hi: int, p: int | None) -> list[int]:
        table = self._table
        parities = (0, 1) if p is None else (p % 2,)
        return [m for m in range(max(lo, 0), min(hi, table.max_m) + 1)
                if any(table.counts[k][m] for k in parities)]

    # -- predicate measures

    def cell_matches(self, cell: Cell, pred: StatPredicate) -> bool:
        return pred.head is None or cell.head == pred.head

    def cell_measure(self, cell: Cell, pred: StatPredicate, bounds: tuple[int, int] | None = None) -> Fraction:
        if not self.cell_matches(cell, pred):
            return Fraction(0)
        mlo, mhi = bounds if bounds is not None else self.frame.m_bounds(pred.lo, pred.hi)
        p = None if pred.parity is None else (pred.parity - cell.parity) % 2
        count = self.free_count(mlo - cell.m, mhi - cell.m, p)
        return cell.weight * Fraction(count, self._free_den)

    def measure(self, pred: StatPredicate, cell_filter=None) -> Fraction:
        bounds = self.frame.m_bounds(pred.lo, pred.hi)
        total = Fraction(0)
        for cell in self.cells:
            if cell_filter is not None and not cell_filter(cell):
                continue
            total += self.cell_measure(cell, pred, bounds)
        return total

    def measure_union(self, preds: Sequence[StatPredicate], cell_filter=None) -> Fraction:
        """Measure of a union of predicates assumed pairwise disjoint."""
        return sum((self.measure(p, cell_filter) for p in preds), Fraction(0))

    def cell_of(self, word: Sequence[int]) -> Cell:
        first = self.frame.first
        combo = []
        for j in self.pinned:
            v = word[j - first]
            for k, a in enumerate(self.atoms[j]):
                if v in a:
                    combo.append(k)
                    break
        combo = tuple(combo)
        for c in self.cells:
            if c.atoms == combo:
                return c
        raise KeyError(combo)

    def m_values(self, cell: Cell, pred: StatPredicate) -> list[int]:
        """Distinct total weighted sums attained by words of ``pred`` in ``cell``."""
        if not self.cell_matches(cell, pred):
            return []
        mlo, mhi = self.frame.m_bounds(pred.lo, pred.hi)
        p = None if pred.parity is None else (pred.parity - cell.parity) % 2
        return [cell.m + f for f in self.free_values(mlo - cell.m, mhi - cell.m, p)]

    # -- lexicographic search

    def lex_min(self, pred: StatPredicate, cell_ok=None) -> tuple[int, ...] | None:
        """Lexicographically smallest block word satisfying ``pred`` in an admissible cell."""
        frame = self.frame
        mlo, mhi = frame.m_bounds(pred.lo, pred.hi)
        if mlo > mhi:
            return None
        cells = [c for c in self.cells if self.cell_matches(c, pred) and (cell_ok is None or cell_ok(c))]
        if not cells:
            return None
        free_order = list(self.free)
        # reach[k][p]: bitmask of sums reachable with free coords free_order[k:]
        reach = [[0, 0] for _ in range(len(free_order) + 1)]
        reach[-1] = [1, 0]
        for k in range(len(free_order) - 1, -1, -1):
            j = free_order[k]
            e, o = reach[k + 1]
            reach[k] = [e | (o << j), o | (e << j)]

        def feasible(assigned_atoms: tuple[int, ...], m_free: int, p_free: int, k: int) -> bool:
            r = len(assigned_atoms)
            for c in cells:
                if c.atoms[:r] != assigned_atoms:
                    continue
                lo = mlo - m_free - c.m
                hi = mhi - m_free - c.m
                if hi < 0:
                    continue
                lo = max(lo, 0)
                mask = ((1 << (hi + 1)) - 1) ^ ((1 << lo) - 1)
                if pred.parity is None:
                    if (reach[k][0] | reach[k][1]) & mask:
                        return True
                elif reach[k][(pred.parity - p_free - c.parity) % 2] & mask:
                    return True
            return False

        word = []
        assigned: tuple[int, ...] = ()
        m_free = p_free = 0
        k = 0
        if not feasible(assigned, 0, 0, 0):
            return None
        for j in frame.coords:
            if j in self.atoms:
                for idx, atom in enumerate(self.atoms[j]):
                    if feasible(assigned + (idx,), m_free, p_free, k):
                        assigned = assigned + (idx,)
                        word.append(atom.min)
                        break
                else:  # pragma: no cover - feasibility is exact
                    raise AssertionError("lexicographic search lost feasibility")
            else:
                k += 1
                if feasible(assigned, m_free, p_free, k):
                    word.append(0)
                else:
                    m_free += j
                    p_free ^= 1
                    word.append(1)
        return tuple(word)


# --------------------------------------------------------------------------
# The density lemma


@dataclass
class LemmaResult:
    xi: Fraction
    mu_E: Fraction
    mu_E0: Fraction
    E0: list = field(default_factory=list)

    @property
    def certificate(self) -> bool:
        return self.mu_E0 > self.mu_E / 2


def check_lemma_hypotheses(xi, region: Region, mu_E: Fraction) -> None:
    xi = Fraction(xi)
    ok, lhs, rhs = region.density_hypothesis(xi)
    if not ok:
        raise HypothesisViolated("mu(B) <= (1 - xi/128) mu(Z_u)", lhs, rhs)
    if not mu_E > xi / 16:
        raise HypothesisViolated("mu(Z_E) <= xi/16", mu_E, xi / 16)


DENSE = Fraction(3, 4)


def lemma_refine(xi, region: Region, E: Iterable[Sequence[int]], first: int) -> LemmaResult:
    """Keep the block words ``v`` of ``E`` where ``B`` has density > 3/4 on ``Z_v``.

    Words cover the coordinates ``first, first+1, ...``; ``first`` must exceed
    the length of ``u``. The returned certificate asserts
    ``mu(Z_{E0}) > mu(Z_E) / 2``.
    """
    xi = Fraction(xi)
    if first <= region.I:
        raise ValueError("block must lie strictly after the u-coordinates")
    words = [tuple(w) for w in dict.fromkeys(tuple(w) for w in E)]
    depth = first + (len(words[0]) if words else 1)
    sch = region.schedule(depth)
    mu = {w: prefix_measure_block(sch, w, first) for w in words}
    mu_E = sum(mu.values(), Fraction(0))
    check_lemma_hypotheses(xi, region, mu_E)
    E0 = [w for w in words if 1 - region.block_loss(w, first) > DENSE]
    return LemmaResult(xi, mu_E, sum((mu[w] for w in E0), Fraction(0)), E0)


def lemma_refine_law(xi, law: BlockLaw, E: Sequence[StatPredicate]) -> LemmaResult:
    """Cell-level version for predicate-described ``E`` (union of disjoint predicates)."""
    xi = Fraction(xi)
    if law.region is None:
        raise ValueError("law has no region")
    mu_E = law.measure_union(E)
    check_lemma_hypotheses(xi, law.region, mu_E)
    good = [c for c in law.cells if 1 - c.loss > DENSE]
    mu_E0 = law.measure_union(E, lambda c: 1 - c.loss > DENSE)
    return LemmaResult(xi, mu_E, mu_E0, good)


def prefix_measure_block(schedule: BaseSchedule, word: Sequence[int], first: int) -> Fraction:
    out = Fraction(1)
    for j, v in enumerate(word, start=first):
        out *= Fraction(1, 2) if v == 0 else Fraction(1, 2 * schedule.q**j)
    return out
