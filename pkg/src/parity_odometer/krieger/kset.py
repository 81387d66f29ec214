"""Measures of K-sets and exact cocycle-ratio diagnostics.

A point ``x`` of ``B`` lies in the K-set when some ``y`` in ``B`` agrees with
``x`` beyond ``depth``, is related to it, and has cocycle magnitude in
``(e^{s-delta}, e^{s+delta})``. With ``B`` determined by the first ``depth``
coordinates, membership depends on ``x`` only through its weighted parity
sum ``m`` and parity ``p``, so the measure is a sum over a joint law.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import mpmath
import numpy as np

from ..errors import BudgetExceeded, DepthExceeded
from ..measure import BaseSchedule, Box, Cylinder, SymbolSet
from .proof import DIGITS, GUARD
from .tables import table_over

RELATIONS = ("parity", "full-tail")
DEFAULT_SHARDS = 16


@dataclass
class KSetResult:
    measure: Fraction | None = None
    estimate: float | None = None
    half_width: float | None = None
    samples: int = 0
    seed: int | None = None
    mode: str = "exact"
    borderline: bool = False

    def to_json(self) -> dict:
        out = {"mode": self.mode, "borderline": self.borderline}
        if self.measure is not None:
            out["measure"] = f"{self.measure.numerator}/{self.measure.denominator}"
            out["approx"] = float(self.measure)
        if self.estimate is not None:
            out.update(estimate=self.estimate, half_width=self.half_width,
                       samples=self.samples, seed=self.seed)
        return out


def box_law(box: Box, q: int, depth: int) -> dict[tuple[int, int], Fraction]:
    """Measure of ``box`` split by (weighted parity sum, parity) over 1..depth."""
    pins = box.as_dict()
    sch = BaseSchedule(q, depth)
    law = {(0, 0): Fraction(1)}
    for j in range(1, depth + 1):
        s = pins.get(j, SymbolSet.full(q, j))
        w0 = Fraction(1, 2) if s.has_zero() else Fraction(0)
        w1 = s.count_nonzero() * Fraction(1, 2 * sch.q**j)
        nxt: dict[tuple[int, int], Fraction] = {}
        for (m, p), w in law.items():
            if w0:
                nxt[(m, p)] = nxt.get((m, p), 0) + w * w0
            if w1:
                key = (m + j, p ^ 1)
                nxt[key] = nxt.get(key, 0) + w * w1
        law = nxt
    return law


def cylinder_law(B: Cylinder, q: int, depth: int) -> dict[tuple[int, int], Fraction]:
    if B.empty:
        return {}
    if B.support and B.support[-1] > depth:
        raise DepthExceeded(f"B depends on coordinate {B.support[-1]} > depth {depth}")
    total: dict[tuple[int, int], Fraction] = {}
    for box in B.disjoint_boxes(q):
        for key, w in box_law(box, q, depth).items():
            total[key] = total.get(key, 0) + w
    return {k: w for k, w in total.items() if w}


def distance_window(q: int, s, delta) -> tuple[int, int, list[int]]:
    """Integer range ``[dlo, dhi]`` with ``e^{s-delta} < d log q < e^{s+delta}``.

    Also returns the integers whose log-comparison lies within the guard band.
    """
    with mpmath.workdps(DIGITS):
        s, delta = mpmath.mpf(s), mpmath.mpf(delta)
        logq = mpmath.log(q)
        lo, hi = mpmath.exp(s - delta) / logq, mpmath.exp(s + delta) / logq
        dlo = int(mpmath.floor(lo)) + 1
        dhi = int(mpmath.ceil(hi)) - 1
        near = []
        for d in {dlo - 1, dlo, dhi, dhi + 1}:
            if d <= 0:
                continue
            lg = mpmath.log(d * logq)
            if abs(lg - (s - delta)) <= GUARD or abs(lg - (s + delta)) <= GUARD:
                near.append(d)
    return max(dlo, 1), dhi, sorted(near)


def _has_partner(sorted_ms: list[int], m: int, dlo: int, dhi: int) -> bool:
    if dlo > dhi:
        return False
    for a, b in ((m + dlo, m + dhi), (m - dhi, m - dlo)):
        k = bisect_left(sorted_ms, a)
        if k < len(sorted_ms) and sorted_ms[k] <= b:
            return True
    return False


def _partner_sets(law: dict, relation: str) -> dict[int, list[int]]:
    if relation not in RELATIONS:
        raise ValueError(f"relation must be one of {RELATIONS}")
    if relation == "parity":
        return {p: sorted(m for (m, pp) in law if pp == p) for p in (0, 1)}
    ms = sorted({m for (m, _) in law})
    return {0: ms, 1: ms}


def qualifying(law: dict, q: int, s, delta, relation: str) -> tuple[set[tuple[int, int]], bool]:
    dlo, dhi, near = distance_window(q, s, delta)
    partners = _partner_sets(law, relation)
    good = {(m, p) for (m, p) in law if _has_partner(partners[p], m, dlo, dhi)}
    border = any(
        _has_partner(partners[p], m, d, d) for d in near for (m, p) in law
    )
    return good, border


def k_set_measure(B: Cylinder, s, delta, depth: int, q: int, relation: str = "parity",
                  mode: str = "exact", samples: int = 20_000, seed: int = 0,
                  budget: int = 10**7, shards: int = DEFAULT_SHARDS,
                  mapper: Callable | None = None) -> KSetResult:
    """K-set measure of ``B`` at scale ``s`` and width ``delta``.

    ``mode`` is ``"exact"``, ``"monte-carlo"`` or ``"auto"`` (exact unless the
    joint-law work exceeds ``budget``).
    """
    n_boxes = 0 if B.empty else len(B.disjoint_boxes(q))
    work = n_boxes * (depth * (depth + 1) // 2 + 1) * depth
    if mode == "auto":
        mode = "exact" if work <= budget else "monte-carlo"
    if mode == "exact" and work > budget:
        raise BudgetExceeded(f"exact K-set needs ~{work} operations > budget {budget}")
    law = cylinder_law(B, q, depth)
    good, border = qualifying(law, q, s, delta, relation)
    if mode == "exact":
        total = sum((w for key, w in law.items() if key in good), Fraction(0))
        return KSetResult(measure=total, mode="exact", borderline=border)
    if mode != "monte-carlo":
        raise ValueError(f"unknown mode {mode!r}")
    per = -(-samples // shards)
    tasks = [_Shard(B, q, depth, frozenset(good), seed, k, shards, per) for k in range(shards)]
    mapper = mapper or (lambda fn, items: list(map(fn, items)))
    hits = sum(mapper(_run_shard, tasks))  # ordered reduction by shard index
    n = per * shards
    p = hits / n
    se = math.sqrt(max(p * (1 - p), 0.0) / n)
    return KSetResult(estimate=p, half_width=1.96 * se, samples=n, seed=seed,
                      mode="monte-carlo", borderline=border)


@dataclass(frozen=True)
class _Shard:
    B: Cylinder
    q: int
    depth: int
    good: frozenset
    seed: int
    index: int
    shards: int
    count: int


def _draw_symbol(rng: np.random.Generator, top: int) -> int:
    """Uniform draw from 1..top, exact for tops beyond 64 bits."""
    if top < 2**62:
        return int(rng.integers(1, top + 1))
    bits = top.bit_length()
    words = -(-bits // 62)
    while True:
        v = 0
        for _ in range(words):
            v = (v << 62) | int(rng.integers(0, 2**62))
        v >>= words * 62 - bits
        if v < top:
            return v + 1


def _run_shard(task: _Shard) -> int:
    ss = np.random.SeedSequence(task.seed).spawn(task.shards)[task.index]
    rng = np.random.Generator(np.random.Philox(ss))
    hits = 0
    for _ in range(task.count):
        word, m, p = [], 0, 0
        for j in range(1, task.depth + 1):
            if rng.random() < 0.5:
                word.append(0)
            else:
                word.append(_draw_symbol(rng, task.q**j))
                m += j
                p ^= 1
        if (m, p) in task.good and task.B.contains(word):
            hits += 1
    return hits


# --------------------------------------------------------------------------
# Exact cocycle diagnostics


@dataclass
class RatioRow:
    window: tuple[int, int]
    k: int
    measure: Fraction

    def to_json(self) -> dict:
        return {"m": self.window[0], "n": self.window[1], "k": self.k,
                "measure": f"{self.measure.numerator}/{self.measure.denominator}"}


def ratio_scan(windows: Sequence[tuple[int, int]], ks: Sequence[int]) -> list[RatioRow]:
    """For each coordinate window and cocycle ``k log q``, the measure of points
    with a related partner differing only inside the window at exactly that cocycle."""
    rows = []
    for k in ks:
        if k == 0:
            raise ValueError("cocycle 0 is not a valid probe")
    for m, n in windows:
        if not 1 <= m <= n:
            raise ValueError(f"bad window [{m}, {n}]")
        table = table_over(range(m, n + 1))
        for k in ks:
            hit = 0
            for w, p, c in table.items():
                if 0 <= w - k <= table.max_m and table.count(w - k, p):
                    hit += c
            rows.append(RatioRow((m, n), k, Fraction(hit, table.denominator)))
    return rows
