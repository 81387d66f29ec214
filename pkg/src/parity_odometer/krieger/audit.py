"""Randomized exact instances of the density lemma.

Each instance draws a prefix ``u``, a region ``B = Z_u`` minus thin defect
boxes, and a finite set ``E`` of block words, all at ``q = 2``. The lemma's
refinement is computed twice: through per-word losses and through explicit
cylinder algebra on ``B ∩ Z_u ∩ Z_v``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from ..measure import BaseSchedule, Box, Cylinder, SymbolSet, prefix_measure
from .events import Region, lemma_refine, prefix_measure_block

BETAS = (Fraction(1, 8), Fraction(1, 5), Fraction(1, 4), Fraction(1, 3), Fraction(2, 5))
MAX_BLOCK_LAST = 5
OUTSIDE_SPAN = 6


@dataclass
class LemmaInstance:
    q: int
    xi: Fraction
    region: Region
    first: int
    words: list[tuple[int, ...]]

    @property
    def last(self) -> int:
        return self.first + len(self.words[0]) - 1


def _random_set(rng: np.random.Generator, top: int) -> SymbolSet:
    kind = rng.integers(0, 4)
    if kind == 0:
        return SymbolSet.zero()
    if kind == 1:
        return SymbolSet.interval(1, top)
    lo = int(rng.integers(0, top + 1))
    hi = int(rng.integers(lo, top + 1))
    return SymbolSet.interval(lo, hi)


def _random_word(rng: np.random.Generator, q: int, coords: Sequence[int],
                 p_zero: float = 0.5) -> tuple[int, ...]:
    return tuple(0 if rng.random() < p_zero else int(rng.integers(1, q**j + 1)) for j in coords)


def random_instance(rng: np.random.Generator, q: int = 2) -> LemmaInstance:
    """Draw until the hypotheses hold (thin defects, heavy enough ``E``).

    Thin defects come in two shapes: a single light block word times a heavy
    tail constraint (these are what knock words out of ``E0``), or a coarse
    block constraint times a light tail constraint.
    """
    while True:
        I = int(rng.integers(1, 3))
        last = int(rng.integers(I + 1, MAX_BLOCK_LAST + 1))
        first = I + 1
        block = list(range(first, last + 1))
        xi = min(b := BETAS[int(rng.integers(0, len(BETAS)))], 1 - 2 * b)
        u = _random_word(rng, q, range(1, I + 1))
        outside = list(range(last + 1, last + OUTSIDE_SPAN + 1))
        defects, planted = [], []
        for _ in range(int(rng.integers(0, 5))):
            pins = {}
            if rng.random() < 0.6:
                w = _random_word(rng, q, block, p_zero=0.2)
                planted.append(w)
                pins.update({j: SymbolSet.of([v]) for j, v in zip(block, w)})
                for j in outside[: int(rng.integers(0, 3))]:
                    pins[j] = SymbolSet.zero() if rng.random() < 0.7 else _random_set(rng, q**j)
            else:
                for j in block:
                    if rng.random() < 0.5:
                        pins[j] = _random_set(rng, q**j)
                for j in outside:
                    if rng.random() < 0.6:
                        pins[j] = _random_set(rng, q**j)
            defects.append(Box.make(pins))
        region = Region.build(q, u, defects)
        if not region.density_hypothesis(xi)[0]:
            continue
        sch = BaseSchedule(q, last)
        target = xi / 16 * Fraction(1 + int(rng.integers(1, 8)), 1)
        words, mass, seen = [], Fraction(0), set()
        for w in planted:
            if w not in seen and rng.random() < 0.8:
                seen.add(w)
                words.append(w)
                mass += prefix_measure_block(sch, w, first)
        for _ in range(4000):
            if mass > target:
                break
            w = _random_word(rng, q, block)
            if w in seen:
                continue
            seen.add(w)
            words.append(w)
            mass += prefix_measure_block(sch, w, first)
        if mass > xi / 16:
            return LemmaInstance(q, xi, region, first, words)


def dense_words_by_cylinders(inst: LemmaInstance) -> list[tuple[int, ...]]:
    """E0 via explicit cylinder algebra: mu(B ∩ Z_v) > 3/4 mu(Z_u) mu(Z_v)."""
    reg = inst.region
    depth = max(reg.max_coord, inst.last)
    sch = BaseSchedule(inst.q, depth)
    mu_u = prefix_measure(sch, reg.u)
    out = []
    for v in inst.words:
        zv = Box.from_prefix(reg.u + v)
        pieces = Cylinder(tuple(reg.defects)).complement_within(zv, inst.q) if reg.defects else [zv]
        inter = sum((b.measure(sch) for b in pieces), Fraction(0))
        if inter > Fraction(3, 4) * mu_u * prefix_measure_block(sch, v, inst.first):
            out.append(v)
    return out


@dataclass
class AuditRow:
    index: int
    I: int
    last: int
    xi: Fraction
    words: int
    mu_E: Fraction
    mu_E0: Fraction
    certificate: bool
    oracle_agrees: bool

    def to_row(self) -> list:
        return [self.index, self.I, self.last, str(self.xi), self.words,
                f"{self.mu_E.numerator}/{self.mu_E.denominator}",
                f"{self.mu_E0.numerator}/{self.mu_E0.denominator}",
                int(self.certificate), int(self.oracle_agrees)]


AUDIT_HEADER = ["index", "I", "last", "xi", "words", "mu_E", "mu_E0", "certificate", "oracle_agrees"]


def _audit_one(args: tuple[int, int]) -> AuditRow:
    seed, index = args
    ss = np.random.SeedSequence([seed, index])
    rng = np.random.Generator(np.random.Philox(ss))
    inst = random_instance(rng)
    res = lemma_refine(inst.xi, inst.region, inst.words, inst.first)
    oracle = dense_words_by_cylinders(inst)
    return AuditRow(index, inst.region.I, inst.last, inst.xi, len(inst.words), res.mu_E, res.mu_E0,
                    res.certificate, sorted(oracle) == sorted(res.E0))


def lemma_audit(count: int, seed: int = 0, mapper: Callable | None = None) -> list[AuditRow]:
    mapper = mapper or (lambda fn, items: list(map(fn, items)))
    return list(mapper(_audit_one, [(seed, k) for k in range(count)]))
