from __future__ import annotations

import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parity_odometer.errors import HypothesisViolated
from parity_odometer.krieger.events import (
    BlockLaw,
    Region,
    StatFrame,
    StatPredicate,
    lemma_refine,
    lemma_refine_law,
    prefix_measure_block,
)
from parity_odometer.measure import BaseSchedule, Box, Cylinder, LogValue, SymbolSet, iter_prefixes, prefix_measure

Q = 2


def block_words(q, first, last):
    return itertools.product(*(range(q**j + 1) for j in range(first, last + 1)))


def pin_sets(j):
    top = Q**j
    return st.one_of(
        st.just([0]),
        st.just(list(range(1, top + 1))),
        st.lists(st.integers(0, top), min_size=1, max_size=4),
    )


defect_boxes = st.dictionaries(st.integers(2, 6), st.integers(0, 0), min_size=1, max_size=3).flatmap(
    lambda d: st.fixed_dictionaries({j: pin_sets(j) for j in d})
).map(Box.make)


def predicates(centering):
    bound = st.one_of(st.none(), st.integers(-16, 16).map(lambda k: Fraction(k, 2)))

    def to_lv(k):
        if k is None:
            return None
        return LogValue(0, k) if centering == "block" else LogValue(-1, k)

    return st.builds(
        lambda lo, hi, p, h: StatPredicate(to_lv(lo), to_lv(hi), p, h),
        bound, bound, st.sampled_from([None, 0, 1]), st.sampled_from([None, 0, 1]),
    )


def _brute_measure(frame, region, pred, cell_filter=None, law=None):
    sch = BaseSchedule(Q, max(frame.last, region.max_coord if region else 1))
    total = Fraction(0)
    for w in block_words(Q, frame.first, frame.last):
        if pred.holds(frame, w) and (cell_filter is None or cell_filter(law.cell_of(w))):
            total += prefix_measure_block(sch, w, frame.first)
    return total


@settings(max_examples=80, deadline=None)
@given(data=st.data(), last=st.integers(2, 4), centering=st.sampled_from(["block", "full"]),
       defects=st.lists(defect_boxes, max_size=3))
def test_block_law_measure_equals_enumeration(data, last, centering, defects):
    region = Region.build(Q, (1,), defects)
    frame = StatFrame(Q, 2, last, centering)
    law = BlockLaw.build(frame, region)
    pred = data.draw(predicates(centering))
    assert law.measure(pred) == _brute_measure(frame, region, pred)
    dense = lambda c: 1 - c.loss > Fraction(3, 4)
    assert law.measure(pred, dense) == _brute_measure(frame, region, pred, dense, law)


@settings(max_examples=80, deadline=None)
@given(data=st.data(), last=st.integers(2, 4), defects=st.lists(defect_boxes, max_size=3))
def test_cell_loss_equals_per_word_loss(data, last, defects):
    region = Region.build(Q, (1,), defects)
    law = BlockLaw.build(StatFrame(Q, 2, last), region)
    for w in block_words(Q, 2, last):
        assert law.cell_of(w).loss == region.block_loss(w, 2)


@settings(max_examples=80, deadline=None)
@given(data=st.data(), last=st.integers(2, 4), defects=st.lists(defect_boxes, max_size=3))
def test_lex_min_equals_first_enumerated_word(data, last, defects):
    region = Region.build(Q, (1,), defects)
    frame = StatFrame(Q, 2, last)
    law = BlockLaw.build(frame, region)
    pred = data.draw(predicates("block"))
    dense = data.draw(st.booleans())
    cell_ok = (lambda c: 1 - c.loss > Fraction(3, 4)) if dense else None
    expected = next((w for w in block_words(Q, 2, last)
                     if pred.holds(frame, w) and (cell_ok is None or cell_ok(law.cell_of(w)))), None)
    assert law.lex_min(pred, cell_ok) == expected


@settings(max_examples=80, deadline=None)
@given(data=st.data(), last=st.integers(2, 4), defects=st.lists(defect_boxes, max_size=3))
def test_m_values_are_attained_sums(data, last, defects):
    region = Region.build(Q, (1,), defects)
    frame = StatFrame(Q, 2, last)
    law = BlockLaw.build(frame, region)
    pred = data.draw(predicates("block"))
    seen = {}
    for w in block_words(Q, 2, last):
        if pred.holds(frame, w):
            seen.setdefault(law.cell_of(w).atoms, set()).add(frame.m_of(w))
    for cell in law.cells:
        assert set(law.m_values(cell, pred)) == seen.get(cell.atoms, set())


@settings(max_examples=200, deadline=None)
@given(q=st.integers(2, 7), first=st.integers(1, 6), n=st.integers(1, 6),
       centering=st.sampled_from(["block", "full"]),
       a=st.integers(-20, 20), b=st.integers(-40, 40), c=st.integers(-20, 20), d=st.integers(-40, 40))
def test_m_bounds_match_linear_scan(q, first, n, centering, a, b, c, d):
    frame = StatFrame(q, first, first + n - 1, centering)
    lo, hi = LogValue(a, Fraction(b, 2)), LogValue(c, Fraction(d, 2))
    inside = [m for m in range(frame.max_m + 1)
              if frame.stat(m).compare(lo, q) >= 0 and frame.stat(m).compare(hi, q) <= 0]
    mlo, mhi = frame.m_bounds(lo, hi)
    assert inside == list(range(mlo, mhi + 1))


def test_stat_frame_centerings():
    block = StatFrame(5, 2, 3)
    assert block.stat(0) == LogValue(0, Fraction(-5, 2))
    full = StatFrame(5, 2, 3, "full")
    # c(3) - sum_{j in 2..3} log mu_j(0) = -3log2 - 3log5 + 2log2
    assert full.stat(0) == LogValue(-1, -3)
    with pytest.raises(ValueError):
        StatFrame(5, 3, 2)


def test_predicate_shift_and_containment():
    p = StatPredicate(LogValue(0, -1), LogValue(0, 1), parity=0)
    wide = StatPredicate(LogValue(0, -3), LogValue(0, 3))
    assert p.within(wide, 5)
    assert not wide.within(p, 5)
    moved = p.shifted(-2, "moved")
    assert moved.lo == LogValue(0, -3) and moved.name == "moved"
    assert moved.within(wide, 5)
    assert p.with_(head=1).head == 1
    assert p.to_json()["lo"] == {"log2": 0, "logq": -1}


def test_region_measure_equals_enumeration():
    defects = [Box.make({3: [0], 4: [1, 2, 3]}), Box.make({2: [0], 3: [5, 6]})]
    region = Region.build(2, (1,), defects)
    sch = BaseSchedule(2, 4)
    brute = sum((prefix_measure(sch, w) for w in iter_prefixes(sch, 4) if region.contains(w)), Fraction(0))
    assert region.measure() == brute


def test_region_drops_defects_outside_zu():
    region = Region.build(2, (1,), [Box.make({1: [0], 2: [0]}), Box.make({1: [1, 2], 3: [0]})])
    assert len(region.defects) == 1
    assert region.relative_defect() == Fraction(1, 2)


def test_region_from_cylinder_round_trip():
    A = Cylinder((Box.make({1: [1], 2: [0]}), Box.make({1: [1], 3: [1, 2, 3, 4, 5, 6, 7, 8]})))
    region = Region.from_cylinder(2, (1,), A)
    sch = BaseSchedule(2, 3)
    for w in iter_prefixes(sch, 3):
        assert region.contains(w) == (w[0] == 1 and A.contains(w))


def test_lemma_full_region_keeps_everything():
    region = Region.build(2, (1,))
    words = [(0, 0), (1, 0), (0, 3)]
    res = lemma_refine(Fraction(1, 4), region, words, 2)
    assert sorted(res.E0) == sorted(words)
    assert res.certificate


def test_lemma_gates():
    thin = Region.build(2, (1,), [Box.make({2: [0]})])
    with pytest.raises(HypothesisViolated):
        lemma_refine(Fraction(1, 4), thin, [(0, 0)], 2)
    with pytest.raises(HypothesisViolated):
        lemma_refine(Fraction(1, 4), Region.build(2, (1,)), [(3, 8)], 2)
    with pytest.raises(ValueError):
        lemma_refine(Fraction(1, 4), Region.build(2, (1,)), [(0,)], 1)


def test_lemma_density_gate_just_below_threshold():
    # relative defect xi/100 > xi/128 violates the density hypothesis
    xi = Fraction(1, 4)
    coords = {3: [0], 4: [0], 5: [0], 6: [0], 7: [0], 8: [0, 1, 2]}
    box = Box.make({j: vs for j, vs in coords.items()})
    region = Region.build(2, (0,), [box])
    rel = region.relative_defect()
    assert xi / 128 < rel
    with pytest.raises(HypothesisViolated):
        lemma_refine(xi, region, [(0,)], 2)


@settings(max_examples=60, deadline=None)
@given(data=st.data(), defects=st.lists(defect_boxes, max_size=3))
def test_cell_lemma_agrees_with_word_lemma(data, defects):
    region = Region.build(Q, (1,), defects)
    xi = Fraction(1, 4)
    if not region.density_hypothesis(xi)[0]:
        return
    frame = StatFrame(Q, 2, 4)
    law = BlockLaw.build(frame, region)
    pred = data.draw(predicates("block"))
    words = [w for w in block_words(Q, 2, 4) if pred.holds(frame, w)]
    if not words or law.measure(pred) <= xi / 16:
        return
    by_words = lemma_refine(xi, region, words, 2)
    by_cells = lemma_refine_law(xi, law, [pred])
    assert (by_words.mu_E, by_words.mu_E0) == (by_cells.mu_E, by_cells.mu_E0)
    assert by_cells.certificate
