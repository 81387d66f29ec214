from __future__ import annotations

import itertools
import json
from fractions import Fraction

import mpmath
import pytest

from parity_odometer.errors import HypothesisViolated, NotFound
from parity_odometer.krieger.events import Region, StatFrame
from parity_odometer.krieger.proof import (
    EXACT,
    GUARDED,
    ProofContext,
    ProofReport,
    Record,
    auto_search,
    case_split,
    default_m,
    default_region,
    density_cylinder,
    gamma_sets,
    guarded_gt,
    replay_proof,
    select_extremes,
)
from parity_odometer.measure import BaseSchedule, Box, Cylinder, SymbolSet, iter_prefixes, prefix_measure

QUARTER = Fraction(1, 4)
PIPELINE = ["density", "(2)", "(3)", "(4)", "(6)", "(7)", "(7trei)", "(8)", "(9)", "(10)", "(11)",
            "(12)", "(13)", "(15)", "(16)", "(17)", "(18bis)", "(18trei)", "(18)", "(19)", "(21)",
            "(20)", "final"]


def test_gamma_window_example():
    ctx = ProofContext.build(5, QUARTER, Region.build(5, (0,)), 3, rho=0, t=1)
    sets = gamma_sets(ctx)
    assert sets.measures["Gamma"] == Fraction(1, 2)


@pytest.mark.parametrize("ik,rho", [(6, 0), (12, Fraction(1, 4)), (20, Fraction(-1, 2))])
def test_gamma_sets_structure(ik, rho):
    ctx = ProofContext.build(5, QUARTER, default_region(5), ik, rho=rho)
    sets = gamma_sets(ctx, ref=(1,) + (0,) * (ik - 2))
    m = sets.measures
    assert m["V0"] + m["V1"] == 1
    assert sets.v0.parity == 1
    assert sets.gamma.within(sets.psi, 5)
    assert m["Psi"] >= m["Gamma"]


def test_default_scale_constant():
    M = default_m(5, 1)
    assert M == Fraction(13, 4)
    assert mpmath.exp(M - 2) > 2 * mpmath.log(5)
    assert not mpmath.exp(M - Fraction(1, 8) - 2) > 2 * mpmath.log(5)


def test_case_two_instance():
    ctx = ProofContext.build(2, QUARTER, Region.build(2, (0,)), 4, rho=Fraction(-3, 4), t=2)
    split = case_split(ctx, (0, 1, 1))
    assert split.case == "II"
    assert split.measures["Gamma"] == Fraction(3, 8)
    assert split.measures["Gamma∩V0"] == 0
    assert split.mu_E == Fraction(3, 8)
    assert split.contained
    # exhaustive check of membership
    frame = ctx.frame
    members = sorted(w for w in itertools.product(*(range(2**j + 1) for j in range(2, 5)))
                     if any(p.holds(frame, w) for p in split.E))
    bits = {tuple(int(v != 0) for v in w) for w in members}
    assert bits == {(0, 0, 0), (1, 1, 0), (1, 0, 1)}


def test_case_one_on_symmetric_instance():
    ctx = ProofContext.build(5, QUARTER, Region.build(5, (0,)), 37)
    ref = (0,) * 36
    split = case_split(ctx, ref)
    assert split.case == "I"
    assert split.measures["Gamma∩V0"] > ctx.xi / 16


def test_case_split_shift_is_exact():
    frame = StatFrame(5, 2, 6)
    w = (0, 3, 0, 7, 0)
    flipped = (1,) + w[1:]
    diff = frame.stat_of(flipped) - frame.stat_of(w)
    assert (diff.a, diff.b) == (0, 2)


def _lex_first(frame, pred):
    for w in itertools.product(*(range(frame.q**j + 1) for j in frame.coords)):
        if pred.holds(frame, w):
            return w
    return None


def test_extremes_on_full_region_are_lexicographic_minima():
    ctx = ProofContext.build(2, QUARTER, Region.build(2, (1,)), 5, rho=0, t=1)
    sets = gamma_sets(ctx)
    ext = select_extremes(ctx, sets)
    assert ext.v_minus == _lex_first(ctx.frame, sets.minus) == (0, 0, 0, 0)
    assert ext.v_plus == _lex_first(ctx.frame, sets.plus) == (0, 0, 1, 1)
    assert ext.lemma_minus.certificate and ext.lemma_plus.certificate


def test_extremes_avoid_thin_words():
    # the plus-tail minimum (0,0,1,1) loses half its mass to a thin defect
    region = Region.build(2, (1,), [Box.make({4: [1], 5: [1], 6: [0]})])
    assert region.density_hypothesis(QUARTER)[0]
    ctx = ProofContext.build(2, QUARTER, region, 5, rho=0, t=1)
    ext = select_extremes(ctx)
    assert region.block_loss((0, 0, 1, 1), 2) == Fraction(1, 2)
    assert ext.v_plus == (0, 0, 1, 2)
    assert 1 - region.block_loss(ext.v_plus, 2) > Fraction(3, 4)


def test_extremes_gate_on_empty_tail():
    ctx = ProofContext.build(2, QUARTER, Region.build(2, (1,)), 5, rho=0, t=50)
    with pytest.raises(HypothesisViolated):
        select_extremes(ctx)


def test_case_split_gate():
    ctx = ProofContext.build(2, QUARTER, Region.build(2, (1,)), 5, rho=1, t=40)
    with pytest.raises(HypothesisViolated):
        case_split(ctx, (0, 0, 0, 0))


def _check_passing(report: ProofReport, mirrored: bool = False):
    assert report.passed, report.failure
    assert report.labels() == PIPELINE
    final = report.get("final")
    assert final.lhs >= final.rhs
    assert final.detail["half_mu_u_xi_32"] >= final.rhs
    assert not any(r.borderline for r in report.records)
    assert report.context["branch"] == ("v+" if mirrored else "v-")


def test_replay_default_instance():
    ctx = ProofContext.build(5, QUARTER, default_region(5), 37)
    report = replay_proof(ctx)
    _check_passing(report)
    assert ctx.eta == Fraction(1, 256)
    assert report.get("final").rhs == Fraction(1, 256) * default_region(5).measure()
    rec19 = report.get("(19)")
    assert rec19.lhs == Fraction(255, 256)
    for label in ("(8)", "(15)", "(17)", "(21)", "(7trei)"):
        assert report.get(label).exactness == GUARDED
    for label in ("density", "(10)", "(13)", "(16)", "(18)", "(20)", "final"):
        assert report.get(label).exactness == EXACT


def test_replay_literal_and_strengthened_readings_recorded():
    report = replay_proof(ProofContext.build(5, QUARTER, default_region(5), 37))
    rec = report.get("(9)")
    assert rec.detail["literal_rhs"] < 0
    assert rec.passed


def test_replay_mirrored_branch():
    _check_passing(replay_proof(ProofContext.build(5, QUARTER, default_region(5), 37, rho=Fraction(-1, 8))),
                   mirrored=True)


def test_replay_full_region():
    _check_passing(replay_proof(ProofContext.build(5, QUARTER, Region.build(5, (0,)), 37)))


def test_replay_full_centering():
    _check_passing(replay_proof(ProofContext.build(5, QUARTER, default_region(5), 37, centering_mode="full")))


def test_replay_small_depth_stops_at_scale_gate():
    report = replay_proof(ProofContext.build(5, QUARTER, default_region(5), 3))
    assert not report.passed
    assert report.failure["stage"] == "(8)"
    assert report.failure["error"] == "ScaleTooSmall"
    assert report.labels()[-1] == "(8)"


def test_replay_density_gate():
    thick = Region.build(5, (0,), [Box.make({2: [0], 3: [0]})])
    report = replay_proof(ProofContext.build(5, QUARTER, thick, 37))
    assert report.failure["stage"] == "density"
    assert report.labels() == ["density"]


def test_report_json_round_trip():
    report = replay_proof(ProofContext.build(5, QUARTER, default_region(5), 37))
    data = json.loads(report.dumps())
    assert data["passed"] is True
    assert [r["label"] for r in data["records"]] == PIPELINE
    density = data["records"][0]
    assert "/" in density["lhs"] and density["exactness"] == EXACT


def test_report_rejects_duplicate_labels():
    report = ProofReport()
    report.add(Record("(8)", 1, 0, EXACT, True))
    with pytest.raises(ValueError):
        report.add(Record("(8)", 1, 0, EXACT, True))


def test_guarded_comparison():
    assert guarded_gt(mpmath.mpf(2), mpmath.mpf(1)) == (True, False)
    ok, border = guarded_gt(mpmath.mpf(1) + mpmath.mpf(10) ** -12, mpmath.mpf(1))
    assert border


def test_auto_search_finds_passing_depth():
    report, log = auto_search(5, QUARTER, default_region(5), range(3, 121))
    assert report.passed
    assert log[0]["ok"] is False
    assert log[-1]["replay"] == "pass"
    assert report.context["i_k"] == log[-1]["i_k"]


def test_auto_search_is_independent_of_chunking():
    a, la = auto_search(5, QUARTER, default_region(5), range(3, 60))
    b, lb = auto_search(5, QUARTER, default_region(5), range(3, 60), chunk=7)
    assert a.dumps() == b.dumps()
    assert la == lb


def test_default_region_is_thin():
    region = default_region(5)
    assert region.relative_defect() == Fraction(383, 262144)
    assert region.relative_defect() < Fraction(1, 512)


# -- density points


def test_density_cylinder_whole_space():
    u, region = density_cylinder(Cylinder((Box.make({}),)), QUARTER, 3, 2)
    assert u == () and region.measure() == 1


def test_density_cylinder_single_cylinder():
    u, region = density_cylinder(Cylinder((Box.make({1: [0]}),)), QUARTER, 3, 2)
    assert u == (0,)
    assert region.relative_defect() == 0


def test_density_cylinder_matches_brute_force_scan():
    A = Cylinder((Box.make({1: [0, 1]}), Box.make({1: [2], 2: [0, 1, 2]})))
    xi = QUARTER
    sch = BaseSchedule(2, 3)
    expected = None
    for d in range(0, 3):
        for u in iter_prefixes(sch, d) if d else [()]:
            inside = sum((prefix_measure(sch, w) for w in iter_prefixes(sch, 3)
                          if tuple(w[:d]) == u and A.contains(w)), Fraction(0))
            if inside > (1 - xi / 128) * prefix_measure(sch, u):
                expected = u
                break
        if expected is not None:
            break
    u, region = density_cylinder(A, xi, 2, 2)
    assert u == expected == (0,)


def test_density_cylinder_not_found():
    A = Cylinder((Box.make({3: [0]}),))
    with pytest.raises(NotFound) as info:
        density_cylinder(A, QUARTER, 2, 2)
    assert info.value.best_density == Fraction(1, 2)
