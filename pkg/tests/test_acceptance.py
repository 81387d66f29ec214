"""Acceptance criteria 1-11, each at its stated tolerance and time limit.

Each test records one PASS/FAIL line, printed in the terminal summary.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from parity_odometer.bratteli import pushforward_audit
from parity_odometer.cli import run
from parity_odometer.dynamics import (
    carry_depth,
    class_enumerate,
    cocycle,
    induced_return_orbit,
    related,
    t_inverse_step,
    t_step,
)
from parity_odometer.errors import BufferOverflow
from parity_odometer.krieger.audit import lemma_audit
from parity_odometer.krieger.proof import EXACT, auto_search, default_region
from parity_odometer.krieger.tables import (
    brute_table,
    build_table,
    choose_scale_sequence,
    ks_gaussian,
    scaling,
    xi_of,
)
from parity_odometer.measure import BaseSchedule, iter_prefixes, prefix_measure

pytestmark = pytest.mark.acceptance

BETA = Fraction(1, 4)


def test_criterion_01_normalization(criterion):
    with criterion(1, "cylinder measures sum to 1 (q=2 depth 5 enumerated, q=5 depth 30 by DP)", 5):
        sch = BaseSchedule(2, 5)
        count = 0
        total_den = 2**5 * 2 ** (1 + 2 + 3 + 4 + 5)
        acc = 0
        for w in iter_prefixes(sch, 5):
            mu = prefix_measure(sch, w)
            acc += mu.numerator * (total_den // mu.denominator)
            count += 1
        assert count == 75_735
        assert Fraction(acc, total_den) == 1
        # q=5, depth 30: a bit pattern with weighted sum m covers q^m words of measure 2^-30 q^-m
        q, n = 5, 30
        table = build_table(1, n)
        total = sum((Fraction(c * q**m, 2**n * q**m) for m, p, c in table.items()), Fraction(0))
        assert total == 1


def test_criterion_02_t_parity_and_bijectivity(criterion):
    with criterion(2, "T keeps parity and inverts on 1e5 seeded points (q=5, L=16)", 5):
        q, L, N = 5, 16, 100_000
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(2)))
        tops = np.array([q**j for j in range(1, L + 1)], dtype=np.int64)
        # mix zeros, full symbols and uniform symbols so carries reach deep
        kind = rng.integers(0, 3, size=(N, L))
        unif = np.minimum((rng.random((N, L)) * (tops + 1)).astype(np.int64), tops)
        points = np.where(kind == 0, 0, np.where(kind == 1, tops, unif)).tolist()
        stepped = violations = 0
        deepest = 0
        for x in points:
            x = tuple(x)
            try:
                y = t_step(x, q)
            except BufferOverflow:
                continue
            n = carry_depth(x, q)
            deepest = max(deepest, n)
            stepped += 1
            if not related(x, y, n) or t_inverse_step(y, q) != x:
                violations += 1
        assert violations == 0
        assert stepped > 0.99 * N and deepest >= 8


def test_criterion_03_cocycle_is_measure_ratio(criterion):
    with criterion(3, "cocycle = exact log measure ratio on all related depth-4 pairs (q=2)", 30):
        q, n = 2, 4
        sch = BaseSchedule(q, n)
        words = list(iter_prefixes(sch, n))
        # mu(Z_w) = 2^-e exactly; record e by integer factorization of the denominator
        exps = {}
        for w in words:
            mu = prefix_measure(sch, w)
            den = mu.denominator
            e = den.bit_length() - 1
            assert mu.numerator == 1 and den == 1 << e
            exps[w] = e
        classes = {0: [], 1: []}
        for w in words:
            classes[sum(1 for v in w if v) % 2].append(w)
        pairs = mismatches = 0
        for members in classes.values():
            for x in members:
                ex = exps[x]
                for y in members:
                    c = cocycle(x, y, n, q)
                    pairs += 1
                    # mu(Z_y)/mu(Z_x) = 2^(ex - ey) must equal q^b with no log 2 part
                    if c.a != 0 or ex - exps[y] != c.b:
                        mismatches += 1
        assert pairs == len(classes[0]) ** 2 + len(classes[1]) ** 2 > 10**6
        assert mismatches == 0


def test_criterion_04_orbit_equals_class(criterion):
    with criterion(4, "untruncated T-orbits recover the parity class (q=2, n=2, L=5, 50 starts)", 60):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(4)))
        checked = 0
        for _ in range(50):
            x = tuple(int(rng.integers(0, 2**j + 1)) for j in range(1, 6))
            walk = induced_return_orbit(x, 2, L=5, q=2)
            if not walk.complete:
                continue
            checked += 1
            assert walk.prefixes == set(class_enumerate(x, 2, 2))
        assert checked == 50


def test_criterion_05_dp_oracle(criterion):
    with criterion(5, "DP table equals subset enumeration for lengths <= 16, l in 1..5", 10):
        for l in range(1, 6):
            for length in range(1, 17):
                assert build_table(l, l + length - 1) == brute_table(l, l + length - 1)


def test_criterion_06_scaling(criterion):
    with criterion(6, "b(3)=2 log 5 with (3/4, 1/4, 1/4); b strictly increasing on 10,20,40,80", 5):
        sc = scaling(5, 3, BETA)
        assert sc.t == 2
        assert (sc.p_interior, sc.p_upper, sc.p_lower) == (Fraction(3, 4), Fraction(1, 4), Fraction(1, 4))
        assert sc.ok
        ts = [c.scaling.t for c in choose_scale_sequence(5, BETA, (10, 20, 40, 80))]
        assert all(a < b for a, b in zip(ts, ts[1:]))


def test_criterion_07_lemma_audit(criterion):
    with criterion(7, "1000 randomized exact lemma instances, zero counterexamples", 60):
        rows = lemma_audit(1000, seed=0)
        assert len(rows) == 1000
        assert all(r.I <= 2 and r.last <= 5 for r in rows)
        assert sum(not r.certificate for r in rows) == 0
        assert sum(not r.oracle_agrees for r in rows) == 0
        assert all(r.mu_E0 > r.mu_E / 2 for r in rows)


def test_criterion_08_end_to_end_replay(criterion):
    with criterion(8, "auto-search finds a fully passing replay (q=5, beta=1/4, I=1)", 120):
        region = default_region(5, (0,))
        xi = xi_of(BETA)
        assert region.I == 1
        assert region.relative_defect() < xi / 128
        report, log = auto_search(5, BETA, region, range(2, 121))
        assert report is not None and report.passed
        labels = report.labels()
        for label in ("(8)", "(10)", "(13)", "(16)", "(19)", "(21)", "final"):
            assert label in labels and report.get(label).passed
        assert not report.get("(21)").borderline
        assert not any(r.borderline for r in report.records)
        final = report.get("final")
        assert final.exactness == EXACT
        assert final.rhs == Fraction(1, 256) * region.measure()
        assert final.lhs >= final.rhs


def test_criterion_09_pushforward(criterion):
    with criterion(9, "AF measure equals product measure on all short path prefixes", 5):
        for q, top in ((2, 4), (5, 2)):
            for depth in range(0, top + 1):
                audit = pushforward_audit(q, depth)
                assert audit["mismatches"] == 0
                assert audit["checked"] == math.prod(q**j + 1 for j in range(1, depth + 1))
                assert audit["total_af"] == 1


def test_criterion_10_gaussian_trend(criterion):
    with criterion(10, "KS(160) < KS(40) and KS(160) < 0.1", 30):
        k40, k160 = ks_gaussian(5, 40), ks_gaussian(5, 160)
        assert k160 < k40
        assert k160 < 0.1


def test_criterion_11_determinism(criterion, tmp_path):
    # the limit is twice criterion 8's runtime budget
    with criterion(11, "replay reports byte-identical for 1 and 8 workers", 2 * 120):
        names = ("report.json", "proof_report.json", "margins.png")
        blobs = []
        for workers in ("1", "8"):
            out = tmp_path / f"w{workers}"
            assert run(["replay", "--q", "5", "--beta", "1/4", "--seed", "0", "--workers", workers,
                        "--out", str(out)]) == 0
            blobs.append([(out / name).read_bytes() for name in names])
        assert blobs[0] == blobs[1]
