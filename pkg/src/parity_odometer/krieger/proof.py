"""Mechanical replay of the property-A argument at one finite depth.

Every inequality the argument uses is re-evaluated on concrete data and
stored as a :class:`Record`. Measures are compared as exact rationals;
log-scale quantities are compared in 50-digit arithmetic with a guard band
and flagged when they land inside it.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import mpmath

from ..errors import (
    CaseSplitFailed,
    HypothesisViolated,
    NoFeasibleScale,
    NotFound,
    OdometerError,
    ScaleTooSmall,
    WindowMassTooSmall,
)
from ..measure import BaseSchedule, Box, Cylinder, LogValue, SymbolSet, disjointify, fmt_rational, prefix_measure
from .events import BlockLaw, Cell, Region, StatFrame, StatPredicate, lemma_refine_law, union_measure
from .tables import CenteredLaw, KriegerScaling, centering, choose_rho, scaling, window_mass, xi_of

GUARD = 1e-9
DIGITS = 50
EXACT = "exact-rational"
GUARDED = "guarded-float"


# --------------------------------------------------------------------------
# Guarded log-scale arithmetic


def lv_mp(value: LogValue, q: int):
    with mpmath.workdps(DIGITS):
        a, b = Fraction(value.a), Fraction(value.b)
        return (mpmath.mpf(a.numerator) / a.denominator) * mpmath.log(2) + (
            mpmath.mpf(b.numerator) / b.denominator
        ) * mpmath.log(q)


def guarded_gt(lhs, rhs) -> tuple[bool, bool]:
    """``(lhs > rhs, borderline)``; borderline values never pass."""
    with mpmath.workdps(DIGITS):
        gap = mpmath.mpf(lhs) - mpmath.mpf(rhs)
        border = abs(gap) <= GUARD
        return bool(gap > 0) and not border, bool(border)


def default_m(q: int, I: int) -> Fraction:
    """Smallest ``M`` on the 1/8 grid with ``M > 1`` and ``e^{M-2} > (I+1) log q``."""
    target = (I + 1) * math.log(q)
    k = 9
    while True:
        M = Fraction(k, 8)
        ok, _ = guarded_gt(mpmath.exp(mpmath.mpf(k) / 8 - 2), target)
        if ok:
            return M
        k += 1


# --------------------------------------------------------------------------
# Report


def encode(x):
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    if isinstance(x, Fraction):
        return fmt_rational(x)
    if isinstance(x, LogValue):
        out = x.to_json()
        return out
    if isinstance(x, float):
        return float(f"{x:.15g}")
    if isinstance(x, mpmath.mpf):
        return float(f"{float(x):.15g}")
    if isinstance(x, (list, tuple)):
        return [encode(v) for v in x]
    if isinstance(x, dict):
        return {str(k): encode(v) for k, v in x.items()}
    raise TypeError(f"cannot encode {type(x).__name__}")


@dataclass
class Record:
    label: str
    lhs: object
    rhs: object
    exactness: str
    passed: bool
    borderline: bool = False
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "label": self.label,
            "lhs": encode(self.lhs),
            "rhs": encode(self.rhs),
            "exactness": self.exactness,
            "pass": self.passed,
            "borderline": self.borderline,
        }
        if self.detail:
            out["detail"] = encode(self.detail)
        return out


@dataclass
class ProofReport:
    context: dict = field(default_factory=dict)
    records: list[Record] = field(default_factory=list)
    failure: dict | None = None

    @property
    def passed(self) -> bool:
        return self.failure is None and all(r.passed for r in self.records)

    def labels(self) -> list[str]:
        return [r.label for r in self.records]

    def get(self, label: str) -> Record:
        for r in self.records:
            if r.label == label:
                return r
        raise KeyError(label)

    def add(self, rec: Record) -> Record:
        if rec.label in self.labels():
            raise ValueError(f"duplicate record {rec.label}")
        self.records.append(rec)
        return rec

    def to_json(self) -> dict:
        return {
            "context": encode(self.context),
            "records": [r.to_json() for r in self.records],
            "failure": self.failure,
            "passed": self.passed,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"


# --------------------------------------------------------------------------
# Context


@dataclass
class ProofContext:
    q: int
    beta: Fraction
    region: Region
    ik: int
    rho: Fraction
    M: Fraction
    scale: KriegerScaling | None
    law: CenteredLaw
    frame: StatFrame
    block: BlockLaw
    delta: int = 3
    scale_error: str | None = None

    @classmethod
    def build(cls, q: int, beta, region: Region, ik: int, rho=None, t=None, M=None,
              delta: int = 3, centering_mode: str = "block") -> ProofContext:
        beta = Fraction(beta)
        I = region.I
        if ik <= I:
            raise ValueError(f"i(k)={ik} must exceed I={I}")
        law = CenteredLaw.build(ik)
        scale, err = None, None
        if t is None:
            try:
                scale = scaling(q, ik, beta, law)
            except NoFeasibleScale as exc:
                err = str(exc)
        else:
            t = Fraction(t)
            scale = KriegerScaling(q, ik, beta, centering(q, ik), t, law.prob_between(-t, t),
                                   law.prob_ge(t), law.prob_le(-t))
        if rho is None:
            rho = choose_rho(law, scale.t)[0] if scale is not None else Fraction(0)
        M = default_m(q, I) if M is None else Fraction(M)
        frame = StatFrame(q, I + 1, ik, centering_mode)
        block = BlockLaw.build(frame, region)
        return cls(q, beta, region, ik, Fraction(rho), M, scale, law, frame, block, delta, err)

    @property
    def xi(self) -> Fraction:
        return xi_of(self.beta)

    @property
    def eta(self) -> Fraction:
        return self.xi / 64

    @property
    def I(self) -> int:
        return self.region.I

    @property
    def u(self) -> tuple[int, ...]:
        return self.region.u

    @property
    def t(self) -> Fraction:
        return self.scale.t

    @property
    def b(self) -> LogValue:
        return LogValue(0, self.t)

    @property
    def mirrored(self) -> bool:
        return self.rho < 0

    def echo(self) -> dict:
        return {
            "q": self.q,
            "beta": self.beta,
            "xi": self.xi,
            "eta": self.eta,
            "delta": self.delta,
            "I": self.I,
            "u": list(self.u),
            "region": self.region.to_json(),
            "i_k": self.ik,
            "rho": self.rho,
            "t": None if self.scale is None else self.t,
            "M": self.M,
            "centering": self.frame.centering,
            "branch": "v+" if self.mirrored else "v-",
        }


# --------------------------------------------------------------------------
# Proof sets


@dataclass
class GammaSets:
    gamma: StatPredicate
    minus: StatPredicate
    plus: StatPredicate
    psi: StatPredicate
    v0: StatPredicate
    v1: StatPredicate
    measures: dict[str, Fraction]


def gamma_sets(ctx: ProofContext, ref: Sequence[int] | None = None) -> GammaSets:
    """Window, tail, widened-window and parity predicates with exact measures.

    Parity classes are taken relative to ``ref`` (even class if omitted).
    """
    t, rho, I = ctx.t, ctx.rho, ctx.I
    half = Fraction(1, 2)
    lo, hi = LogValue(0, (rho - half) * t), LogValue(0, (rho + half) * t)
    gamma = StatPredicate(lo, hi, name="Gamma")
    minus = StatPredicate(hi=LogValue(0, -Fraction(3, 4) * t), name="Gamma-")
    plus = StatPredicate(lo=LogValue(0, Fraction(3, 4) * t), name="Gamma+")
    psi = StatPredicate(lo - LogValue(0, I + 1), hi + LogValue(0, I + 1), name="Psi")
    p_ref = 0 if ref is None else sum(1 for v in ref if v) % 2
    v0 = StatPredicate(parity=p_ref, name="V0")
    v1 = StatPredicate(parity=1 - p_ref, name="V1")
    measures = {p.name: ctx.block.measure(p) for p in (gamma, minus, plus, psi, v0, v1)}
    return GammaSets(gamma, minus, plus, psi, v0, v1, measures)


@dataclass
class Extremes:
    v_minus: tuple[int, ...]
    v_plus: tuple[int, ...]
    lemma_minus: object
    lemma_plus: object


def dense(cell: Cell) -> bool:
    return 1 - cell.loss > Fraction(3, 4)


def select_extremes(ctx: ProofContext, sets: GammaSets | None = None) -> Extremes:
    """Lexicographically smallest dense members of both tails."""
    sets = sets or gamma_sets(ctx)
    xi = ctx.xi
    mm, mp = sets.measures["Gamma-"], sets.measures["Gamma+"]
    if not (mm >= xi and mp >= xi):
        raise HypothesisViolated("tail mass below xi", min(mm, mp), xi)
    out = []
    for pred in (sets.minus, sets.plus):
        lem = lemma_refine_law(xi, ctx.block, [pred])
        v = ctx.block.lex_min(pred, dense)
        if v is None:
            raise HypothesisViolated(f"{pred.name} has no dense member", lem.mu_E0, 0)
        out.append((v, lem))
    return Extremes(out[0][0], out[1][0], out[0][1], out[1][1])


@dataclass
class CaseSplit:
    case: str
    E: list[StatPredicate]
    mu_E: Fraction
    measures: dict[str, Fraction]
    contained: bool


def case_split(ctx: ProofContext, ref: Sequence[int], sets: GammaSets | None = None) -> CaseSplit:
    """A set ``E`` inside ``Psi ∩ V0`` (parity of ``ref``) with mass > xi/16."""
    sets = sets or gamma_sets(ctx, ref)
    xi, block = ctx.xi, ctx.block
    mu_gamma = block.measure(sets.gamma)
    if not mu_gamma > xi / 4:
        raise HypothesisViolated("mu(Z_Gamma) <= xi/4", mu_gamma, xi / 4)
    p_ref = sets.v0.parity
    g0 = sets.gamma.with_(parity=p_ref, name="Gamma∩V0")
    g1 = sets.gamma.with_(parity=1 - p_ref, name="Gamma∩V1")
    m0, m1 = block.measure(g0), block.measure(g1)
    measures = {"Gamma": mu_gamma, "Gamma∩V0": m0, "Gamma∩V1": m1}
    if m0 > xi / 16:
        E = [g0]
        case = "I"
    else:
        # flip the head coordinate between 0 and nonzero: parity flips and
        # the statistic moves by exactly (I+1) log q
        step = ctx.I + 1
        b11 = sets.gamma.shifted(step, "B11").with_(head=1, parity=p_ref)
        b00 = sets.gamma.shifted(-step, "B00").with_(head=0, parity=p_ref)
        E = [b00, b11]
        case = "II"
    mu_E = block.measure_union(E)
    measures["E"] = mu_E
    contained = all(p.within(sets.psi, ctx.q) and p.parity == p_ref for p in E)
    if not mu_E > xi / 16 or not contained:
        raise CaseSplitFailed(f"case {case} produced no admissible E", measures)
    return CaseSplit(case, E, mu_E, measures, contained)


# --------------------------------------------------------------------------
# Replay


class _Stop(Exception):
    def __init__(self, label: str, error: str, message: str):
        super().__init__(message)
        self.label, self.error = label, error


def _gate(report: ProofReport, rec: Record, error: type[OdometerError] | None = None) -> Record:
    report.add(rec)
    if not rec.passed:
        name = (error or OdometerError).__name__
        raise _Stop(rec.label, name, f"stage {rec.label} failed")
    return rec


def _outside_union(ctx: ProofContext, idx: Iterable[int]) -> Fraction:
    reg, frame = ctx.region, ctx.frame
    boxes = [reg.outside_part(reg.defects[i], frame.first, frame.last) for i in sorted(set(idx))]
    if not boxes:
        return Fraction(0)
    return union_measure(boxes, reg.schedule(frame.last))


def replay_proof(ctx: ProofContext) -> ProofReport:
    report = ProofReport(context=ctx.echo())
    try:
        _replay(ctx, report)
    except _Stop as stop:
        report.failure = {"stage": stop.label, "error": stop.error, "message": str(stop)}
    except OdometerError as exc:
        stage = report.records[-1].label if report.records else "start"
        report.failure = {"stage": stage, "error": type(exc).__name__, "message": str(exc)}
    return report


def _replay(ctx: ProofContext, report: ProofReport) -> None:
    q, xi, I = ctx.q, ctx.xi, ctx.I
    region, block, frame = ctx.region, ctx.block, ctx.frame
    mu_u = region.mu_u()
    mu_B = region.measure()

    ok, lhs, rhs = region.density_hypothesis(xi)
    _gate(report, Record("density", lhs, rhs, EXACT, ok), HypothesisViolated)

    sc = ctx.scale
    if sc is None:
        _gate(report, Record("(2)", None, 1 - 2 * ctx.beta, EXACT, False,
                             detail={"error": ctx.scale_error}), NoFeasibleScale)
    flags = sc.flags
    _gate(report, Record("(2)", sc.p_interior, 1 - 2 * sc.beta, EXACT, flags["(2)"]), NoFeasibleScale)
    _gate(report, Record("(3)", sc.p_upper, sc.beta, EXACT, flags["(3)"]), NoFeasibleScale)
    _gate(report, Record("(4)", sc.p_lower, sc.beta, EXACT, flags["(4)"]), NoFeasibleScale)
    p6 = ctx.law.prob_between(-sc.t, sc.t)
    _gate(report, Record("(6)", p6, xi, EXACT, p6 >= xi))
    wm = window_mass(ctx.law, sc.t, ctx.rho)
    _gate(report, Record("(7)", wm, xi / 3, EXACT, wm >= xi / 3, detail={"rho": ctx.rho}), WindowMassTooSmall)

    M = ctx.M
    lhs7 = mpmath.exp(mpmath.mpf(M.numerator) / M.denominator - 2)
    rhs7 = (I + 1) * mpmath.log(q)
    ok, border = guarded_gt(lhs7, rhs7)
    _gate(report, Record("(7trei)", lhs7, rhs7, GUARDED, ok and M > 1, border, {"M": M}))

    b_mp = lv_mp(ctx.b, q)
    rhs8 = mpmath.exp(mpmath.mpf(M.numerator) / M.denominator + 1)
    ok, border = guarded_gt(b_mp, rhs8)
    _gate(report, Record("(8)", b_mp, rhs8, GUARDED, ok, border, {"b": ctx.b}), ScaleTooSmall)

    # the literal right side is negative; the strengthened one bounds the
    # shift between block and full centering
    strong = LogValue(4 * I, 2 * I * (I + 1))
    literal = -4 * sum((Fraction(1, 2 * q**j) for j in range(1, I + 1)), Fraction(0))
    _gate(report, Record("(9)", ctx.b, strong, EXACT, ctx.b.compare(strong, q) > 0,
                         detail={"literal_rhs": literal, "literal_pass": True}))

    sets = gamma_sets(ctx)
    mu_gamma = sets.measures["Gamma"]
    _gate(report, Record("(10)", mu_gamma, xi / 4, EXACT, mu_gamma > xi / 4), WindowMassTooSmall)
    mm, mp_ = sets.measures["Gamma-"], sets.measures["Gamma+"]
    _gate(report, Record("(11)", [mm, mp_], [xi, xi], EXACT, mm >= xi and mp_ >= xi), HypothesisViolated)

    ext = select_extremes(ctx, sets)
    lem = [ext.lemma_minus, ext.lemma_plus]
    _gate(report, Record("(12)", [l.mu_E0 for l in lem], [l.mu_E / 2 for l in lem], EXACT,
                         all(l.certificate for l in lem),
                         detail={"v-": list(ext.v_minus), "v+": list(ext.v_plus)}), HypothesisViolated)
    ref = ext.v_plus if ctx.mirrored else ext.v_minus
    report.context["v-"] = list(ext.v_minus)
    report.context["v+"] = list(ext.v_plus)
    # both sides divided by mu(Z_u) mu(Z_v) > 0
    dens = [1 - region.block_loss(v, frame.first) for v in (ext.v_minus, ext.v_plus)]
    _gate(report, Record("(13)", dens, [Fraction(3, 4)] * 2, EXACT, all(d > Fraction(3, 4) for d in dens),
                         detail={"scale": "relative to mu(Z_u) mu(Z_v)"}), HypothesisViolated)

    stat_ref = frame.stat_of(ref)
    mag = -stat_ref if not ctx.mirrored else stat_ref  # |stat(ref)| on the tail side
    nonzero = mag.sign(q) > 0
    s = mpmath.log(lv_mp(mag, q)) if nonzero else None
    report.context["s"] = s
    _gate(report, Record("(15)", s, None, GUARDED, nonzero, detail={"stat_ref": stat_ref}))
    three_quarter_b = LogValue(0, Fraction(3, 4) * ctx.t)
    _gate(report, Record("(16)", mag, three_quarter_b, EXACT, mag.compare(three_quarter_b, q) >= 0))
    ok, border = guarded_gt(s, mpmath.mpf(M.numerator) / M.denominator)
    _gate(report, Record("(17)", s, M, GUARDED, ok, border))

    sets = gamma_sets(ctx, ref)
    try:
        split = case_split(ctx, ref, sets)
    except CaseSplitFailed as exc:
        _gate(report, Record("(18bis)", exc.measures.get("E"), xi / 16, EXACT, False,
                             detail={"measures": exc.measures}), CaseSplitFailed)
    _gate(report, Record("(18bis)", split.mu_E, xi / 16, EXACT, split.mu_E > xi / 16,
                         detail={"case": split.case, "measures": split.measures}), CaseSplitFailed)
    _gate(report, Record("(18trei)", [p.to_json() for p in split.E], sets.psi.to_json(), EXACT,
                         split.contained, detail={"parity": sets.v0.parity}), CaseSplitFailed)

    lem = lemma_refine_law(xi, block, split.E)
    _gate(report, Record("(18)", lem.mu_E0, [lem.mu_E / 2, xi / 32], EXACT,
                         lem.certificate and lem.mu_E0 > xi / 32), HypothesisViolated)

    ref_cell = block.cell_of(ref)
    worst = None
    lower = Fraction(0)
    touched = []
    for cell in lem.E0:
        mass = sum((block.cell_measure(cell, p) for p in split.E), Fraction(0))
        if not mass:
            continue
        rel = 1 - _outside_union(ctx, cell.defects | ref_cell.defects)
        worst = rel if worst is None else min(worst, rel)
        lower += mu_u * mass * rel
        touched.append(cell)
    _gate(report, Record("(19)", worst, Fraction(1, 2), EXACT, worst is not None and worst > Fraction(1, 2),
                         detail={"cells": len(touched)}))

    m_ref = frame.m_of(ref)
    sign = -1 if ctx.mirrored else 1
    values = set()
    for cell in touched:
        for p in split.E:
            values.update(block.m_values(cell, p))
    delta = ctx.delta
    lo_log = hi_log = None
    ok21, border21 = True, False
    with mpmath.workdps(DIGITS):
        logq = mpmath.log(q)
        for m in sorted(values):
            d = sign * (m - m_ref)
            if d <= 0:
                ok21 = False
                continue
            lg = mpmath.log(d * logq)
            lo_log = lg if lo_log is None else min(lo_log, lg)
            hi_log = lg if hi_log is None else max(hi_log, lg)
            a, ba = guarded_gt(lg, s - delta)
            c, bc = guarded_gt(s + delta, lg)
            ok21 = ok21 and a and c
            border21 = border21 or ba or bc
    _gate(report, Record("(21)", [lo_log, hi_log], [s - delta, s + delta], GUARDED,
                         ok21 and not border21 and bool(values), border21,
                         {"distinct_sums": len(values)}))

    mid19 = Fraction(1, 2) * mu_u * lem.mu_E0
    _gate(report, Record("(20)", lower, mid19, EXACT, lower > mid19,
                         detail={"inclusion": "E0 ⊆ V0 with window (21)"}))

    half_bound = Fraction(1, 2) * mu_u * xi / 32
    target = ctx.eta * mu_B
    ok = lower > half_bound and half_bound >= target and lower >= target
    _gate(report, Record("final", lower, target, EXACT, ok,
                         detail={"half_mu_u_xi_32": half_bound, "mu_B": mu_B}))


# --------------------------------------------------------------------------
# Parameter search


def prescreen(q: int, beta, region: Region, ik: int, rho=None, M=None,
              centering_mode: str = "block") -> dict:
    """Cheap stages up to the Gamma-window mass check for one candidate depth."""
    try:
        ctx = ProofContext.build(q, beta, region, ik, rho=rho, M=M, centering_mode=centering_mode)
    except OdometerError as exc:
        return {"i_k": ik, "ok": False, "stage": "build", "error": type(exc).__name__}
    if ctx.scale is None or not ctx.scale.ok:
        return {"i_k": ik, "ok": False, "stage": "(2)"}
    ok8, _ = guarded_gt(lv_mp(ctx.b, q), mpmath.exp(mpmath.mpf(ctx.M.numerator) / ctx.M.denominator + 1))
    if not ok8:
        return {"i_k": ik, "ok": False, "stage": "(8)"}
    if not ctx.b.compare(LogValue(4 * ctx.I, 2 * ctx.I * (ctx.I + 1)), q) > 0:
        return {"i_k": ik, "ok": False, "stage": "(9)"}
    if not ctx.block.measure(gamma_sets(ctx).gamma) > ctx.xi / 4:
        return {"i_k": ik, "ok": False, "stage": "(10)"}
    return {"i_k": ik, "ok": True, "stage": None}


def auto_search(q: int, beta, region: Region, candidates: Sequence[int], rho=None, M=None,
                centering_mode: str = "block", mapper: Callable | None = None,
                chunk: int = 1) -> tuple[ProofReport | None, list[dict]]:
    """First candidate depth whose full replay passes.

    ``mapper(fn, items)`` may evaluate prescreens in parallel; results are
    consumed in candidate order so the outcome never depends on it.
    """
    mapper = mapper or (lambda fn, items: list(map(fn, items)))
    log: list[dict] = []
    last = None
    cands = list(candidates)
    for start in range(0, len(cands), max(chunk, 1)):
        batch = cands[start : start + max(chunk, 1)]
        results = mapper(_Prescreen(q, beta, region, rho, M, centering_mode), batch)
        for res in results:
            log.append(res)
            if not res["ok"]:
                continue
            ctx = ProofContext.build(q, beta, region, res["i_k"], rho=rho, M=M, centering_mode=centering_mode)
            last = replay_proof(ctx)
            res["replay"] = "pass" if last.passed else last.failure["stage"]
            if last.passed:
                return last, log
    return last, log


@dataclass(frozen=True)
class _Prescreen:
    q: int
    beta: Fraction
    region: Region
    rho: object
    M: object
    centering_mode: str

    def __call__(self, ik: int) -> dict:
        return prescreen(self.q, self.beta, self.region, ik, self.rho, self.M, self.centering_mode)


def default_region(q: int, u: Sequence[int] = (0,)) -> Region:
    """``Z_u`` minus two overlapping thin cylinders of total relative mass < 1/512.

    The first kills density 3/4 on block words starting with eight zeros; the
    second only dents blocks starting with three zeros, so transports still
    lose some mass in the tail.
    """
    u = tuple(u)
    first = len(u) + 1
    zero = SymbolSet.zero()
    a = {j: zero for j in range(first, first + 8)}
    a.update({1000: zero, 1001: zero})
    b = {j: zero for j in range(first, first + 3)}
    b.update({j: zero for j in range(1002, 1010)})
    return Region.build(q, u, [Box.make(a), Box.make(b)])


# --------------------------------------------------------------------------
# Density point search


def _atoms_at(A: Cylinder, j: int, q: int) -> list[SymbolSet]:
    parts = [SymbolSet.full(q, j)]
    for box in A.boxes:
        s = box.as_dict().get(j)
        if s is None:
            continue
        nxt = []
        for a in parts:
            for piece in (a & s, a - s):
                if piece:
                    nxt.append(piece)
        parts = nxt
    return sorted(parts, key=lambda a: a.min)


def density_cylinder(A: Cylinder, xi, max_depth: int, q: int) -> tuple[tuple[int, ...], Region]:
    """Shortest, then lexicographically smallest, ``u`` where ``A`` is (1 - xi/128)-dense."""
    xi = Fraction(xi)
    threshold = 1 - xi / 128
    boxes = [] if A.empty else A.disjoint_boxes(q)
    depth_all = max([j for b in boxes for j in b.coords] + [max_depth, 1])
    sch = BaseSchedule(q, depth_all)
    best = Fraction(0)
    for d in range(0, max_depth + 1):
        atoms = [_atoms_at(A, j, q) for j in range(1, d + 1)]
        for combo in itertools.product(*atoms):
            u = tuple(a.min for a in combo)
            dens = Fraction(0)
            for box in boxes:
                pins = box.as_dict()
                if all(u[j - 1] in s for j, s in pins.items() if j <= d):
                    dens += box.drop(range(1, d + 1)).measure(sch)
            best = max(best, dens)
            if dens > threshold:
                return u, Region.from_cylinder(q, u, A)
    raise NotFound(f"no prefix of depth <= {max_depth} is dense enough", best_density=best)
