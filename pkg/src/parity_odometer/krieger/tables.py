"""Exact law of the weighted parity statistic and the scaling data b(i), c(i).

Under the product measure each level contributes ``xi_j = parity(x_j)``, an
unbiased bit, so ``-sum log mu_j(x_j) = n log 2 + m log q`` with
``m = sum j * xi_j``. Everything here reduces to the integer table
``N(m, p)`` counting bit vectors by weighted sum ``m`` and popcount parity
``p``.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from ..errors import BudgetExceeded, NoFeasibleScale, WindowMassTooSmall
from ..measure import LogValue

MAX_TABLE_CELLS = 5 * 10**7
BRUTE_LIMIT = 24


@dataclass(frozen=True)
class WeightedParityTable:
    """``counts[p][m]`` = number of bit vectors over ``coords`` with weighted
    sum ``m`` and popcount parity ``p``."""

    coords: tuple[int, ...]
    counts: tuple[tuple[int, ...], tuple[int, ...]]

    @property
    def l(self) -> int:
        return self.coords[0] if self.coords else 0

    @property
    def r(self) -> int:
        return self.coords[-1] if self.coords else -1

    @property
    def size(self) -> int:
        return len(self.coords)

    @property
    def max_m(self) -> int:
        return len(self.counts[0]) - 1

    @property
    def denominator(self) -> int:
        return 2 ** len(self.coords)

    def count(self, m: int, p: int) -> int:
        row = self.counts[p % 2]
        return row[m] if 0 <= m < len(row) else 0

    def total(self) -> int:
        return sum(self.counts[0]) + sum(self.counts[1])

    def items(self) -> Iterable[tuple[int, int, int]]:
        """Nonzero ``(m, p, count)`` triples sorted by ``(m, p)``."""
        for m in range(self.max_m + 1):
            for p in (0, 1):
                c = self.counts[p][m]
                if c:
                    yield m, p, c

    def as_dict(self) -> dict[tuple[int, int], int]:
        return {(m, p): c for m, p, c in self.items()}

    def marginal(self) -> list[int]:
        return [a + b for a, b in zip(*self.counts)]

    def probability(self, m: int, p: int | None = None) -> Fraction:
        c = self.count(m, 0) + self.count(m, 1) if p is None else self.count(m, p)
        return Fraction(c, self.denominator)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightedParityTable):
            return NotImplemented
        return self.coords == other.coords and self.as_dict() == other.as_dict()

    def __hash__(self):
        return hash(self.coords)


def parity_dp(coords: Sequence[int]) -> tuple[list[int], list[int]]:
    """Subset-sum DP split by parity over arbitrary positive weights."""
    size = sum(coords) + 1
    if 2 * size > MAX_TABLE_CELLS:
        raise BudgetExceeded(f"table with {size} sums exceeds memory budget")
    even = np.zeros(size, dtype=object)
    odd = np.zeros(size, dtype=object)
    even[0] = 1
    top = 0
    for j in coords:
        # shift by j: choosing xi_j = 1 adds j and flips parity
        new_even = even.copy()
        new_odd = odd.copy()
        new_even[j : top + j + 1] += odd[: top + 1]
        new_odd[j : top + j + 1] += even[: top + 1]
        even, odd = new_even, new_odd
        top += j
    return [int(v) for v in even], [int(v) for v in odd]


def build_table(l: int, r: int) -> WeightedParityTable:
    if not 1 <= l <= r:
        raise ValueError(f"need 1 <= l <= r, got [{l}, {r}]")
    coords = tuple(range(l, r + 1))
    even, odd = parity_dp(coords)
    return WeightedParityTable(coords, (tuple(even), tuple(odd)))


def table_over(coords: Sequence[int]) -> WeightedParityTable:
    coords = tuple(sorted(coords))
    even, odd = parity_dp(coords)
    return WeightedParityTable(coords, (tuple(even), tuple(odd)))


def brute_table(l: int, r: int) -> WeightedParityTable:
    """Same contract as :func:`build_table` by explicit subset enumeration."""
    if not 1 <= l <= r:
        raise ValueError(f"need 1 <= l <= r, got [{l}, {r}]")
    n = r - l + 1
    if n > BRUTE_LIMIT:
        raise BudgetExceeded(f"brute force over 2^{n} subsets refused (limit 2^{BRUTE_LIMIT})")
    weights = list(range(l, r + 1))
    size = sum(weights) + 1
    even = [0] * size
    odd = [0] * size
    sums = [0] * (1 << n)
    pops = [0] * (1 << n)
    even[0] = 1
    for mask in range(1, 1 << n):
        low = mask & -mask
        rest = mask ^ low
        k = low.bit_length() - 1
        sums[mask] = sums[rest] + weights[k]
        pops[mask] = pops[rest] ^ 1
        if pops[mask]:
            odd[sums[mask]] += 1
        else:
            even[sums[mask]] += 1
    return WeightedParityTable(tuple(weights), (tuple(even), tuple(odd)))


# --------------------------------------------------------------------------
# Centering and scaling


def centering(q: int, i: int) -> LogValue:
    """c(i) = -E[sum_{j<=i} a_j] = -i log 2 - (sum_{j<=i} j / 2) log q."""
    if i < 0:
        raise ValueError("i must be >= 0")
    return LogValue(-i, Fraction(-i * (i + 1), 4))


@dataclass
class CenteredLaw:
    """Law of ``c(i) + sum_{j<=i} a_j = (m - i(i+1)/4) log q`` over ``m``.

    ``doubled`` holds the sorted values ``2m - i(i+1)/2`` (twice the centered
    coefficient of log q, an integer) with their counts.
    """

    i: int
    table: WeightedParityTable | None
    doubled: list[int] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)
    cumulative: list[int] = field(default_factory=list)

    @classmethod
    def build(cls, i: int, table: WeightedParityTable | None = None) -> CenteredLaw:
        if i == 0:
            law = cls(0, None, [0], [1])
        else:
            table = table or build_table(1, i)
            T = i * (i + 1) // 2
            marg = table.marginal()
            doubled, counts = [], []
            for m, c in enumerate(marg):
                if c:
                    doubled.append(2 * m - T)
                    counts.append(c)
            law = cls(i, table, doubled, counts)
        acc = 0
        for c in law.counts:
            acc += c
            law.cumulative.append(acc)
        return law

    @property
    def total(self) -> int:
        return 2**self.i

    def count_le(self, twice: Fraction) -> int:
        """Number of outcomes with doubled value <= ``twice``."""
        k = bisect_right(self.doubled, twice)
        return self.cumulative[k - 1] if k else 0

    def count_lt(self, twice: Fraction) -> int:
        k = bisect_left(self.doubled, twice)
        return self.cumulative[k - 1] if k else 0

    def prob_between(self, lo: Fraction, hi: Fraction, open_: bool = False) -> Fraction:
        """P(lo <= X/log q <= hi), or the open interval when ``open_``."""
        if open_:
            c = self.count_lt(2 * hi) - self.count_le(2 * lo)
        else:
            c = self.count_le(2 * hi) - self.count_lt(2 * lo)
        return Fraction(max(c, 0), self.total)

    def prob_ge(self, t: Fraction) -> Fraction:
        return Fraction(self.total - self.count_lt(2 * t), self.total)

    def prob_le(self, t: Fraction) -> Fraction:
        return Fraction(self.count_le(2 * t), self.total)


@dataclass(frozen=True)
class KriegerScaling:
    q: int
    i: int
    beta: Fraction
    c: LogValue
    t: Fraction  # b(i) = t * log q
    p_interior: Fraction
    p_upper: Fraction
    p_lower: Fraction

    @property
    def b(self) -> LogValue:
        return LogValue(0, self.t)

    @property
    def b_real(self) -> float:
        return float(self.t) * math.log(self.q)

    @property
    def flags(self) -> dict[str, bool]:
        return {
            "(2)": self.p_interior >= 1 - 2 * self.beta,
            "(3)": self.p_upper >= self.beta,
            "(4)": self.p_lower >= self.beta,
        }

    @property
    def ok(self) -> bool:
        return all(self.flags.values())


def _check_beta(beta) -> Fraction:
    beta = Fraction(beta)
    if beta <= 0:
        raise ValueError("beta must be positive")
    return beta


def scaling(q: int, i: int, beta, law: CenteredLaw | None = None) -> KriegerScaling:
    """Largest half-lattice ``b = t log q`` meeting the three probability bounds.

    The interior bound P(|X| <= b) >= 1 - 2 beta improves with t and both tail
    bounds degrade, so the feasible t form an interval; its top is returned.
    Raises :class:`NoFeasibleScale` when the interval is empty.
    """
    beta = _check_beta(beta)
    law = law or CenteredLaw.build(i)
    c = centering(q, i)
    feasible = None
    best_partial = None
    T2 = max(abs(d) for d in law.doubled)  # largest |2X/log q|
    for twice in range(1, T2 + 1):
        t = Fraction(twice, 2)
        interior = law.prob_between(-t, t)
        upper = law.prob_ge(t)
        lower = law.prob_le(-t)
        sc = KriegerScaling(q, i, beta, c, t, interior, upper, lower)
        if sc.ok:
            feasible = sc
        elif best_partial is None or sum(sc.flags.values()) > sum(best_partial.flags.values()):
            best_partial = sc
        if upper < beta and lower < beta:
            break
    if feasible is None:
        diag = {}
        if best_partial is not None:
            diag = {"t": best_partial.t, "flags": best_partial.flags,
                    "p": (best_partial.p_interior, best_partial.p_upper, best_partial.p_lower)}
        raise NoFeasibleScale(f"no b(i) meets the interior and tail bounds at i={i}, beta={beta}", diag)
    return feasible


def xi_of(beta) -> Fraction:
    beta = Fraction(beta)
    return min(beta, 1 - 2 * beta)


RHO_GRID = tuple(Fraction(k, 8) for k in range(-8, 9))


@dataclass(frozen=True)
class ScaleChoice:
    i: int
    scaling: KriegerScaling
    rho: Fraction
    mass: Fraction  # exact mass of [rho - 1/2, rho + 1/2] for X / b
    threshold: Fraction  # xi / 3

    @property
    def ok(self) -> bool:
        return self.mass >= self.threshold


def window_mass(law: CenteredLaw, t: Fraction, rho: Fraction) -> Fraction:
    """Mass of the normalized statistic X/b in the closed window around rho.

    Closed to match the Gamma window it feeds; on the lattice the open and
    closed windows differ only by boundary atoms.
    """
    return law.prob_between((rho - Fraction(1, 2)) * t, (rho + Fraction(1, 2)) * t)


def choose_rho(law: CenteredLaw, t: Fraction) -> tuple[Fraction, Fraction]:
    """Grid rho in [-1, 1] maximizing window mass; ties prefer small |rho|, then rho >= 0."""
    best = None
    for rho in RHO_GRID:
        mass = window_mass(law, t, rho)
        key = (mass, -abs(rho), rho >= 0)
        if best is None or key > best[0]:
            best = (key, rho, mass)
    return best[1], best[2]


def choose_scale_sequence(q: int, beta, ks: Sequence[int], strict: bool = True) -> list[ScaleChoice]:
    """Scale data along increasing depths with a window centre for each.

    Raises :class:`WindowMassTooSmall` for the first depth where no grid rho
    reaches mass xi/3, and ``ValueError`` if b fails to increase strictly.
    """
    beta = Fraction(beta)
    xi = xi_of(beta)
    out = []
    for i in ks:
        law = CenteredLaw.build(i)
        sc = scaling(q, i, beta, law)
        rho, mass = choose_rho(law, sc.t)
        choice = ScaleChoice(i, sc, rho, mass, xi / 3)
        if not choice.ok:
            raise WindowMassTooSmall(
                f"no grid rho reaches xi/3 at i={i}", best_mass=mass, best_rho=rho
            )
        out.append(choice)
    if strict:
        for a, b in zip(out, out[1:]):
            if not (a.i < b.i and a.scaling.t < b.scaling.t):
                raise ValueError(f"b(i) not strictly increasing between i={a.i} and i={b.i}")
    return out


# --------------------------------------------------------------------------
# Gaussian comparison


def ks_gaussian(q: int, i: int) -> float:
    """Kolmogorov-Smirnov distance of the standardized exact law to N(0, 1).

    The standardization divides by the exact standard deviation, so the value
    does not depend on ``q``.
    """
    if i < 2:
        raise ValueError("need i >= 2")
    law = CenteredLaw.build(i)
    # X / log q = doubled / 2, Var = sum j^2 / 4
    sigma = math.sqrt(sum(j * j for j in range(1, i + 1)) / 4.0)
    total = float(2**i)
    worst = 0.0
    below = 0
    for d, c in zip(law.doubled, law.counts):
        z = (d / 2.0) / sigma
        phi = 0.5 * math.erfc(-z / math.sqrt(2.0))
        left = below / total
        below += c
        right = below / total
        worst = max(worst, abs(left - phi), abs(right - phi))
    return worst
