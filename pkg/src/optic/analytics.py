"""Closed-form model of how many distinct protection sets a router holds.

Every prefix is announced by ``b`` of ``B`` gateways, each carrying a policy
weight drawn uniformly from 1..ps (lower is preferred). The protection set
of a prefix is the set of minimal-weight gateways when at least two tie,
otherwise the minimum plus the second-minimal tier (``plain``) or plus a
single second-minimal gateway (``optimized``). Sets of a given size n are
treated as balls thrown uniformly into C(B, n) bins.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ParameterError


class Variant(str, enum.Enum):
    PLAIN = "plain"
    OPTIMIZED = "optimized"


def _variant(v) -> Variant:
    try:
        return Variant(v)
    except ValueError:
        raise ParameterError(f"unknown variant {v!r}") from None


def p_n(b: int, ps: int, n: int, variant=Variant.PLAIN) -> float:
    """Probability that a prefix's protection set has exactly n gateways."""
    variant = _variant(variant)
    if ps < 1:
        raise ParameterError("ps must be >= 1")
    if not 2 <= n <= b:
        raise ParameterError(f"set size must satisfy 2 <= n <= b, got n={n}, b={b}")
    total = 0.0
    for i in range(1, ps + 1):
        rest = 1.0 - i / ps
        if variant is Variant.PLAIN:
            total += ps**-n * rest ** (b - n) * ((i - 1) * b * math.comb(b - 1, n - 1) + math.comb(b, n))
        elif n == 2:
            total += (b / ps) * rest ** (b - 1) + math.comb(b, 2) * ps**-2 * rest ** (b - 2)
        else:
            total += math.comb(b, n) * ps**-n * rest ** (b - n)
    # rounding can push a certain event one ulp past 1
    return min(max(total, 0.0), 1.0)


def size_distribution(b: int, ps: int, variant=Variant.PLAIN) -> dict[int, float]:
    return {n: p_n(b, ps, n, variant) for n in range(2, b + 1)}


def occupancy(bins: int, balls: float) -> float:
    """Chance that a given bin is hit when ``balls`` land uniformly in
    ``bins`` bins, computed in log space so huge bin counts stay exact."""
    if bins <= 0 or balls <= 0:
        return 0.0
    if bins == 1:
        return 1.0
    return -math.expm1(balls * math.log1p(-1.0 / bins))


def prob_set_occupied(B: int, P: float, ps: int, n: int, variant=Variant.PLAIN, b: int | None = None) -> float:
    """Probability that one particular n-gateway set protects some prefix.
    ``b`` defaults to B (every gateway announces every prefix)."""
    b = B if b is None else b
    if n > B:
        raise ParameterError(f"n={n} exceeds B={B}")
    return occupancy(math.comb(B, n), p_n(b, ps, n, variant) * P)


class DistinctEstimate(NamedTuple):
    total: float
    by_size: dict[int, float]


def expected_distinct(B: int, P: float, ps: int, b: int, variant=Variant.PLAIN) -> DistinctEstimate:
    """Expected number of distinct protection sets, with the share of each size."""
    if b > B:
        raise ParameterError(f"b={b} exceeds B={B}")
    if b < 2:
        raise ParameterError("b must be >= 2")
    by_size = {}
    for n in range(2, b + 1):
        by_size[n] = math.comb(B, n) * prob_set_occupied(B, P, ps, n, variant, b)
    return DistinctEstimate(math.fsum(by_size.values()), by_size)


@dataclass(frozen=True)
class ClassBreakdown:
    """Gateways and prefixes split into local-pref classes; a set never
    mixes classes. Prefix counts may be fractional (ratio-derived)."""

    gateways: tuple[int, ...]
    prefixes: tuple[float, ...]
    ps: int = 5
    b: int = 5

    def __post_init__(self):
        object.__setattr__(self, "gateways", tuple(self.gateways))
        object.__setattr__(self, "prefixes", tuple(self.prefixes))
        if len(self.gateways) != len(self.prefixes):
            raise ParameterError("gateway and prefix class lists differ in length")
        if any(g < 0 for g in self.gateways) or any(p < 0 for p in self.prefixes):
            raise ParameterError("class sizes must be non-negative")
        if self.ps < 1 or self.b < 2:
            raise ParameterError("need ps >= 1 and b >= 2")

    @property
    def B(self) -> int:
        return sum(self.gateways)

    @property
    def P(self) -> float:
        return sum(self.prefixes)

    @classmethod
    def single(cls, B: int, P: float, ps: int = 5, b: int = 5) -> "ClassBreakdown":
        return cls((B,), (P,), ps, b)

    @classmethod
    def from_delta(cls, B: int, delta: float, P: float = 800_000, ps: int = 5, b: int = 5) -> "ClassBreakdown":
        """Three classes growing by ``delta`` in gateways and shrinking by
        ``delta`` in prefixes. Gateway counts are rounded, the last class
        absorbing the remainder so they still sum to B."""
        if delta < 1:
            raise ParameterError("delta must be >= 1")
        b1 = B / (1 + delta + delta**2)
        g1, g2 = round(b1), round(b1 * delta)
        p1 = P / (1 + 1 / delta + 1 / delta**2)
        return cls((g1, g2, B - g1 - g2), (p1, p1 / delta, p1 / delta**2), ps, b)

    def classes(self):
        return zip(self.gateways, self.prefixes)


def class_expected(breakdown: ClassBreakdown, variant=Variant.OPTIMIZED) -> DistinctEstimate:
    by_size: dict[int, float] = {}
    for B_i, P_i in breakdown.classes():
        if P_i <= 0 or B_i < 2:
            continue
        est = expected_distinct(B_i, P_i, breakdown.ps, min(breakdown.b, B_i), variant)
        for n, v in est.by_size.items():
            by_size[n] = by_size.get(n, 0.0) + v
    by_size = dict(sorted(by_size.items()))
    return DistinctEstimate(math.fsum(by_size.values()), by_size)


def lower_bound(breakdown: ClassBreakdown) -> float:
    """Expected distinct count if every prefix used a uniformly random
    gateway pair of its class."""
    total = []
    for B_i, P_i in breakdown.classes():
        if P_i <= 0:
            continue
        if B_i < 2:
            raise ParameterError(f"a class with {P_i} prefixes needs at least 2 gateways, has {B_i}")
        pairs = math.comb(B_i, 2)
        total.append(pairs * occupancy(pairs, P_i))
    return math.fsum(total)


def median_of(by_size: dict[int, float]) -> int:
    """Weighted median of set sizes, lower median on an exact split."""
    total = math.fsum(by_size.values())
    if total <= 0:
        raise ParameterError("no sets to take a median of")
    acc = 0.0
    for n in sorted(by_size):
        acc += by_size[n]
        if acc >= total / 2:
            return n
    return max(by_size)


def median_set_size(model: ClassBreakdown, variant=Variant.OPTIMIZED) -> int:
    return median_of(class_expected(model, variant).by_size)


# -- reference class break-downs ----------------------------------------


@dataclass(frozen=True)
class ReferenceRow:
    name: str
    breakdown: ClassBreakdown
    distinct: int
    lower: int
    median: int


REFERENCE_ROWS = {
    r.name: r
    for r in (
        ReferenceRow("stub", ClassBreakdown((10, 20, 0), (700_000, 100_000, 0)), 3475, 235, 4),
        ReferenceRow("tier4", ClassBreakdown((10, 25, 25), (500_000, 200_000, 100_000)), 10589, 645, 3),
        ReferenceRow("tier3", ClassBreakdown((10, 50, 100), (500_000, 200_000, 100_000)), 33610, 6219, 3),
        ReferenceRow("large-tier3", ClassBreakdown((10, 100, 500), (500_000, 200_000, 100_000)), 101997, 73781, 2),
        ReferenceRow("tier2", ClassBreakdown((5, 500, 2000), (500_000, 200_000, 100_000)), 215429, 197194, 2),
        ReferenceRow("tier1", ClassBreakdown((0, 50, 5000), (0, 600_000, 200_000)), 228898, 199633, 2),
    )
}


def reference_rows(variant=Variant.OPTIMIZED) -> list[dict]:
    rows = []
    for ref in REFERENCE_ROWS.values():
        est = class_expected(ref.breakdown, variant)
        lb = lower_bound(ref.breakdown)
        rows.append(
            {
                "name": ref.name,
                "distinct": est.total,
                "distinct_ref": ref.distinct,
                "distinct_err": abs(est.total - ref.distinct) / ref.distinct,
                "lower": lb,
                "lower_ref": ref.lower,
                "lower_err": abs(lb - ref.lower) / ref.lower,
                "median": median_of(est.by_size),
                "median_ref": ref.median,
            }
        )
    return rows


# -- sweeps -----------------------------------------------------------------

SWEEP_HEADER = ("x", "plain", "optimized", "lower_bound")


def _sweep_row(x, breakdown: ClassBreakdown) -> tuple:
    return (
        x,
        class_expected(breakdown, Variant.PLAIN).total,
        class_expected(breakdown, Variant.OPTIMIZED).total,
        lower_bound(breakdown),
    )


def sweep_delta(B: int, deltas: Iterable[float], P: float = 800_000) -> list[tuple]:
    """Rows of (delta, plain, optimized, lower bound) at fixed gateway count."""
    return [_sweep_row(d, ClassBreakdown.from_delta(B, d, P)) for d in deltas]


def sweep_gateways(Bs: Iterable[int], delta: float = 5, P: float = 800_000) -> list[tuple]:
    """Rows of (B, plain, optimized, lower bound) at fixed class ratio."""
    return [_sweep_row(B, ClassBreakdown.from_delta(B, delta, P)) for B in Bs]


def format_number(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.4f}"


def write_csv(fh, header: Sequence[str], rows: Iterable[Sequence]):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else format_number(v) for v in row])


# -- Monte Carlo -------------------------------------------------------------


@dataclass(frozen=True)
class RandomModelParams:
    B: int
    P: int
    ps: int
    b: int
    classes: tuple[tuple[int, int], ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.ps < 1:
            raise ParameterError("ps must be >= 1")
        if self.b < 1:
            raise ParameterError("b must be >= 1")
        if self.classes:
            if sum(p for _, p in self.classes) != self.P:
                raise ParameterError("class prefix counts must sum to P")
            if sum(g for g, _ in self.classes) != self.B:
                raise ParameterError("class gateway counts must sum to B")
        elif self.b > self.B:
            raise ParameterError("b must not exceed B")

    def class_list(self) -> tuple[tuple[int, int], ...]:
        return self.classes or ((self.B, self.P),)


class MonteCarloResult(NamedTuple):
    mean: float
    stderr: float
    size_freq: dict[int, float]
    samples: int
    counts: tuple[int, ...]


def draw_sets(rng: np.random.Generator, B: int, P: int, ps: int, b: int, variant) -> np.ndarray:
    """One realization of the generative model: a (P, b) array holding, per
    prefix, the sorted gateway ids of its protection set padded with B."""
    variant = _variant(variant)
    gw = np.argsort(rng.random((P, B)), axis=1)[:, :b]
    w = rng.integers(1, ps + 1, size=(P, b))
    is_min = w == w.min(axis=1, keepdims=True)
    tied = is_min.sum(axis=1) >= 2
    w2 = np.where(is_min, ps + 1, w)
    is_second = (w2 == w2.min(axis=1, keepdims=True)) & ~is_min
    if variant is Variant.OPTIMIZED:
        pick = np.where(is_second, rng.random((P, b)), -1.0).argmax(axis=1)
        is_second = np.zeros_like(is_second)
        is_second[np.arange(P), pick] = True
    chosen = np.where(tied[:, None], is_min, is_min | is_second)
    return np.sort(np.where(chosen, gw, B), axis=1)


def monte_carlo_distinct(params: RandomModelParams, trials: int, variant=Variant.PLAIN) -> MonteCarloResult:
    """Sample the generative model ``trials`` times and count distinct sets.

    Trial t uses its own stream seeded from (seed, t), so results do not
    depend on how trials are scheduled. ``size_freq`` is the fraction of
    all sampled prefixes whose set has each size.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    counts = []
    sizes: dict[int, int] = {}
    samples = 0
    for t in range(trials):
        rng = np.random.default_rng([params.seed, t])
        distinct = 0
        for B_i, P_i in params.class_list():
            if P_i == 0:
                continue
            b_i = min(params.b, B_i)
            if b_i < 2:
                raise ParameterError("every populated class needs at least 2 gateways")
            sets = draw_sets(rng, B_i, P_i, params.ps, b_i, variant)
            distinct += len(np.unique(sets, axis=0))
            n, c = np.unique((sets < B_i).sum(axis=1), return_counts=True)
            for k, v in zip(n.tolist(), c.tolist()):
                sizes[k] = sizes.get(k, 0) + v
            samples += P_i
        counts.append(distinct)
    arr = np.asarray(counts, dtype=float)
    stderr = float(arr.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.nan
    freq = {n: sizes[n] / samples for n in sorted(sizes)} if samples else {}
    return MonteCarloResult(float(arr.mean()), stderr, freq, samples, tuple(counts))
