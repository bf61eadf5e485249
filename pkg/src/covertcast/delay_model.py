"""Discrete inter-upload delay distributions and CDF steepness scoring.

Every participating node is modelled by a probability distribution over the
number of hours between its consecutive uploads.  The expected waiting time
along a route is the sum of the per-node waits, so route quality is judged by
convolving the per-node distributions, converting to a CDF, and scoring how
early that CDF climbs to 1: a low score means the probability mass sits at
short delays.

Distributions are kept as dense float arrays over a contiguous integer-hour
support, which makes convolution exact (no quadrature error) and cheap.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DelayDistribution",
    "DelayCdf",
    "DistributionError",
    "NoObservations",
    "BeyondHorizon",
    "convolve",
    "to_cdf",
    "cdf_score",
    "extend_cdf",
    "convolution_route_score",
    "sparse_route_score",
    "estimate_distribution",
]

_SUM_TOL = 1e-9


class DistributionError(ValueError):
    """Raised when an input is not a valid delay distribution or CDF."""


class NoObservations(DistributionError):
    """Raised when a distribution is requested but no delay gaps were seen.

    Callers typically treat the corresponding node as inactive.
    """


class BeyondHorizon(DistributionError):
    """A truncated convolution has no mass inside the horizon; the caller
    should rank the route as worst rather than score it."""


@dataclass(frozen=True)
class DelayDistribution:
    """PDF over inter-upload delay, on contiguous integer-hour bins.

    ``probs[i]`` is the probability of a delay of ``start + i`` hours.
    """

    start: int
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or probs.size == 0:
            raise DistributionError("distribution needs a non-empty 1-D probability array")
        if self.start < 0:
            raise DistributionError(f"delays must be non-negative, got start={self.start}")
        if np.any(probs < 0):
            raise DistributionError("probabilities must be non-negative")
        total = float(probs.sum())
        if abs(total - 1.0) > _SUM_TOL:
            raise DistributionError(f"probabilities sum to {total!r}, expected 1")

    @classmethod
    def from_bins(cls, bins: Iterable[tuple[int, float]]) -> "DelayDistribution":
        """Build from sparse ``(delay_hours, probability)`` pairs.

        Gaps in the support are filled with zero-probability bins so the
        result is contiguous; delays must be distinct.
        """
        pairs = sorted(bins)
        if not pairs:
            raise DistributionError("empty distribution")
        delays = [d for d, _ in pairs]
        if len(set(delays)) != len(delays):
            raise DistributionError("duplicate delay bins")
        start, stop = delays[0], delays[-1]
        probs = np.zeros(stop - start + 1, dtype=np.float64)
        for d, p in pairs:
            probs[d - start] = p
        return cls(start, probs)

    @classmethod
    def delta(cls, delay_hours: int) -> "DelayDistribution":
        """Point mass: the node always waits exactly ``delay_hours``."""
        return cls(delay_hours, np.ones(1))

    def bins(self) -> list[tuple[int, float]]:
        return [(self.start + i, float(p)) for i, p in enumerate(self.probs)]

    def delays(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.probs.size)

    def mean(self) -> float:
        return float(np.dot(self.delays(), self.probs))

    def __len__(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class DelayCdf:
    """Cumulative form of a :class:`DelayDistribution`, same support."""

    start: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise DistributionError("CDF needs a non-empty 1-D value array")
        if np.any(np.diff(values) < -_SUM_TOL):
            raise DistributionError("CDF values must be non-decreasing")
        if abs(float(values[-1]) - 1.0) > _SUM_TOL:
            raise DistributionError(f"final CDF value is {float(values[-1])!r}, expected 1")

    def delays(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.values.size)

    def __len__(self) -> int:
        return self.values.size


def convolve(
    f: DelayDistribution,
    g: DelayDistribution,
    horizon: int | None = None,
) -> DelayDistribution:
    """Distribution of the sum of two independent delays.

    With ``horizon`` set, bins beyond that many hours are dropped and the
    remainder renormalized; routes longer than the message TTL contribute no
    useful tail mass, so truncation bounds the cost of repeated convolution.
    """
    if not isinstance(f, DelayDistribution) or not isinstance(g, DelayDistribution):
        raise DistributionError("convolve expects two DelayDistribution inputs")
    probs = np.convolve(f.probs, g.probs)
    start = f.start + g.start
    if horizon is not None:
        if start > horizon:
            # No mass within the horizon: such a route must rank worst, not
            # collapse to a point mass that would score best.
            raise BeyondHorizon(
                f"support starts at {start}h, past the {horizon}h horizon"
            )
        if start + probs.size - 1 > horizon:
            probs = probs[: horizon - start + 1]
            total = probs.sum()
            if total <= 0:
                raise BeyondHorizon("no probability mass within horizon")
            probs = probs / total
    else:
        # Exact mode: guard against float drift on long supports.
        probs = probs / probs.sum()
    return DelayDistribution(start, probs)


def to_cdf(f: DelayDistribution) -> DelayCdf:
    """Running sum of the PDF over the same support."""
    values = np.cumsum(f.probs)
    values[-1] = 1.0
    return DelayCdf(f.start, values)


def cdf_score(c: DelayCdf) -> float:
    """Steepness score: sum of (1 - P_i) * X_i over the CDF.

    X_i is the delay value of bin i.  A CDF that climbs to 1 early has most
    terms multiplied by zero, so lower scores mean faster routes.
    """
    return float(np.dot(1.0 - c.values, c.delays()))


def extend_cdf(c: DelayCdf, target_len: int) -> DelayCdf:
    """Pad a CDF with trailing ones so scores of unequal supports compare.

    Appended bins contribute (1-1)*X = 0, so the score never changes; the
    padding only aligns supports.
    """
    if target_len < len(c):
        raise DistributionError(
            f"cannot extend CDF of length {len(c)} to shorter length {target_len}"
        )
    if target_len == len(c):
        return c
    values = np.concatenate([c.values, np.ones(target_len - len(c))])
    return DelayCdf(c.start, values)


def convolution_route_score(
    path_pdfs: Sequence[DelayDistribution],
    horizon: int | None = None,
) -> float:
    """Score a route by convolving every node's delay PDF along it.

    Equivalent to ``cdf_score(to_cdf(f1 * f2 * ... * fk))``; convolution
    commutes, so the fold order is irrelevant.
    """
    if not path_pdfs:
        raise DistributionError("route score needs at least one distribution")
    acc = path_pdfs[0]
    for pdf in path_pdfs[1:]:
        acc = convolve(acc, pdf, horizon=horizon)
    return cdf_score(to_cdf(acc))


def sparse_route_score(
    bins_list: Sequence[tuple[Sequence[int], Sequence[float]]],
    horizon: int | None = None,
) -> float:
    """:func:`convolution_route_score` over sparse (delays, probs) inputs.

    Distributions with few distinct delays convolve as small outcome sums,
    and the score only needs the survival function's step points: every
    integer x in an interval of constant survival S contributes S*x, an
    arithmetic series.  Exactly matches the dense computation, without
    building dense supports.
    """
    if not bins_list:
        raise DistributionError("route score needs at least one distribution")
    terms = {0: 1.0}
    min_sum = 0
    for delays, probs in bins_list:
        if len(delays) == 0:
            raise DistributionError("empty distribution in route")
        min_sum += min(delays)
        if horizon is not None and min_sum > horizon:
            raise BeyondHorizon(
                f"fastest outcome {min_sum}h exceeds the {horizon}h horizon"
            )
        nxt: dict[int, float] = {}
        for total, mass in terms.items():
            for d, p in zip(delays, probs):
                s = total + d
                if horizon is not None and s > horizon:
                    continue  # truncated; renormalized below
                nxt[s] = nxt.get(s, 0.0) + mass * p
        if not nxt:
            raise BeyondHorizon("no probability mass within horizon")
        kept = sum(nxt.values())
        terms = {s: m / kept for s, m in nxt.items()}
    points = sorted(terms.items())
    score = 0.0
    cum = 0.0
    for i, (x, mass) in enumerate(points[:-1]):
        cum += mass
        survival = 1.0 - cum
        a, b = x, points[i + 1][0] - 1
        score += survival * (a + b) * (b - a + 1) / 2.0
    return score


def estimate_distribution(gaps: Sequence[int], window: int = 20) -> DelayDistribution:
    """Empirical histogram over the most recent ``window`` observed gaps.

    Estimates deliberately lag behaviour changes: a node that goes quiet
    keeps its last histogram until fresh gaps displace the old ones.
    """
    if window < 1:
        raise DistributionError(f"window must be positive, got {window}")
    if not gaps:
        raise NoObservations("no inter-upload gaps observed")
    recent = gaps[-window:]
    counts = Counter(recent)
    if min(counts) < 1:
        raise DistributionError("gaps must be positive hours")
    total = len(recent)
    return DelayDistribution.from_bins((gap, n / total) for gap, n in counts.items())
