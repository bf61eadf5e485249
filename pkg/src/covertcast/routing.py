"""Pull-broadcast routing: which pulled messages move to the output queue.

When a node uploads it inspects the recent uploads of every neighbour, and
for each carried message decides whether to carry it onward.  The decision
has no access to the destination (that is encrypted for everyone outside the
destination's neighbourhood); it relies on two local signals instead:

* how much the previous hop's friend circle overlaps this node's (less
  overlap lets a message escape its community), and
* how quickly the best onward two-hop segment (previous node, this node,
  candidate exit) would move mass, judged by the convolution CDF score.

Accepted messages then survive a coin toss with probability 1/degree of the
previous hop, which thins sprays over time without any copy counter in the
message itself.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass

from .delay_model import DelayDistribution, convolution_route_score
from .messaging import (
    Copy,
    Delivery,
    MessageQueues,
    NodeKeys,
    OWN_PRIORITY,
    Upload,
    check_delivery,
)
from .social_graph import LocalView

__all__ = [
    "RoutingParams",
    "PullCandidate",
    "PullStats",
    "WORST_EXIT_SCORE",
    "neighbour_similarity",
    "min_exit_cdf_score",
    "normalize_exit_scores",
    "message_score",
    "pull_round",
]

# Sentinel for "no scorable exit": degree-1 dead ends and unestimated
# neighbourhoods.  Messages stay eligible; normalization maps this to the
# worst rank.
WORST_EXIT_SCORE = math.inf


@dataclass(frozen=True)
class RoutingParams:
    """Knobs of the pull decision."""

    uploads_window: int = 5
    ttl_days: int = 15
    capacity: int = 150
    estimate_window: int = 20
    horizon_hours: int = 720
    similarity_mode: str = "jaccard"  # or "prev_fraction"

    def __post_init__(self):
        if min(self.uploads_window, self.ttl_days, self.capacity,
               self.estimate_window, self.horizon_hours) < 1:
            raise ValueError("routing parameters must be positive")
        if self.similarity_mode not in ("jaccard", "prev_fraction"):
            raise ValueError(f"unknown similarity mode {self.similarity_mode!r}")


@dataclass(frozen=True)
class PullCandidate:
    """One message instance under consideration during a pull."""

    copy: Copy
    from_node: int
    upload_day: int


@dataclass
class PullStats:
    gathered: int = 0
    expired: int = 0
    delivered: int = 0
    duplicate_arrivals: int = 0
    diverted: int = 0
    accepted: int = 0
    discarded: int = 0


def neighbour_similarity(
    view: LocalView, prev: int, mode: str = "jaccard"
) -> float:
    """Shared-friends percentage between the centre and the previous hop.

    Both endpoints are excluded from each other's sets.  Jaccard keeps the
    measure symmetric and bounded; ``prev_fraction`` divides by the previous
    hop's circle only.  Two nodes with no third friends between them score
    0: there is no community to escape.
    """
    mine = view.neighbours - {prev}
    theirs = view.neighbours_of_neighbours[prev] - {view.center}
    shared = mine & theirs
    if mode == "prev_fraction":
        return 100.0 * len(shared) / len(theirs) if theirs else 0.0
    union = mine | theirs
    return 100.0 * len(shared) / len(union) if union else 0.0


def min_exit_cdf_score(
    view: LocalView,
    prev: int,
    self_pdf: DelayDistribution | None,
    horizon_hours: int = 720,
) -> tuple[float, dict[int, float]]:
    """Best onward prospect over all exits except the previous hop.

    Scores the three-node segment (previous, centre, exit) for every
    candidate exit with a known delay estimate; exits the centre has no
    estimate for are treated as inactive.  Returns the sentinel when nothing
    is scorable (degree-1 dead end, or missing estimates).
    """
    per_exit: dict[int, float] = {}
    prev_pdf = view.neighbour_distributions.get(prev)
    if prev_pdf is not None and self_pdf is not None:
        for exit_node in view.neighbours:
            if exit_node == prev:
                continue
            exit_pdf = view.neighbour_distributions.get(exit_node)
            if exit_pdf is None:
                continue
            per_exit[exit_node] = convolution_route_score(
                [prev_pdf, self_pdf, exit_pdf], horizon=horizon_hours
            )
    if not per_exit:
        return WORST_EXIT_SCORE, per_exit
    return min(per_exit.values()), per_exit


def normalize_exit_scores(raws: Mapping[int, float]) -> dict[int, float]:
    """Min-max the raw exit scores of one pull event onto [0, 100].

    A single raw value (or all-equal values) maps to 0; the sentinel maps to
    100 whenever any finite score exists.  Adding a constant to every finite
    raw therefore never changes the candidate ordering.
    """
    finite = [v for v in raws.values() if v != WORST_EXIT_SCORE]
    if not finite:
        return {k: 0.0 for k in raws}
    lo, hi = min(finite), max(finite)
    span = hi - lo
    out = {}
    for k, v in raws.items():
        if v == WORST_EXIT_SCORE:
            out[k] = 100.0
        elif span == 0.0:
            out[k] = 0.0
        else:
            out[k] = 100.0 * (v - lo) / span
    return out


def message_score(similarity: float, min_cdf_norm: float) -> float:
    """Final pull score; lower is better."""
    return similarity + min_cdf_norm


def gather_candidates(
    queues: MessageQueues,
    view: LocalView,
    uploads_by_neighbour: Mapping[int, Sequence[Upload]],
    params: RoutingParams,
    day: int,
) -> list[PullCandidate]:
    """Fetch the newest unseen upload sessions (within the TTL) per neighbour.

    The window counts upload *sessions*: all images a neighbour posted on
    one day form one session, and at most ``uploads_window`` unseen sessions
    are fetched.  Counting raw images would let a prolific poster bury its
    cargo under same-day empty uploads at day granularity.  Every fresh
    upload is marked seen whether or not anything was taken from it, so
    older skipped ones are gone for good.  Candidates come out in
    deterministic order: neighbours ascending, uploads chronological,
    carried order preserved.
    """
    queues.prune_seen(day, params.ttl_days)
    cutoff = day - params.ttl_days
    candidates: list[PullCandidate] = []
    for nb in sorted(view.neighbours):
        uploads = uploads_by_neighbour.get(nb)
        if not uploads:
            continue
        fresh = [
            u for u in uploads
            if u.day >= cutoff and u.id not in queues.seen_uploads
        ]
        window_days: set[int] = set()
        for upload in reversed(fresh):
            if upload.day not in window_days:
                if len(window_days) == params.uploads_window:
                    break  # hit an older session; the rest is older still
                window_days.add(upload.day)
        for upload in fresh:
            queues.seen_uploads[upload.id] = upload.day
        for upload in fresh:
            if upload.day in window_days:
                for copy in upload.carried:
                    candidates.append(PullCandidate(copy, nb, upload.day))
    return candidates


def process_candidates(
    queues: MessageQueues,
    keys: NodeKeys,
    candidates: Sequence[PullCandidate],
    params: RoutingParams,
    rng,
    day: int,
    degree_of: Callable[[int], int],
    similarity_fn: Callable[[int], float],
    min_exit_fn: Callable[[int], float],
    on_delivery: Callable[[Copy, int, bool], None] | None = None,
) -> PullStats:
    """Decision core of a pull: divert deliveries, score, toss, enqueue.

    The candidate list is sorted ascending by score and the 1/degree coin
    is tossed per message in that order, so a fixed rng state replays
    exactly.
    """
    stats = PullStats()
    stats.gathered = len(candidates)
    queues.input = [c.copy for c in candidates]

    # Delivery pass: claim what this node's keys recognize.
    routed: list[PullCandidate] = []
    for cand in candidates:
        if day - cand.copy.msg.created_day > params.ttl_days:
            stats.expired += 1
            continue
        result = check_delivery(cand.copy, keys, queues)
        if result.kind is Delivery.MINE:
            queues.delivered_nonces.add(cand.copy.msg.nonce)
            stats.delivered += 1
            if on_delivery is not None:
                on_delivery(cand.copy, day, False)
        elif result.kind is Delivery.DUPLICATE:
            if result.neighbour is None:
                stats.duplicate_arrivals += 1
                if on_delivery is not None:
                    on_delivery(cand.copy, day, True)
            # A helper that already diverted this nonce discards the repeat.
        elif result.kind is Delivery.NEIGHBOUR:
            queues.delivered_nonces.add(cand.copy.msg.nonce)
            stats.diverted += 1
            queues.output.append(
                cand.copy.record_hop(keys.node, day, OWN_PRIORITY, queues.take_seq())
            )
        else:
            routed.append(cand)

    if not routed:
        queues.input = []
        return stats

    froms = {c.from_node for c in routed}
    raw = {prev: min_exit_fn(prev) for prev in froms}
    norm = normalize_exit_scores(raw)
    sims = {prev: similarity_fn(prev) for prev in froms}
    scored = [
        (message_score(sims[c.from_node], norm[c.from_node]), i, c)
        for i, c in enumerate(routed)
    ]
    scored.sort(key=lambda t: (t[0], t[1]))

    for score, _, cand in scored:
        if rng.random() < 1.0 / degree_of(cand.from_node):
            stats.accepted += 1
            queues.output.append(
                cand.copy.record_hop(keys.node, day, score, queues.take_seq())
            )
        else:
            stats.discarded += 1
    queues.input = []
    return stats


def pull_round(
    queues: MessageQueues,
    view: LocalView,
    keys: NodeKeys,
    self_pdf: DelayDistribution | None,
    uploads_by_neighbour: Mapping[int, Sequence[Upload]],
    params: RoutingParams,
    rng,
    day: int,
    degree_of: Callable[[int], int],
    *,
    similarity_fn: Callable[[int], float] | None = None,
    min_exit_fn: Callable[[int], float] | None = None,
    on_delivery: Callable[[Copy, int, bool], None] | None = None,
) -> PullStats:
    """One full pull session: gather, divert deliveries, score, toss, enqueue.

    ``similarity_fn``/``min_exit_fn`` let a caller inject cached scoring
    (same contract as :func:`neighbour_similarity` /
    :func:`min_exit_cdf_score`); by default both are computed from the view.
    """
    if similarity_fn is None:
        similarity_fn = lambda prev: neighbour_similarity(
            view, prev, params.similarity_mode
        )
    if min_exit_fn is None:
        min_exit_fn = lambda prev: min_exit_cdf_score(
            view, prev, self_pdf, params.horizon_hours
        )[0]
    candidates = gather_candidates(queues, view, uploads_by_neighbour, params, day)
    return process_candidates(
        queues, keys, candidates, params, rng, day, degree_of,
        similarity_fn, min_exit_fn, on_delivery,
    )
