"""Day-granularity discrete-event simulation of the full routing system.

Each simulated day, every node scheduled to upload runs a session in seeded
random order: it pulls from its neighbours' recent uploads (delivering,
diverting, or coin-tossing each carried message), then packs and publishes
its own uploads.  Upload schedules derive purely from the behaviour traces,
never from traffic, which is what the indistinguishability check pins down.

Carrier persistence is explicit and tunable: senders keep re-queueing their
own messages until the TTL (they get no acknowledgement), diverted
direct-delivery copies are held for the destination the same way, and
relayed copies can optionally be re-broadcast for a few days.  Those three
knobs set the redundancy level of the whole system.

Scoring cost is kept off the hot path by interning delay histograms: every
distinct histogram gets an id, and the three-node convolution scores are
cached globally by id triple, so they are recomputed only when a node's
observed behaviour actually changes shape.
"""

from __future__ import annotations

import hashlib
import math
import random
import struct
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .crypto import GROUPS_BY_NAME, GroupParams, keygen
from .delay_model import (
    BeyondHorizon,
    DelayCdf,
    DelayDistribution,
    cdf_score,
    convolve,
    extend_cdf,
    sparse_route_score,
    to_cdf,
)
from .messaging import (
    Copy,
    MessageQueues,
    NodeKeys,
    OWN_PRIORITY,
    Upload,
    construct_message,
    _reencrypt_sealed,
)
from .routing import (
    PullCandidate,
    RoutingParams,
    WORST_EXIT_SCORE,
    neighbour_similarity,
    process_candidates,
)
from .social_graph import LocalView, SocialGraph, UploadBehaviour, upload_schedule

__all__ = [
    "SimConfig",
    "RemovalSpec",
    "SimConfigError",
    "MessageRecord",
    "SimMetrics",
    "PairEntropy",
    "EntropyReport",
    "run",
    "apply_removal",
    "congestion_sweep",
    "removal_sweep",
    "path_entropy_analysis",
    "indistinguishability_check",
    "sample_pairs",
]

HOURS_PER_DAY = 24


class SimConfigError(ValueError):
    """Configuration rejected before the run starts."""


@dataclass(frozen=True)
class RemovalSpec:
    """Black-holing attack: who goes silent, and when."""

    strategy: str  # "random" | "high_degree"
    fraction: float
    at_day: int

    def __post_init__(self):
        if self.strategy not in ("random", "high_degree"):
            raise SimConfigError(f"unknown removal strategy {self.strategy!r}")
        if not (0.0 <= self.fraction < 1.0):
            raise SimConfigError("removal fraction must be in [0, 1)")
        if self.at_day < 0:
            raise SimConfigError("removal day must be non-negative")


@dataclass(frozen=True)
class SimConfig:
    months: int = 64
    days_per_month: int = 30
    pair_count: int = 0
    pairs: tuple | None = None  # explicit (sender, dest) list overrides pair_count
    messages_per_pair_per_month: int = 1
    capacity: int = 150
    ttl_days: int = 15
    seed: int = 0
    crypto_enabled: bool = False
    crypto_group: str = "256"
    removal: RemovalSpec | None = None
    routing: RoutingParams = field(default_factory=RoutingParams)
    # Carrier persistence: senders and direct-delivery helpers re-queue their
    # copies until the TTL (no acknowledgements exist); relayed copies are
    # re-queued while the message is at most this many days old (0 = forward
    # once).  Young messages spread hard, then the 1/degree coin thins the
    # spray.  Message age is the same simulation metadata the TTL uses.
    rebroadcast_priority: bool = True
    relay_fresh_days: int = 3
    generation_jitter: bool = False
    trace_paths: bool = False
    track_live_copies: bool = False
    sim_id_salt: int = 0

    def total_days(self) -> int:
        return self.months * self.days_per_month

    def __post_init__(self):
        if self.months < 1 or self.days_per_month < 1:
            raise SimConfigError("months and days_per_month must be positive")
        if self.pair_count < 0 or self.messages_per_pair_per_month < 0:
            raise SimConfigError("pair and message counts must be non-negative")
        if self.capacity < 1 or self.ttl_days < 1:
            raise SimConfigError("capacity and ttl_days must be positive")
        if self.relay_fresh_days < 0:
            raise SimConfigError("relay_fresh_days must be non-negative")
        if self.crypto_enabled and self.crypto_group not in GROUPS_BY_NAME:
            raise SimConfigError(f"unknown crypto group {self.crypto_group!r}")


@dataclass
class MessageRecord:
    sim_id: int
    sender: int
    dest: int
    created_day: int
    first_delivered_day: int | None = None
    copies_received: int = 0
    first_trace: list | None = None

    @property
    def delivered(self) -> bool:
        return self.first_delivered_day is not None

    @property
    def delay_days(self) -> int | None:
        if self.first_delivered_day is None:
            return None
        return self.first_delivered_day - self.created_day


@dataclass
class SimMetrics:
    config: SimConfig
    pairs: list
    records: list
    delivery_rate: float
    mean_delay_days: float
    duplicates_per_delivered: float
    schedule_digest: str
    per_node_schedule_digests: dict
    removed_nodes: frozenset
    uploads_published: int
    copies_created: int
    per_day_live_copies: list | None
    node_gap_counts: dict | None
    runtime_seconds: float

    def summary(self) -> dict:
        return {
            "messages": len(self.records),
            "delivery_rate": self.delivery_rate,
            "mean_delay_days": self.mean_delay_days,
            "duplicates_per_delivered": self.duplicates_per_delivered,
            "uploads_published": self.uploads_published,
            "copies_created": self.copies_created,
            "removed_nodes": len(self.removed_nodes),
            "schedule_digest": self.schedule_digest,
            "runtime_seconds": round(self.runtime_seconds, 3),
        }


# ---------------------------------------------------------------------------
# Behaviour estimation with interned histograms
# ---------------------------------------------------------------------------

_QUANT_LEVELS = 4


def _quantize(counts: Counter, total: int) -> tuple:
    """Round a gap histogram to quarter-resolution weights.

    Estimates only need to separate fast carriers from slow ones; snapping
    the weights stops the sliding window's composition jitter from minting a
    new histogram identity on every observation, which is what keeps the
    route-score cache hot.
    """
    q = {}
    for gap, c in counts.items():
        qc = round(c * _QUANT_LEVELS / total)
        if qc:
            q[gap] = qc
    if not q:
        gap = max(counts, key=lambda g: (counts[g], -g))
        q[gap] = 1
    return tuple(sorted(q.items()))


class _HistogramInterner:
    """Maps quantized gap histograms to small ids plus shared sparse bins,
    so identical behaviour shapes share one score-cache identity."""

    def __init__(self):
        self._ids: dict[tuple, int] = {}
        self._bins: list[tuple[tuple[int, ...], tuple[float, ...]]] = []
        self._pdfs: list[DelayDistribution | None] = []

    def intern(self, counts: Counter, total: int) -> int:
        key = _quantize(counts, total)
        hid = self._ids.get(key)
        if hid is None:
            hid = len(self._bins)
            self._ids[key] = hid
            weight = sum(c for _, c in key)
            self._bins.append(
                (
                    tuple(g for g, _ in key),
                    tuple(c / weight for _, c in key),
                )
            )
            self._pdfs.append(None)
        return hid

    def bins(self, hid: int) -> tuple[tuple[int, ...], tuple[float, ...]]:
        return self._bins[hid]

    def pdf(self, hid: int) -> DelayDistribution:
        pdf = self._pdfs[hid]
        if pdf is None:
            delays, probs = self._bins[hid]
            pdf = DelayDistribution.from_bins(zip(delays, probs))
            self._pdfs[hid] = pdf
        return pdf


class _Estimator:
    """Sliding-window gap histogram for one observed node.

    The histogram id only changes when the window's shape changes, which is
    what makes score caching effective: steady uploaders keep one id for a
    whole month.
    """

    __slots__ = ("window", "gaps", "counts", "hist_id", "interner")

    def __init__(self, window: int, interner: _HistogramInterner):
        self.window = window
        self.gaps: list[int] = []
        self.counts: Counter = Counter()
        self.hist_id: int = -1  # no observations yet
        self.interner = interner

    def push(self, gap: int) -> None:
        self.gaps.append(gap)
        self.counts[gap] += 1
        if len(self.gaps) > self.window:
            old = self.gaps.pop(0)
            self.counts[old] -= 1
            if not self.counts[old]:
                del self.counts[old]
            if old == gap:
                return  # shape unchanged; keep the interned id
        self.hist_id = self.interner.intern(self.counts, len(self.gaps))

    def pdf(self) -> DelayDistribution | None:
        if self.hist_id < 0:
            return None
        return self.interner.pdf(self.hist_id)


class _LiveDistMap:
    """Mapping view over the live estimators, scoped to one node's
    neighbours; keeps LocalView honest without copying per pull."""

    def __init__(self, neighbours, estimators):
        self._neighbours = neighbours
        self._estimators = estimators

    def get(self, node, default=None):
        if node not in self._neighbours:
            return default
        pdf = self._estimators[node].pdf()
        return pdf if pdf is not None else default

    def __getitem__(self, node):
        pdf = self.get(node)
        if pdf is None:
            raise KeyError(node)
        return pdf

    def __contains__(self, node):
        return self.get(node) is not None


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

class _NodeState:
    __slots__ = (
        "node", "neighbours", "queues", "keys", "view", "estimator",
        "uploads", "latest_id", "latest_carrying_id", "last_seen",
        "last_event_hours", "similarity", "exit_cache", "schedule_hash",
        "on_delivery",
    )

    def __init__(self, node, neighbours):
        self.node = node
        self.neighbours = neighbours  # sorted tuple
        self.queues = MessageQueues()
        self.keys = None
        self.view = None
        self.estimator = None
        self.uploads: list[Upload] = []
        self.latest_id = -1
        self.latest_carrying_id = -1
        self.last_seen = dict.fromkeys(neighbours, -1)
        self.last_event_hours = None
        self.similarity: dict[int, float] = {}
        self.exit_cache: dict[int, tuple] = {}
        self.schedule_hash = hashlib.sha256()
        self.on_delivery = None


class _Engine:
    def __init__(self, config: SimConfig, graph: SocialGraph,
                 behaviours: dict[int, UploadBehaviour],
                 mutate_upload_on_backlog: bool = False):
        self.config = config
        self.graph = graph
        self.rng = random.Random(config.seed)
        self.routing = config.routing
        self.mutant = mutate_upload_on_backlog
        self.interner = _HistogramInterner()
        self.triple_cache: dict[tuple, float] = {}
        self.upload_counter = 0
        self.copies_created = 0
        self.crypto_params: GroupParams | None = (
            GROUPS_BY_NAME[config.crypto_group] if config.crypto_enabled else None
        )

        self.pairs = self._resolve_pairs()
        self._validate()

        self.states = [
            _NodeState(v, graph.neighbours(v)) for v in graph.nodes()
        ]
        for st in self.states:
            st.estimator = _Estimator(self.routing.estimate_window, self.interner)
        self._build_keys()
        estimators = [st.estimator for st in self.states]
        nbr_sets = [frozenset(graph.neighbours(v)) for v in graph.nodes()]
        for st in self.states:
            st.view = LocalView(
                center=st.node,
                neighbours=nbr_sets[st.node],
                neighbour_distributions=_LiveDistMap(nbr_sets[st.node], estimators),
                neighbours_of_neighbours={nb: nbr_sets[nb] for nb in st.neighbours},
            )
        self.schedule_by_day: list[list[tuple[int, int]]] = [
            [] for _ in range(config.total_days())
        ]
        for v in graph.nodes():
            beh = behaviours[v]
            for day, count in upload_schedule(beh, config.days_per_month):
                if day < config.total_days():
                    self.schedule_by_day[day].append((v, count))

        self.records: dict[int, MessageRecord] = {}
        self.removed: set[int] = set()
        self.gap_counts: dict[int, Counter] | None = (
            {v: Counter() for v in graph.nodes()} if config.trace_paths else None
        )
        self.per_day_live: list[int] | None = [] if config.track_live_copies else None

    # -- setup ------------------------------------------------------------

    def _resolve_pairs(self):
        if self.config.pairs is not None:
            return [tuple(p) for p in self.config.pairs]
        return sample_pairs(self.graph, self.config.pair_count, self.config.seed)

    def _validate(self):
        n = self.graph.n
        for s, d in self.pairs:
            if not (0 <= s < n and 0 <= d < n):
                raise SimConfigError(f"pair ({s},{d}) references unknown node")
            if s == d:
                raise SimConfigError(f"pair ({s},{d}) must use distinct nodes")
        removal = self.config.removal
        if removal is not None:
            protected = {v for pair in self.pairs for v in pair}
            k = int(removal.fraction * n)
            if k > n - len(protected):
                raise SimConfigError(
                    f"cannot remove {k} of {n} nodes with {len(protected)} protected"
                )

    def _build_keys(self):
        if self.crypto_params is None:
            for st in self.states:
                st.keys = NodeKeys(
                    node=st.node, neighbour_ids=frozenset(st.neighbours)
                )
            self.node_publics = None
            return
        params = self.crypto_params
        msg_kp = [keygen(params, self.rng) for _ in self.states]
        nbr_kp = [keygen(params, self.rng) for _ in self.states]
        for st in self.states:
            st.keys = NodeKeys(
                node=st.node,
                neighbour_ids=frozenset(st.neighbours),
                params=params,
                msg_private=msg_kp[st.node].private,
                nbr_private=nbr_kp[st.node].private,
                neighbour_privates={nb: nbr_kp[nb].private for nb in st.neighbours},
            )
        self.node_publics = [(m.public, n.public) for m, n in zip(msg_kp, nbr_kp)]

    # -- scoring caches -----------------------------------------------------

    def _triple_score(self, hid_prev: int, hid_self: int, hid_exit: int) -> float:
        key = (hid_prev, hid_self, hid_exit)
        score = self.triple_cache.get(key)
        if score is None:
            bins = self.interner.bins
            try:
                score = sparse_route_score(
                    [bins(hid_prev), bins(hid_self), bins(hid_exit)],
                    horizon=self.routing.horizon_hours,
                )
            except BeyondHorizon:
                score = WORST_EXIT_SCORE
            if len(self.triple_cache) > 500_000:
                self.triple_cache.clear()
            self.triple_cache[key] = score
        return score

    def _min_exit(self, st: _NodeState, prev: int) -> float:
        ests = self.states
        hid_self = st.estimator.hist_id
        hid_prev = ests[prev].estimator.hist_id
        if hid_self < 0 or hid_prev < 0:
            return WORST_EXIT_SCORE
        stamp = (hid_prev, hid_self) + tuple(
            ests[e].estimator.hist_id for e in st.neighbours
        )
        cached = st.exit_cache.get(prev)
        if cached is not None and cached[0] == stamp:
            return cached[1]
        best = WORST_EXIT_SCORE
        for e in st.neighbours:
            if e == prev:
                continue
            hid_e = ests[e].estimator.hist_id
            if hid_e < 0:
                continue
            s = self._triple_score(hid_prev, hid_self, hid_e)
            if s < best:
                best = s
        st.exit_cache[prev] = (stamp, best)
        return best

    def _similarity(self, st: _NodeState, prev: int) -> float:
        sim = st.similarity.get(prev)
        if sim is None:
            sim = neighbour_similarity(st.view, prev, self.routing.similarity_mode)
            st.similarity[prev] = sim
        return sim

    # -- message generation ------------------------------------------------

    def _generate_messages(self, day: int, month: int):
        per_month = self.config.messages_per_pair_per_month
        salt = self.config.sim_id_salt
        for idx, (sender, dest) in enumerate(self.pairs):
            st = self.states[sender]
            for m in range(per_month):
                created = day
                if self.config.generation_jitter:
                    created = day + self.rng.randrange(self.config.days_per_month)
                sim_id = salt + (month * len(self.pairs) + idx) * per_month + m
                kwargs = {}
                if self.crypto_params is not None:
                    mp, np_ = self.node_publics[dest]
                    kwargs = dict(
                        payload=b"m%d" % sim_id, params=self.crypto_params,
                        dest_msg_public=mp, dest_nbr_public=np_,
                    )
                copy = construct_message(
                    st.queues, sim_id=sim_id, sender=sender, dest=dest,
                    day=created, rng=self.rng, **kwargs,
                )
                self.copies_created += 1
                self.records[sim_id] = MessageRecord(
                    sim_id=sim_id, sender=sender, dest=dest, created_day=created
                )

    # -- session ------------------------------------------------------------

    def _gather(self, st: _NodeState, day: int) -> list[PullCandidate]:
        # Watermark equivalent of routing.gather_candidates: sessions (days)
        # count against the window, skipped uploads are gone for good.
        cutoff = day - self.routing.ttl_days
        window_size = self.routing.uploads_window
        candidates: list[PullCandidate] = []
        states = self.states
        last_seen = st.last_seen
        for nb in st.neighbours:
            nb_state = states[nb]
            latest = nb_state.latest_id
            last = last_seen[nb]
            if latest <= last:
                continue
            last_seen[nb] = latest
            if nb_state.latest_carrying_id <= last:
                continue
            window = []
            days_count = 0
            prev_day = None
            for up in reversed(nb_state.uploads):
                if up.id <= last or up.day < cutoff:
                    break
                if up.day != prev_day:
                    if days_count == window_size:
                        break
                    days_count += 1
                    prev_day = up.day
                window.append(up)
            for up in reversed(window):
                if up.carried:
                    for copy in up.carried:
                        candidates.append(PullCandidate(copy, nb, up.day))
        return candidates

    def _session(self, st: _NodeState, day: int, k: int):
        cands = self._gather(st, day)
        if cands:
            stats = process_candidates(
                st.queues, st.keys, cands, self.routing, self.rng, day,
                self.graph.degree,
                lambda prev: self._similarity(st, prev),
                lambda prev: self._min_exit(st, prev),
                st.on_delivery,
            )
            self.copies_created += stats.accepted + stats.diverted
        self._publish(st, day, k)

    def _publish(self, st: _NodeState, day: int, k: int):
        config = self.config
        queue = st.queues.output
        ttl = self.routing.ttl_days
        capacity = config.capacity
        if self.mutant and queue:
            k += 1  # deliberately broken build: uploads react to backlog
        # The digest records what an observer sees: actual uploads per day.
        st.schedule_hash.update(struct.pack("<iH", day, min(k, 0xFFFF)))
        # Expire lazily, sort once; successive uploads take successive slices.
        if queue:
            cutoff_day = day - ttl
            if any(c.msg.created_day < cutoff_day for c in queue):
                queue = [c for c in queue if c.msg.created_day >= cutoff_day]
            queue.sort(key=Copy.sort_key)
        carried_all: list[Copy] = []
        uploads_cutoff = day - ttl
        ups = st.uploads
        while ups and ups[0].day < uploads_cutoff:
            ups.pop(0)
        for j in range(k):
            chunk = queue[j * capacity : (j + 1) * capacity]
            if chunk and self.crypto_params is not None:
                chunk = [
                    Copy(c.msg, c.node, c.day, c.parent, c.score, c.seq,
                         _reencrypt_sealed(self.crypto_params, c.sealed, self.rng))
                    for c in chunk
                ]
            self.upload_counter += 1
            up = Upload(
                id=self.upload_counter, uploader=st.node, day=day,
                carried=tuple(chunk),
            )
            ups.append(up)
            st.latest_id = up.id
            if chunk:
                st.latest_carrying_id = up.id
                carried_all.extend(chunk)
        leftover = queue[k * capacity :]
        # Carrier persistence: own and diverted copies re-queue until TTL,
        # relayed ones while the message is still fresh.
        fresh_days = config.relay_fresh_days
        keep_priority = config.rebroadcast_priority
        for c in carried_all:
            if c.score == OWN_PRIORITY:
                if keep_priority:
                    leftover.append(c)
            elif day - c.msg.created_day < fresh_days:
                leftover.append(c)
        st.queues.output = leftover
        # Feed the behaviour estimate every neighbour shares.
        self._observe_uploads(st, day, k)

    def _observe_uploads(self, st: _NodeState, day: int, k: int):
        horizon = self.routing.horizon_hours
        spacing = HOURS_PER_DAY / k
        for j in range(k):
            t = day * HOURS_PER_DAY + j * spacing
            if st.last_event_hours is not None:
                gap = round(t - st.last_event_hours)
                gap = max(1, min(gap, horizon))
                st.estimator.push(gap)
                if self.gap_counts is not None:
                    self.gap_counts[st.node][gap] += 1
            st.last_event_hours = t

    # -- main loop -----------------------------------------------------------

    def run(self) -> SimMetrics:
        started = time.monotonic()
        config = self.config
        for st in self.states:
            st.on_delivery = self._delivery_callback(st.node)
        removal = config.removal
        for day in range(config.total_days()):
            if removal is not None and day == removal.at_day:
                protected = {v for pair in self.pairs for v in pair}
                self.removed = apply_removal(
                    self.graph, removal.strategy, removal.fraction,
                    protected, config.seed,
                )
            if day % config.days_per_month == 0:
                self._generate_messages(day, day // config.days_per_month)
            today = self.schedule_by_day[day]
            if today:
                order = list(today)
                self.rng.shuffle(order)
                removed = self.removed
                for node, k in order:
                    if node in removed:
                        continue
                    self._session(self.states[node], day, k)
            if self.per_day_live is not None:
                live = 0
                for st in self.states:
                    live += sum(
                        1 for c in st.queues.output
                        if day - c.msg.created_day <= self.routing.ttl_days
                    )
                self.per_day_live.append(live)
        per_node = {
            st.node: st.schedule_hash.hexdigest() for st in self.states
        }
        combined = hashlib.sha256()
        for v in sorted(per_node):
            combined.update(per_node[v].encode())
        records = [self.records[k] for k in sorted(self.records)]
        delivered = [r for r in records if r.delivered]
        delivery_rate = len(delivered) / len(records) if records else 0.0
        mean_delay = (
            sum(r.delay_days for r in delivered) / len(delivered) if delivered else 0.0
        )
        dup = (
            sum(r.copies_received for r in delivered) / len(delivered)
            if delivered else 0.0
        )
        return SimMetrics(
            config=config,
            pairs=list(self.pairs),
            records=records,
            delivery_rate=delivery_rate,
            mean_delay_days=mean_delay,
            duplicates_per_delivered=dup,
            schedule_digest=combined.hexdigest(),
            per_node_schedule_digests=per_node,
            removed_nodes=frozenset(self.removed),
            uploads_published=self.upload_counter,
            copies_created=self.copies_created,
            per_day_live_copies=self.per_day_live,
            node_gap_counts=self.gap_counts,
            runtime_seconds=time.monotonic() - started,
        )

    def _delivery_callback(self, node: int):
        records = self.records
        trace_paths = self.config.trace_paths

        def on_delivery(copy: Copy, day: int, duplicate: bool):
            rec = records.get(copy.msg.sim_id)
            if rec is None or rec.dest != node:
                return
            rec.copies_received += 1
            if not duplicate and rec.first_delivered_day is None:
                rec.first_delivered_day = day
                if trace_paths:
                    rec.first_trace = copy.trace() + [(node, day)]

        return on_delivery


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def sample_pairs(graph: SocialGraph, count: int, seed: int) -> list[tuple[int, int]]:
    """Seeded uniform sampling of communicating pairs.

    Nodes are drawn without reuse from the largest connected component, so a
    route always exists and removal protection stays a small set.
    """
    if count == 0:
        return []
    component = _largest_component(graph)
    if 2 * count > len(component):
        raise SimConfigError(
            f"{count} pairs need {2 * count} distinct nodes; largest component "
            f"has {len(component)}"
        )
    rng = random.Random(seed ^ 0x5A17)
    chosen = rng.sample(sorted(component), 2 * count)
    return [(chosen[2 * i], chosen[2 * i + 1]) for i in range(count)]


def _largest_component(graph: SocialGraph) -> set[int]:
    seen: set[int] = set()
    best: set[int] = set()
    for start in graph.nodes():
        if start in seen:
            continue
        comp = {start}
        stack = [start]
        while stack:
            v = stack.pop()
            for w in graph.neighbours(v):
                if w not in comp:
                    comp.add(w)
                    stack.append(w)
        seen |= comp
        if len(comp) > len(best):
            best = comp
    return best


def apply_removal(
    graph: SocialGraph,
    strategy: str,
    fraction: float,
    protected: set[int],
    seed: int,
) -> set[int]:
    """Pick the black-holed set: uniform or top-degree, never pair members."""
    k = int(fraction * graph.n)
    candidates = [v for v in graph.nodes() if v not in protected]
    if k > len(candidates):
        raise SimConfigError(
            f"cannot remove {k} nodes, only {len(candidates)} unprotected"
        )
    if strategy == "random":
        rng = random.Random(seed ^ 0xB1AC)
        return set(rng.sample(candidates, k))
    if strategy == "high_degree":
        ranked = sorted(candidates, key=lambda v: (-graph.degree(v), v))
        return set(ranked[:k])
    raise SimConfigError(f"unknown removal strategy {strategy!r}")


def run(
    config: SimConfig,
    graph: SocialGraph,
    behaviours: dict[int, UploadBehaviour],
    _mutate_upload_on_backlog: bool = False,
) -> SimMetrics:
    """Execute one full simulation; deterministic for a fixed config."""
    engine = _Engine(config, graph, behaviours, _mutate_upload_on_backlog)
    return engine.run()


def congestion_sweep(
    base_config: SimConfig,
    pair_counts: list[int],
    graph: SocialGraph,
    behaviours: dict[int, UploadBehaviour],
) -> list[tuple[int, SimMetrics]]:
    """One run per load level, pairs redrawn from the same seed."""
    out = []
    for count in pair_counts:
        config = replace(base_config, pair_count=count, pairs=None)
        out.append((count, run(config, graph, behaviours)))
    return out


def removal_sweep(
    base_config: SimConfig,
    fractions: list[float],
    strategies: list[str],
    at_day: int,
    graph: SocialGraph,
    behaviours: dict[int, UploadBehaviour],
) -> list[tuple[str, float, SimMetrics]]:
    out = []
    for strategy in strategies:
        for fraction in fractions:
            removal = RemovalSpec(strategy=strategy, fraction=fraction, at_day=at_day)
            config = replace(base_config, removal=removal)
            out.append((strategy, fraction, run(config, graph, behaviours)))
    return out


# ---------------------------------------------------------------------------
# Path-consistency analysis
# ---------------------------------------------------------------------------

@dataclass
class PairEntropy:
    sender: int
    dest: int
    deliveries: int
    entropy_bits: float
    scores: list


@dataclass
class EntropyReport:
    bins: int
    pairs: list
    excluded_pairs: list
    max_entropy_bits: float

    def median_entropy(self) -> float:
        if not self.pairs:
            return 0.0
        return float(np.median([p.entropy_bits for p in self.pairs]))


def path_entropy_analysis(metrics: SimMetrics, bins: int = 10) -> EntropyReport:
    """How consistent is the quality of each pair's delivery path over time?

    Scores every first-delivery path with the convolution CDF score over the
    ground-truth (whole-run) behaviour of the nodes on it, extends all of a
    pair's CDFs to a common support, then bins each pair's normalized score
    series and takes its Shannon entropy.  Low entropy means the pair keeps
    being served by paths of the same quality.
    """
    if metrics.node_gap_counts is None:
        raise SimConfigError("entropy analysis needs a run with trace_paths enabled")
    if bins < 2:
        raise SimConfigError("need at least 2 bins")
    pdfs: dict[int, DelayDistribution] = {}
    for node, counts in metrics.node_gap_counts.items():
        if counts:
            total = sum(counts.values())
            pdfs[node] = DelayDistribution.from_bins(
                (g, c / total) for g, c in counts.items()
            )
    by_pair: dict[tuple[int, int], list] = {tuple(p): [] for p in metrics.pairs}
    for rec in metrics.records:
        if rec.delivered and rec.first_trace:
            by_pair.setdefault((rec.sender, rec.dest), []).append(rec.first_trace)

    report = EntropyReport(bins=bins, pairs=[], excluded_pairs=[],
                           max_entropy_bits=math.log2(bins))
    for (sender, dest), traces in sorted(by_pair.items()):
        usable = [
            t for t in traces
            if all(node in pdfs for node, _ in t)
        ]
        if not usable:
            report.excluded_pairs.append((sender, dest))
            continue
        cdfs: list[DelayCdf] = []
        for t in usable:
            acc = pdfs[t[0][0]]
            for node, _ in t[1:]:
                acc = convolve(acc, pdfs[node])
            cdfs.append(to_cdf(acc))
        longest = max(len(c) for c in cdfs)
        scores = [cdf_score(extend_cdf(c, longest)) for c in cdfs]
        lo, hi = min(scores), max(scores)
        span = hi - lo
        normalized = [0.0 if span == 0 else (s - lo) / span for s in scores]
        hist, _ = np.histogram(normalized, bins=bins, range=(0.0, 1.0))
        probs = hist / hist.sum()
        entropy = float(-sum(p * math.log2(p) for p in probs if p > 0))
        report.pairs.append(
            PairEntropy(sender, dest, len(scores), entropy, scores)
        )
    return report


# ---------------------------------------------------------------------------
# Schedule-independence (indistinguishability) check
# ---------------------------------------------------------------------------

def indistinguishability_check(
    config: SimConfig,
    graph: SocialGraph,
    behaviours: dict[int, UploadBehaviour],
    _mutate_upload_on_backlog: bool = False,
) -> bool:
    """Upload schedules must be bit-identical with and without traffic.

    Runs the engine twice under the same seed, once with zero pairs and once
    as configured, and compares every node's schedule digest.
    """
    silent = replace(config, pairs=(), pair_count=0)
    a = run(silent, graph, behaviours)
    b = run(config, graph, behaviours, _mutate_upload_on_backlog)
    return a.per_node_schedule_digests == b.per_node_schedule_digests
