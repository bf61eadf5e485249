"""Social graph topology, upload behaviour traces, and per-node local views.

Nodes are dense 0-based integers.  Datasets arrive as a pair of CSV files
(edge list plus per-node monthly upload counts); a seeded scale-free
generator and a clearly-labelled synthetic behaviour sampler stand in when
no real dataset is available.
"""

from __future__ import annotations

import random
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import IO, NamedTuple

import numpy as np

from .delay_model import DelayDistribution

__all__ = [
    "SocialGraph",
    "UploadBehaviour",
    "LocalView",
    "DatasetError",
    "DatasetLoad",
    "LoadReport",
    "load_dataset",
    "serialize_dataset",
    "generate_ba",
    "map_uploads",
    "inter_upload_hours",
    "upload_schedule",
    "local_view",
    "synthetic_behaviours",
]

HOURS_PER_MONTH = 720
DEFAULT_MONTHS = 64
DEFAULT_DAYS_PER_MONTH = 30


class DatasetError(ValueError):
    """Malformed dataset input (bad row, dangling reference, wrong size)."""


class SocialGraph:
    """Undirected graph over dense integer node ids.

    Immutable after construction; adjacency is exposed as tuples so hot
    loops can iterate without copying.
    """

    def __init__(self, n: int, edges: Iterable[tuple[int, int]],
                 original_ids: Sequence[str] | None = None):
        if n < 0:
            raise DatasetError("node count must be non-negative")
        adjacency: list[set[int]] = [set() for _ in range(n)]
        edge_set: set[tuple[int, int]] = set()
        for a, b in edges:
            if a == b:
                raise DatasetError(f"self-loop on node {a}")
            if not (0 <= a < n and 0 <= b < n):
                raise DatasetError(f"edge ({a},{b}) references unknown node")
            lo, hi = (a, b) if a < b else (b, a)
            if (lo, hi) in edge_set:
                continue
            edge_set.add((lo, hi))
            adjacency[a].add(b)
            adjacency[b].add(a)
        self._n = n
        self._edges = frozenset(edge_set)
        self._adj: tuple[tuple[int, ...], ...] = tuple(
            tuple(sorted(nbrs)) for nbrs in adjacency
        )
        self.original_ids = tuple(original_ids) if original_ids is not None else None

    @property
    def n(self) -> int:
        return self._n

    def nodes(self) -> range:
        return range(self._n)

    def edges(self) -> list[tuple[int, int]]:
        return sorted(self._edges)

    def edge_count(self) -> int:
        return len(self._edges)

    def neighbours(self, v: int) -> tuple[int, ...]:
        return self._adj[v]

    def degree(self, v: int) -> int:
        return len(self._adj[v])

    def has_edge(self, a: int, b: int) -> bool:
        lo, hi = (a, b) if a < b else (b, a)
        return (lo, hi) in self._edges

    def degrees(self) -> np.ndarray:
        return np.array([len(nbrs) for nbrs in self._adj], dtype=np.int64)


@dataclass(frozen=True)
class UploadBehaviour:
    """Monthly upload counts for one node over the experiment horizon."""

    node: int
    monthly_counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "monthly_counts", tuple(int(c) for c in self.monthly_counts))
        if any(c < 0 for c in self.monthly_counts):
            raise DatasetError(f"negative upload count for node {self.node}")

    def total(self) -> int:
        return sum(self.monthly_counts)


@dataclass(frozen=True)
class LocalView:
    """What one node can see: its friends, their friends, their behaviour.

    Never contains anything beyond two hops from the centre.
    """

    center: int
    neighbours: frozenset[int]
    neighbour_distributions: Mapping[int, DelayDistribution]
    neighbours_of_neighbours: Mapping[int, frozenset[int]]


@dataclass
class LoadReport:
    """Bookkeeping from dataset ingestion."""

    nodes: int = 0
    edges: int = 0
    duplicate_edge_rows: int = 0
    missing_behaviour_nodes: list[int] = field(default_factory=list)
    isolated_nodes: int = 0


class DatasetLoad(NamedTuple):
    graph: SocialGraph
    behaviours: list[UploadBehaviour]
    report: LoadReport


def _rows(source: IO[str] | IO[bytes], what: str):
    for lineno, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if lineno == 1 and not all(_is_int(f) for f in fields):
            continue  # optional header
        yield lineno, fields, what


def _is_int(s: str) -> bool:
    try:
        int(s)
    except ValueError:
        return False
    return True


def load_dataset(
    edges_source: IO[str] | IO[bytes],
    uploads_source: IO[str] | IO[bytes],
    months: int = DEFAULT_MONTHS,
) -> DatasetLoad:
    """Ingest an edge-list CSV and a monthly-upload-counts CSV.

    Original node ids may be arbitrary integers; they are remapped to dense
    0-based ids (originals kept on ``graph.original_ids``).  Nodes present in
    the uploads file but not in any edge become isolated nodes; nodes with no
    uploads row get all-zero counts and are flagged in the report.
    """
    report = LoadReport()
    raw_edges: list[tuple[int, int]] = []
    seen_pairs: set[tuple[int, int]] = set()
    ids: set[int] = set()
    for lineno, fields, _ in _rows(edges_source, "edges"):
        if len(fields) != 2 or not all(_is_int(f) for f in fields):
            raise DatasetError(f"edges line {lineno}: expected 'node_a,node_b', got {fields!r}")
        a, b = int(fields[0]), int(fields[1])
        if a == b:
            raise DatasetError(f"edges line {lineno}: self-loop on {a}")
        key = (a, b) if a < b else (b, a)
        if key in seen_pairs:
            report.duplicate_edge_rows += 1
            continue
        seen_pairs.add(key)
        raw_edges.append(key)
        ids.update(key)

    counts_by_id: dict[int, tuple[int, ...]] = {}
    for lineno, fields, _ in _rows(uploads_source, "uploads"):
        if len(fields) != months + 1 or not all(_is_int(f) for f in fields):
            raise DatasetError(
                f"uploads line {lineno}: expected 'node_id,m1..m{months}' "
                f"({months + 1} integer fields), got {len(fields)} fields"
            )
        node_id = int(fields[0])
        if node_id in counts_by_id:
            raise DatasetError(f"uploads line {lineno}: duplicate row for node {node_id}")
        counts_by_id[node_id] = tuple(int(f) for f in fields[1:])
        ids.add(node_id)

    ordered = sorted(ids)
    dense = {orig: i for i, orig in enumerate(ordered)}
    graph = SocialGraph(
        len(ordered),
        [(dense[a], dense[b]) for a, b in raw_edges],
        original_ids=[str(i) for i in ordered],
    )
    behaviours = []
    for orig in ordered:
        node = dense[orig]
        if orig in counts_by_id:
            behaviours.append(UploadBehaviour(node, counts_by_id[orig]))
        else:
            behaviours.append(UploadBehaviour(node, (0,) * months))
            report.missing_behaviour_nodes.append(node)
    report.nodes = graph.n
    report.edges = graph.edge_count()
    report.isolated_nodes = sum(1 for v in graph.nodes() if graph.degree(v) == 0)
    return DatasetLoad(graph, behaviours, report)


def serialize_dataset(
    graph: SocialGraph,
    behaviours: Sequence[UploadBehaviour],
    edges_sink: IO[str],
    uploads_sink: IO[str],
) -> None:
    """Write the CSV pair back out with deterministic (sorted) row order."""
    edges_sink.write("node_a,node_b\n")
    for a, b in graph.edges():
        edges_sink.write(f"{a},{b}\n")
    months = len(behaviours[0].monthly_counts) if behaviours else DEFAULT_MONTHS
    uploads_sink.write("node_id," + ",".join(f"m{i+1}" for i in range(months)) + "\n")
    for beh in sorted(behaviours, key=lambda b: b.node):
        uploads_sink.write(f"{beh.node}," + ",".join(map(str, beh.monthly_counts)) + "\n")


def generate_ba(n: int, m: int, seed: int) -> SocialGraph:
    """Seeded preferential-attachment graph: scale-free, always connected.

    Starts from a complete graph on the first m nodes, then attaches each
    new node to m distinct existing nodes chosen with probability
    proportional to degree.  Edge count is therefore exactly
    C(m,2) + m*(n-m).
    """
    if m < 1:
        raise DatasetError(f"attachment parameter must be >= 1, got {m}")
    if n <= m:
        raise DatasetError(f"need n > m, got n={n} m={m}")
    rng = random.Random(seed)
    edges: list[tuple[int, int]] = []
    repeated: list[int] = []
    for a in range(m):
        for b in range(a + 1, m):
            edges.append((a, b))
            repeated.append(a)
            repeated.append(b)
    if m == 1:
        repeated.append(0)  # lone seed node has no edges yet; make it reachable
    for source in range(m, n):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(repeated[rng.randrange(len(repeated))])
        for t in sorted(targets):
            edges.append((t, source))
            repeated.append(t)
        repeated.extend([source] * m)
    graph = SocialGraph(n, edges)
    return graph


def map_uploads(
    graph: SocialGraph,
    behaviours: Sequence[UploadBehaviour],
    permute_seed: int | None = None,
) -> dict[int, UploadBehaviour]:
    """Assign behaviour record i to node i (1:1 by index order).

    ``permute_seed`` applies a deterministic shuffle of the assignment
    instead, for sensitivity checks.
    """
    if len(behaviours) < graph.n:
        raise DatasetError(
            f"{len(behaviours)} behaviour records for {graph.n} nodes"
        )
    records = list(behaviours[: graph.n])
    if permute_seed is not None:
        random.Random(permute_seed).shuffle(records)
    return {
        node: UploadBehaviour(node, records[node].monthly_counts)
        for node in graph.nodes()
    }


def degree_upload_correlation(
    graph: SocialGraph, assignment: Mapping[int, UploadBehaviour]
) -> float:
    """Pearson correlation between node degree and total upload count."""
    deg = graph.degrees().astype(np.float64)
    totals = np.array([assignment[v].total() for v in graph.nodes()], dtype=np.float64)
    if deg.std() == 0 or totals.std() == 0:
        return 0.0
    return float(np.corrcoef(deg, totals)[0, 1])


def inter_upload_hours(monthly_count: int) -> float | None:
    """Estimated hours between uploads for a month with ``monthly_count`` posts.

    Returns None for a count of zero: the node is inactive that month.
    """
    if monthly_count < 0:
        raise DatasetError(f"negative monthly count {monthly_count}")
    if monthly_count == 0:
        return None
    return HOURS_PER_MONTH / monthly_count


def upload_schedule(
    behaviour: UploadBehaviour,
    days_per_month: int = DEFAULT_DAYS_PER_MONTH,
) -> list[tuple[int, int]]:
    """Spread each month's count evenly over its days.

    Returns (absolute_day, upload_count) pairs, skipping zero days.  A count
    c <= days gets one upload every floor(days/c) days starting at the
    month's first day; larger counts put floor(c/days) on every day and
    spread the remainder the same way.  Monthly totals are preserved
    exactly.
    """
    out: list[tuple[int, int]] = []
    for month, count in enumerate(behaviour.monthly_counts):
        if count == 0:
            continue
        base_day = month * days_per_month
        per_day = [0] * days_per_month
        everyday, remainder = divmod(count, days_per_month)
        if everyday:
            for d in range(days_per_month):
                per_day[d] += everyday
        if remainder:
            step = days_per_month // remainder
            for k in range(remainder):
                per_day[k * step] += 1
        out.extend(
            (base_day + d, c) for d, c in enumerate(per_day) if c
        )
    return out


def local_view(
    graph: SocialGraph,
    center: int,
    estimates: Mapping[int, DelayDistribution],
) -> LocalView:
    """Everything ``center`` is allowed to know: friends, their friend
    lists, and its current delay estimates for those friends."""
    if not (0 <= center < graph.n):
        raise DatasetError(f"unknown node {center}")
    nbrs = frozenset(graph.neighbours(center))
    return LocalView(
        center=center,
        neighbours=nbrs,
        neighbour_distributions={v: estimates[v] for v in nbrs if v in estimates},
        neighbours_of_neighbours={v: frozenset(graph.neighbours(v)) for v in nbrs},
    )


def synthetic_behaviours(
    n: int,
    months: int = DEFAULT_MONTHS,
    seed: int = 0,
    median_monthly: float = 30.0,
    sigma: float = 0.7,
    degrees: Sequence[int] | None = None,
    degree_bias: float = 0.8,
) -> list[UploadBehaviour]:
    """SYNTHETIC stand-in for a real upload dataset.

    Each node gets a log-normal activity level (median ``median_monthly``
    uploads per month for a median-degree node, i.e. a median inter-upload
    time of about one day), and its monthly counts are Poisson draws around
    that level, so behaviour drifts month to month and neighbour estimates
    must track it.

    With ``degrees`` given, activity scales as (degree/median_degree) **
    ``degree_bias``: well-connected accounts post much more, reproducing
    the degree-to-upload-count correlation real photo-sharing crawls show.
    Clearly labelled synthetic: none of this is measured data.
    """
    rng = np.random.default_rng(seed)
    rates = np.exp(rng.normal(np.log(median_monthly), sigma, size=n))
    if degrees is not None and degree_bias > 0.0:
        deg = np.asarray(degrees, dtype=np.float64)
        if len(deg) != n:
            raise DatasetError(f"{len(deg)} degrees for {n} nodes")
        med = max(float(np.median(deg)), 1.0)
        rates *= (np.maximum(deg, 1.0) / med) ** degree_bias
    out = []
    for node in range(n):
        counts = rng.poisson(rates[node], size=months)
        out.append(UploadBehaviour(node, tuple(int(c) for c in counts)))
    return out
