"""Graph construction, dataset ingestion, schedules, and local views."""

import io
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covertcast.delay_model import DelayDistribution
from covertcast.social_graph import (
    DatasetError,
    SocialGraph,
    UploadBehaviour,
    degree_upload_correlation,
    generate_ba,
    inter_upload_hours,
    load_dataset,
    local_view,
    map_uploads,
    serialize_dataset,
    synthetic_behaviours,
    upload_schedule,
)


def make_dataset(edges_text, uploads_text, months=64):
    return load_dataset(io.StringIO(edges_text), io.StringIO(uploads_text), months=months)


def counts_row(node, counts, months=64):
    full = list(counts) + [0] * (months - len(counts))
    return f"{node}," + ",".join(map(str, full))


class TestSocialGraph:
    def test_rejects_self_loop(self):
        with pytest.raises(DatasetError):
            SocialGraph(2, [(0, 0)])

    def test_undirected_symmetry(self):
        g = SocialGraph(3, [(0, 1), (1, 2)])
        assert 0 in g.neighbours(1) and 1 in g.neighbours(0)
        assert g.has_edge(2, 1) and g.has_edge(1, 2)

    def test_duplicate_edges_collapse(self):
        g = SocialGraph(2, [(0, 1), (1, 0), (0, 1)])
        assert g.edge_count() == 1


class TestLoadDataset:
    def test_two_node_file(self):
        got = make_dataset("0,1\n", counts_row(0, [3]) + "\n" + counts_row(1, [5]) + "\n")
        assert got.graph.n == 2 and got.graph.edge_count() == 1
        assert got.behaviours[0].monthly_counts[0] == 3
        assert got.report.missing_behaviour_nodes == []

    def test_header_rows_skipped(self):
        got = make_dataset(
            "node_a,node_b\n0,1\n",
            "node_id," + ",".join(f"m{i}" for i in range(1, 65)) + "\n" + counts_row(0, [1]) + "\n" + counts_row(1, [2]) + "\n",
        )
        assert got.graph.edge_count() == 1

    def test_duplicate_edge_rows_idempotent(self):
        got = make_dataset("0,1\n1,0\n0,1\n", counts_row(0, [1]) + "\n" + counts_row(1, [1]) + "\n")
        assert got.graph.edge_count() == 1
        assert got.report.duplicate_edge_rows == 2

    def test_malformed_edge_row_reports_line(self):
        with pytest.raises(DatasetError, match="line 2"):
            make_dataset("0,1\n0,x\n", counts_row(0, [1]) + "\n")

    def test_malformed_uploads_row_reports_line(self):
        with pytest.raises(DatasetError, match="line 1"):
            make_dataset("0,1\n", "0,1,2\n")

    def test_missing_behaviour_rows_zero_filled_and_flagged(self):
        got = make_dataset("0,1\n", counts_row(0, [4]) + "\n")
        assert got.behaviours[1].monthly_counts == (0,) * 64
        assert got.report.missing_behaviour_nodes == [1]

    def test_sparse_original_ids_remapped_dense(self):
        got = make_dataset(
            "10,99\n", counts_row(10, [1]) + "\n" + counts_row(99, [2]) + "\n"
        )
        assert got.graph.n == 2
        assert got.graph.original_ids == ("10", "99")

    def test_uploads_only_node_is_isolated(self):
        got = make_dataset(
            "0,1\n",
            "\n".join(counts_row(i, [1]) for i in (0, 1, 2)) + "\n",
        )
        assert got.graph.n == 3
        assert got.graph.degree(2) == 0
        assert got.report.isolated_nodes == 1

    def test_roundtrip_identity(self):
        got = make_dataset(
            "0,1\n1,2\n",
            "\n".join(counts_row(i, [i + 1, 2 * i]) for i in (0, 1, 2)) + "\n",
        )
        edges_out, uploads_out = io.StringIO(), io.StringIO()
        serialize_dataset(got.graph, got.behaviours, edges_out, uploads_out)
        again = make_dataset(edges_out.getvalue(), uploads_out.getvalue())
        assert again.graph.edges() == got.graph.edges()
        assert again.behaviours == got.behaviours


class TestGenerateBa:
    def test_m1_yields_tree(self):
        g = generate_ba(10, 1, seed=3)
        assert g.n == 10 and g.edge_count() == 9

    def test_exact_edge_count(self):
        n, m = 200, 5
        g = generate_ba(n, m, seed=1)
        assert g.edge_count() == m * (m - 1) // 2 + m * (n - m)

    def test_deterministic_per_seed(self):
        assert generate_ba(150, 3, seed=9).edges() == generate_ba(150, 3, seed=9).edges()
        assert generate_ba(150, 3, seed=9).edges() != generate_ba(150, 3, seed=10).edges()

    def test_rejects_bad_params(self):
        with pytest.raises(DatasetError):
            generate_ba(5, 5, seed=0)
        with pytest.raises(DatasetError):
            generate_ba(10, 0, seed=0)

    def test_connected(self):
        g = generate_ba(300, 2, seed=4)
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w in g.neighbours(v):
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        assert len(seen) == g.n

    def test_degree_tail_power_law(self):
        # Pool degrees over 10 seeds and fit the tail exponent by MLE;
        # preferential attachment should land near 3.
        m = 5
        degrees = []
        for seed in range(10):
            g = generate_ba(2000, m, seed=seed)
            degrees.extend(int(d) for d in g.degrees())
        d = np.array([x for x in degrees if x >= m], dtype=np.float64)
        alpha = 1.0 + d.size / np.log(d / (m - 0.5)).sum()
        assert 2.3 < alpha < 3.8


class TestMapUploads:
    def test_identity_by_index(self):
        g = SocialGraph(3, [(0, 1), (1, 2)])
        behs = [UploadBehaviour(i, (i,)) for i in range(3)]
        assignment = map_uploads(g, behs)
        assert assignment[2].monthly_counts == (2,)

    def test_too_few_records(self):
        g = SocialGraph(3, [(0, 1)])
        with pytest.raises(DatasetError):
            map_uploads(g, [UploadBehaviour(0, (1,))])

    def test_permutation_deterministic(self):
        g = SocialGraph(4, [(0, 1), (1, 2), (2, 3)])
        behs = [UploadBehaviour(i, (i,)) for i in range(4)]
        a = map_uploads(g, behs, permute_seed=5)
        b = map_uploads(g, behs, permute_seed=5)
        assert a == b
        assert a != map_uploads(g, behs)

    def test_degree_upload_correlation_runs(self):
        g = generate_ba(50, 2, seed=0)
        assignment = map_uploads(g, synthetic_behaviours(50, months=4, seed=1))
        assert -1.0 <= degree_upload_correlation(g, assignment) <= 1.0


class TestInterUploadHours:
    def test_values(self):
        assert inter_upload_hours(720) == pytest.approx(1.0)
        assert inter_upload_hours(30) == pytest.approx(24.0)
        assert inter_upload_hours(1) == pytest.approx(720.0)

    def test_zero_is_inactive_marker(self):
        assert inter_upload_hours(0) is None


class TestUploadSchedule:
    def test_thirty_is_daily(self):
        sched = upload_schedule(UploadBehaviour(0, (30,)))
        assert sched == [(d, 1) for d in range(30)]

    def test_fifteen_every_second_day(self):
        sched = upload_schedule(UploadBehaviour(0, (15,)))
        assert sched == [(2 * k, 1) for k in range(15)]

    def test_zero_month_empty(self):
        assert upload_schedule(UploadBehaviour(0, (0, 2))) == [(30, 1), (45, 1)]

    def test_over_thirty_spreads_remainder(self):
        sched = dict(upload_schedule(UploadBehaviour(0, (75,))))
        assert sum(sched.values()) == 75
        assert set(sched.values()) <= {2, 3}

    @given(st.lists(st.integers(0, 400), min_size=1, max_size=8))
    @settings(max_examples=60, deadline=None)
    def test_monthly_totals_conserved(self, counts):
        beh = UploadBehaviour(0, tuple(counts))
        sched = upload_schedule(beh)
        for month, count in enumerate(counts):
            got = sum(c for d, c in sched if month * 30 <= d < (month + 1) * 30)
            assert got == count


class TestLocalView:
    def test_isolated_node(self):
        g = SocialGraph(2, [])
        view = local_view(g, 0, {})
        assert view.neighbours == frozenset()

    def test_star_center_sees_leaf_friend_lists(self):
        g = SocialGraph(4, [(0, 1), (0, 2), (0, 3)])
        view = local_view(g, 0, {})
        assert view.neighbours == {1, 2, 3}
        assert view.neighbours_of_neighbours[1] == {0}

    def test_two_hop_bound_on_path(self):
        g = SocialGraph(4, [(0, 1), (1, 2), (2, 3)])
        view = local_view(g, 0, {})
        visible = set(view.neighbours)
        for friends in view.neighbours_of_neighbours.values():
            visible |= friends
        assert 3 not in visible  # three hops away: invisible
        # ...but a friend's friend (exactly two hops) is legitimately known.
        view_b = local_view(g, 1, {})
        assert 3 in view_b.neighbours_of_neighbours[2]

    def test_unknown_node(self):
        with pytest.raises(DatasetError):
            local_view(SocialGraph(2, [(0, 1)]), 5, {})

    def test_distributions_limited_to_neighbours(self):
        g = SocialGraph(3, [(0, 1)])
        ests = {1: DelayDistribution.delta(24), 2: DelayDistribution.delta(48)}
        view = local_view(g, 0, ests)
        assert set(view.neighbour_distributions) == {1}

    @given(st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_never_leaks_beyond_two_hops(self, seed):
        rng = random.Random(seed)
        n = rng.randrange(5, 25)
        edges = [
            (a, b)
            for a in range(n)
            for b in range(a + 1, n)
            if rng.random() < 0.15
        ]
        g = SocialGraph(n, edges)
        center = rng.randrange(n)
        view = local_view(g, center, {})
        two_hops = set(g.neighbours(center))
        for nb in g.neighbours(center):
            two_hops |= set(g.neighbours(nb))
        visible = set(view.neighbours)
        for nb, friends in view.neighbours_of_neighbours.items():
            visible |= friends
        assert visible <= two_hops | {center}


class TestSyntheticBehaviours:
    def test_deterministic(self):
        assert synthetic_behaviours(20, months=6, seed=3) == synthetic_behaviours(
            20, months=6, seed=3
        )

    def test_median_activity_near_daily(self):
        behs = synthetic_behaviours(4000, months=12, seed=0)
        per_month = np.array([b.monthly_counts for b in behs], dtype=float).mean(axis=1)
        median = float(np.median(per_month))
        assert 20 < median < 45  # about one upload per day

    def test_shape(self):
        behs = synthetic_behaviours(5, months=7, seed=1)
        assert len(behs) == 5
        assert all(len(b.monthly_counts) == 7 for b in behs)
