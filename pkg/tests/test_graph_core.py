import unittest

import networkx as nx
import numpy as np

from mtcool.domain import DomainError, DominationError, EdgeListError, GraphSizeError
from mtcool.graph_core import (
    GraphTopology,
    TaskMatrix,
    clique_union,
    complete_graph,
    cycle_graph,
    dominating_delegation,
    empty_graph,
    erdos_renyi,
    graph_stats,
    is_dominating,
    laplacian,
    parse_edge_list,
    path_graph,
    random_regular,
    task_variance,
    variance_profile,
)


class TopologyTests(unittest.TestCase):
    def test_neighborhoods_are_sorted_and_self_inclusive(self):
        graph = GraphTopology(3, frozenset({(1, 0), (2, 1)}))

        self.assertEqual(graph.neighborhoods, ((0, 1), (0, 1, 2), (1, 2)))
        self.assertEqual((graph.n_min, graph.n_max), (2, 3))
        self.assertEqual(graph.edges, frozenset({(0, 1), (1, 2)}))

    def test_rejects_self_loops_and_out_of_range_edges(self):
        for edges in ({(1, 1)}, {(0, 3)}):
            with self.subTest(edges=edges):
                with self.assertRaises(DomainError):
                    GraphTopology(3, frozenset(edges))

    def test_networkx_round_trip_preserves_edges(self):
        graph = erdos_renyi(9, 0.4, seed=3)

        self.assertEqual(GraphTopology.from_networkx(graph.to_networkx()), graph)

    def test_from_neighborhoods_rejects_asymmetry(self):
        with self.assertRaises(DomainError):
            GraphTopology.from_neighborhoods([(0, 1), (1,)])

    def test_regular_degree(self):
        self.assertEqual(cycle_graph(6).regular_degree, 2)
        self.assertEqual(random_regular(3, 8, seed=1).regular_degree, 3)
        self.assertIsNone(path_graph(4).regular_degree)

    def test_erdos_renyi_is_deterministic_per_seed(self):
        self.assertEqual(erdos_renyi(12, 0.5, seed=7), erdos_renyi(12, 0.5, seed=7))

    def test_laplacian_is_degree_minus_adjacency(self):
        graph = path_graph(4)
        expected = np.diag([1.0, 2.0, 2.0, 1.0]) - graph.adjacency_matrix()

        np.testing.assert_array_equal(laplacian(graph), expected)

    def test_laplacian_is_positive_semidefinite(self):
        rng = np.random.default_rng(11)
        for seed in range(100):
            graph = erdos_renyi(int(rng.integers(2, 15)), float(rng.uniform(0.1, 0.9)), seed=seed)

            with self.subTest(seed=seed):
                self.assertGreaterEqual(float(np.linalg.eigvalsh(laplacian(graph)).min()), -1e-10)

    def test_erdos_renyi_edge_count_concentrates(self):
        counts = np.array([len(erdos_renyi(30, 0.9, seed=seed).edges) for seed in range(200)])
        spread = np.sqrt(435 * 0.9 * 0.1)

        self.assertTrue(np.all(np.abs(counts - 391.5) <= 5 * spread))
        self.assertAlmostEqual(float(counts.mean()), 391.5, delta=2.0)


class EdgeListTests(unittest.TestCase):
    def test_parses_header_edges_and_comments(self):
        text = "# triangle plus a leaf\nn=4\n0 1\n1 2  # inline\n\n0 2\n2 3\n"

        graph = parse_edge_list(text)

        self.assertEqual(graph.n, 4)
        self.assertEqual(graph.edges, frozenset({(0, 1), (1, 2), (0, 2), (2, 3)}))
        self.assertEqual(parse_edge_list(graph.to_edge_list()), graph)

    def test_malformed_lines_report_their_line_number(self):
        cases = {
            "n=3\n0 1\n1 x\n": 3,
            "0 1\n": 1,
            "n=3\n0 1 2\n": 2,
            "n=3\n\n# note\n2 2\n": 4,
            "": 1,
        }
        for text, line_number in cases.items():
            with self.subTest(text=text):
                with self.assertRaises(EdgeListError) as caught:
                    parse_edge_list(text)
                self.assertEqual(caught.exception.line_number, line_number)
                self.assertIn(f"line {line_number}", str(caught.exception))


class GraphStatsTests(unittest.TestCase):
    def test_named_families(self):
        cases = [
            ("complete 5", complete_graph(5), (1, 1, 1)),
            ("path 4", path_graph(4), (2, 2, 2)),
            ("cycle 5", cycle_graph(5), (2, 2, 1)),
            ("empty 3", empty_graph(3), (3, 3, 3)),
            ("two cliques", clique_union([3, 2]), (2, 2, 2)),
        ]
        for name, graph, expected in cases:
            with self.subTest(name):
                stats = graph_stats(graph)
                self.assertEqual((stats.alpha, stats.gamma, stats.alpha2), expected)
                self.assertFalse(stats.approximate)

    def test_invariant_chain_on_small_random_graphs(self):
        rng = np.random.default_rng(2024)
        for trial in range(500):
            n = int(rng.integers(1, 8))
            p = float(rng.uniform(0.0, 1.0))
            graph = erdos_renyi(n, p, seed=trial)
            stats = graph_stats(graph)
            with self.subTest(trial=trial, n=n):
                self.assertLessEqual(stats.alpha2, stats.gamma)
                self.assertLessEqual(stats.gamma, stats.alpha)
                self.assertLessEqual(stats.alpha, n)

    def test_witness_sets_have_their_properties(self):
        graph = erdos_renyi(10, 0.35, seed=11)
        stats = graph_stats(graph)
        nx_graph = graph.to_networkx()
        distances = dict(nx.all_pairs_shortest_path_length(nx_graph))

        self.assertTrue(is_dominating(graph, stats.dominating_set))
        for a in stats.independent_set:
            for b in stats.independent_set:
                self.assertFalse(nx_graph.has_edge(a, b))
        for a in stats.twice_independent_set:
            for b in stats.twice_independent_set:
                if a != b:
                    self.assertGreaterEqual(distances[a].get(b, graph.n + 1), 3)

    def test_large_graphs_fall_back_to_flagged_greedy_values(self):
        graph = erdos_renyi(20, 0.3, seed=1)

        with self.assertLogs("mtcool.graph_core", level="WARNING"):
            stats = graph_stats(graph)

        self.assertTrue(stats.approximate)
        self.assertTrue(is_dominating(graph, stats.dominating_set))
        with self.assertRaises(GraphSizeError):
            graph_stats(graph, exact=True)

    def test_delegation_picks_smallest_dominator(self):
        graph = path_graph(4)

        self.assertEqual(dominating_delegation(graph, (1, 2)), (1, 1, 1, 2))
        with self.assertRaises(DominationError) as caught:
            dominating_delegation(graph, (0,))
        self.assertEqual(caught.exception.vertex, 2)


class TaskMatrixTests(unittest.TestCase):
    def test_rows_must_lie_in_the_unit_ball(self):
        with self.assertRaises(DomainError):
            TaskMatrix(np.array([[0.6, 0.9]]))

    def test_rows_are_read_only(self):
        tasks = TaskMatrix(np.zeros((2, 3)))

        with self.assertRaises(ValueError):
            tasks.rows[0, 0] = 1.0

    def test_task_variance_matches_pairwise_form(self):
        rows = np.random.default_rng(5).uniform(-0.3, 0.3, size=(6, 4))
        n = rows.shape[0]
        pairwise = sum(
            float(np.sum((rows[i] - rows[j]) ** 2)) for i in range(n) for j in range(n)
        ) / (2 * n * (n - 1))

        self.assertAlmostEqual(task_variance(rows), pairwise, places=12)
        self.assertAlmostEqual(task_variance(np.array([[1.0, 0.0], [-1.0, 0.0]])), 2.0)
        self.assertEqual(task_variance(np.ones((1, 3))), 0.0)

    def test_variance_profile_on_a_path(self):
        tasks = TaskMatrix(np.array([[0.0], [0.2], [0.6]]))
        profile = variance_profile(tasks, path_graph(3))

        self.assertAlmostEqual(profile.sigma_local[0], 0.02)
        self.assertAlmostEqual(profile.sigma_local[2], 0.08)
        self.assertAlmostEqual(profile.sigma_max, profile.sigma_local[1])
        self.assertAlmostEqual(profile.delta_sq, 0.16)
        self.assertAlmostEqual(profile.sigma_bar_std, np.sqrt(profile.sigma_bar / profile.d))

    def test_task_variance_bound(self):
        rng = np.random.default_rng(12)
        for trial in range(100):
            n = int(rng.integers(2, 12))
            raw = rng.normal(size=(n, 3)) * rng.uniform(0.1, 3.0)
            rows = raw / np.maximum(1.0, np.linalg.norm(raw, axis=1, keepdims=True))

            with self.subTest(trial=trial):
                self.assertLessEqual(task_variance(rows), min(8.0, 2 * n / (n - 1)) + 1e-12)
        for n in (2, 3, 6):
            antipodal = np.array([[(-1.0) ** i, 0.0] for i in range(n)])
            self.assertLessEqual(task_variance(antipodal), 2 * n / (n - 1) + 1e-12)

    def test_pair_of_opposite_tasks(self):
        tasks = TaskMatrix(np.array([[1.0, 0.0], [-1.0, 0.0]]))
        profile = variance_profile(tasks, complete_graph(2))

        self.assertAlmostEqual(profile.sigma_global, 2.0)
        self.assertAlmostEqual(profile.sigma_local[0], 2.0)
        self.assertAlmostEqual(profile.delta_sq, 4.0)

    def test_average_deviation_is_per_coordinate(self):
        column = np.array([[0.0], [0.2], [0.6]])
        narrow = variance_profile(TaskMatrix(column), path_graph(3))
        wide = variance_profile(TaskMatrix(np.hstack([column, column])), path_graph(3))

        self.assertAlmostEqual(wide.sigma_bar, 2 * narrow.sigma_bar)
        self.assertAlmostEqual(wide.sigma_bar_std, narrow.sigma_bar_std)
        self.assertEqual(wide.d, 2)

    def test_complete_graph_local_variance_is_global(self):
        tasks = TaskMatrix(np.random.default_rng(1).uniform(-0.5, 0.5, size=(5, 2)))
        profile = variance_profile(tasks, complete_graph(5))

        for local in profile.sigma_local:
            self.assertAlmostEqual(local, profile.sigma_global, places=12)


if __name__ == "__main__":
    unittest.main()
