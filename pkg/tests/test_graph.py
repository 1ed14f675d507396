import unittest

import numpy as np

from hyperagg.exceptions import ConfigError, DataError
from hyperagg.graph import (
    PRODUCTION, STRICT, add_self_loops, edge_homophily, from_edges,
    gcn_adjacency, graph_masks, induced_subgraph, inductive_split,
    make_undirected, neighborhood_1hop, one_hop_index, remove_self_loops,
    sample_khop)
from hyperagg.oracles import DenseOracleGraph

from .graphs import (
    directed_random_graph, path_graph, star_graph, two_graph_dataset)


def edge_set(g):
    src, dst = g.edges()
    return set(zip(src.tolist(), dst.tolist()))


def oracle(g):
    src, dst = g.edges()
    return DenseOracleGraph.from_edges(g.num_vertices,
                                       zip(src.tolist(), dst.tolist()))


class TestGraph(unittest.TestCase):

    def test_from_edges_is_canonical(self):
        g = from_edges(3, [2, 0, 0, 2], [0, 2, 1, 0],
                       features=np.zeros((3, 1)))
        self.assertEqual(g.csr_offsets.tolist(), [0, 2, 2, 3])
        self.assertEqual(g.csr_targets.tolist(), [1, 2, 0])
        self.assertEqual(g.num_edges, 3)

    def test_rejects_bad_csr(self):
        with self.assertRaises(DataError):
            from_edges(2, [0], [2], features=np.zeros((2, 1)))

    def test_masks_must_be_disjoint(self):
        with self.assertRaises(DataError):
            from_edges(2, [], [], features=np.zeros((2, 1)),
                       train_mask=[True, False], test_mask=[True, False])

    def test_no_edges_between_graphs(self):
        with self.assertRaises(DataError):
            from_edges(3, [0], [2], features=np.zeros((3, 1)),
                       graph_ids=[0, 0, 1])

    def test_arrays_are_frozen(self):
        g = path_graph(3)
        with self.assertRaises(ValueError):
            g.csr_targets[0] = 2

    def test_replace_keeps_the_original(self):
        g = path_graph(3)
        h = g.replace(test_mask=[False, False, True],
                      train_mask=[True, True, False])
        self.assertTrue(g.train_mask.all())
        self.assertFalse(h.train_mask[2])


class TestTransforms(unittest.TestCase):

    def test_undirected_single_edge(self):
        g = make_undirected(from_edges(2, [0], [1], features=np.zeros((2, 1))))
        self.assertEqual(edge_set(g), set([(0, 1), (1, 0)]))

    def test_undirected_is_idempotent(self):
        g = make_undirected(directed_random_graph(12, seed=1))
        self.assertEqual(edge_set(make_undirected(g)), edge_set(g))

    def test_undirected_matches_dense_symmetrization(self):
        for seed in range(5):
            g = directed_random_graph(20, seed=seed)
            dense = oracle(g).symmetrize()
            expected = set((u, v) for u in range(20) for v in range(20)
                           if dense.has_edge(u, v))
            self.assertEqual(edge_set(make_undirected(g)), expected)

    def test_edgeless_self_loops(self):
        g = add_self_loops(from_edges(3, [], [], features=np.zeros((3, 1))))
        self.assertEqual(g.num_edges, 3)

    def test_add_then_remove(self):
        g = remove_self_loops(directed_random_graph(10, seed=2))
        self.assertEqual(edge_set(remove_self_loops(add_self_loops(g))),
                         edge_set(g))

    def test_self_loops_add_one_degree(self):
        g = remove_self_loops(directed_random_graph(15, seed=3))
        looped = add_self_loops(g)
        np.testing.assert_array_equal(looped.degrees(), g.degrees() + 1)
        self.assertEqual(edge_set(add_self_loops(looped)), edge_set(looped))

    def test_transforms_are_pure(self):
        g = directed_random_graph(8, seed=4)
        before = edge_set(g)
        make_undirected(g)
        add_self_loops(g)
        self.assertEqual(edge_set(g), before)


class TestNeighborhoods(unittest.TestCase):

    def test_isolated_vertex_falls_back_to_root(self):
        g = from_edges(3, [0], [1], features=np.zeros((3, 1)))
        n = neighborhood_1hop(g, 2)
        self.assertEqual(n.members.tolist(), [2])
        self.assertEqual(n.root_position, 0)

    def test_star_center(self):
        n = neighborhood_1hop(star_graph(3), 0)
        self.assertEqual(set(n.members.tolist()), set([0, 1, 2, 3]))
        self.assertEqual(n.members[n.root_position], 0)

    def test_matches_dense_rows(self):
        for seed in range(3):
            g = directed_random_graph(50, seed=seed, p=0.05)
            dense = oracle(g)
            for v in range(g.num_vertices):
                n = neighborhood_1hop(g, v)
                self.assertEqual(sorted(n.members.tolist()),
                                 sorted(dense.one_hop(v)))
                self.assertEqual(n.members[n.root_position], v)

    def test_one_hop_index(self):
        g = path_graph(4)
        index = one_hop_index(g)
        self.assertEqual(index.segments.sizes.tolist(), [2, 3, 3, 2])
        self.assertEqual(index.members[index.root_rows].tolist(),
                         [0, 1, 2, 3])
        self.assertTrue(one_hop_index(g) is index)


class TestSampleKhop(unittest.TestCase):

    def test_cap_one(self):
        n = sample_khop(path_graph(5), 2, 3, 1, np.random.default_rng(0))
        self.assertEqual(n.members.tolist(), [2])

    def test_path_by_hand(self):
        n = sample_khop(path_graph(5), 2, 2, None, np.random.default_rng(0))
        self.assertEqual(set(n.members.tolist()), set(range(5)))
        self.assertEqual(n.members[0], 2)

    def test_capped_sample_is_subset(self):
        g = make_undirected(directed_random_graph(40, seed=5, p=0.1))
        dense = oracle(g)
        rng = np.random.default_rng(1)
        for v in range(0, 40, 5):
            full = dense.khop(v, 2)
            cap = max(1, len(full) - 2)
            n = sample_khop(g, v, 2, cap, rng)
            self.assertEqual(len(n), min(cap, len(full)))
            self.assertTrue(set(n.members.tolist()) <= full)
            self.assertEqual(n.members[0], v)
            self.assertEqual(len(set(n.members.tolist())), len(n))

    def test_unbounded_equals_bfs(self):
        g = make_undirected(directed_random_graph(30, seed=6, p=0.08))
        dense = oracle(g)
        for v in range(30):
            for seed in (0, 1):
                n = sample_khop(g, v, 3, None, np.random.default_rng(seed))
                self.assertEqual(set(n.members.tolist()), dense.khop(v, 3))

    def test_invalid_parameters(self):
        g = path_graph(3)
        with self.assertRaises(ConfigError):
            sample_khop(g, 0, 0, None, None)
        with self.assertRaises(ConfigError):
            sample_khop(g, 0, 1, 0, None)


class TestGcnAdjacency(unittest.TestCase):

    def test_two_vertices(self):
        g = add_self_loops(make_undirected(
            from_edges(2, [0], [1], features=np.zeros((2, 1)))))
        np.testing.assert_allclose(gcn_adjacency(g).toarray(),
                                   [[0.5, 0.5], [0.5, 0.5]])

    def test_matches_dense_oracle(self):
        g = add_self_loops(make_undirected(directed_random_graph(12, seed=7)))
        np.testing.assert_allclose(gcn_adjacency(g).toarray(),
                                   oracle(g).gcn_normalized(), atol=1e-14)

    def test_zero_degree(self):
        g = from_edges(2, [0], [0], features=np.zeros((2, 1)))
        with self.assertRaises(DataError) as ctx:
            gcn_adjacency(g)
        self.assertIn('add_self_loops', str(ctx.exception))


class TestSplits(unittest.TestCase):

    def triangle(self):
        return from_edges(3, [0, 1, 0, 2, 1, 2], [1, 0, 2, 0, 2, 1],
                          features=np.arange(3.0).reshape(3, 1),
                          labels=[0, 1, 0], num_classes=2,
                          train_mask=[True, True, False],
                          test_mask=[False, False, True])

    def test_strict_by_hand(self):
        train, full = inductive_split(self.triangle(), STRICT)
        self.assertEqual(train.num_vertices, 2)
        self.assertEqual(train.num_edges, 2)
        self.assertEqual(edge_set(train), set([(0, 1), (1, 0)]))
        self.assertEqual(full.num_vertices, 3)

    def test_strict_has_only_train_vertices(self):
        g = make_undirected(directed_random_graph(30, seed=8))
        g = g.replace(train_mask=np.arange(30) % 3 == 0,
                      test_mask=np.arange(30) % 3 == 1)
        train, _ = inductive_split(g, STRICT)
        self.assertTrue(np.all(g.train_mask[train.original_ids]))
        src, dst = train.edges()
        for u, v in zip(train.original_ids[src], train.original_ids[dst]):
            self.assertIn(v, g.neighbors(u))

    def test_production_counts(self):
        g = path_graph(30).replace(
            train_mask=np.arange(30) < 5,
            val_mask=(np.arange(30) >= 5) & (np.arange(30) < 10),
            test_mask=np.arange(30) >= 10)
        train, full = inductive_split(g, PRODUCTION,
                                      np.random.default_rng(0))
        self.assertEqual(full.observed_mask.sum(), 16)
        self.assertEqual(full.test_mask.sum(), 4)
        self.assertFalse(np.any(full.observed_mask & full.test_mask))
        self.assertEqual(train.num_vertices, 26)

    def test_production_needs_rng(self):
        with self.assertRaises(ConfigError):
            inductive_split(path_graph(3), PRODUCTION)

    def test_empty_train_graph_warns(self):
        g = path_graph(3).replace(train_mask=[False] * 3)
        with self.assertLogs('hyperagg.graph', level='WARNING'):
            train, _ = inductive_split(g, STRICT)
        self.assertEqual(train.num_vertices, 0)

    def test_induced_subgraph_keeps_ids(self):
        sub = induced_subgraph(path_graph(5), [4, 2, 3])
        self.assertEqual(sub.original_ids.tolist(), [2, 3, 4])
        self.assertEqual(edge_set(sub), set([(0, 1), (1, 0), (1, 2),
                                             (2, 1)]))


class TestStatistics(unittest.TestCase):

    def test_homophily(self):
        g = from_edges(3, [0, 1, 1, 2], [1, 0, 2, 1],
                       features=np.zeros((3, 1)), labels=[0, 0, 1],
                       num_classes=2)
        self.assertEqual(edge_homophily(g), 0.5)

    def test_homophily_ignores_loops(self):
        g = add_self_loops(from_edges(2, [], [], features=np.zeros((2, 1)),
                                      labels=[0, 1], num_classes=2))
        self.assertTrue(np.isnan(edge_homophily(g)))

    def test_graph_masks(self):
        masks = graph_masks(two_graph_dataset())
        self.assertEqual(masks['train'].tolist(), [True, False])
        self.assertEqual(masks['val'].tolist(), [False, True])
        self.assertEqual(masks['test'].tolist(), [False, False])

    def test_graph_masks_disagreement(self):
        g = two_graph_dataset().replace(
            train_mask=[True, False, False, False, False],
            val_mask=[False, False, True, True, True])
        with self.assertRaises(DataError):
            graph_masks(g)


if __name__ == '__main__':
    unittest.main()
