import contextlib
import importlib
import io
import os
import sys
import unittest
from unittest import mock

from hyperagg.harness import Summary

BENCHMARKS = os.path.join(os.path.dirname(os.path.dirname(
    os.path.abspath(__file__))), 'benchmarks')


def load_benchmark(name):
    if BENCHMARKS not in sys.path:
        sys.path.insert(0, BENCHMARKS)
    return importlib.import_module(name)


class TestHomophily(unittest.TestCase):

    def setUp(self):
        self.bm = load_benchmark('bm_homophily')

    def means(self, heterophilic_ghc):
        return {('homophilic', 'GHC'): 0.9, ('homophilic', 'GCN'): 0.88,
                ('homophilic', 'MLP'): 0.6,
                ('heterophilic', 'GHC'): heterophilic_ghc,
                ('heterophilic', 'GCN'): 0.3,
                ('heterophilic', 'MLP'): 0.6}

    def check(self, means):
        with contextlib.redirect_stdout(io.StringIO()) as out:
            return self.bm.check(means), out.getvalue()

    def test_check(self):
        ok, out = self.check(self.means(0.59))
        self.assertTrue(ok)
        self.assertNotIn('FAIL', out)
        ok, out = self.check(self.means(0.5))
        self.assertFalse(ok)
        self.assertIn('heterophilic GHC - MLP: -10.00 points FAIL', out)

    def test_every_arch_has_a_budget(self):
        self.assertEqual(sorted(self.bm.BUDGETS), sorted(self.bm.ARCHS))
        seeds, max_epochs, patience = self.bm.BUDGETS['GHC']
        self.assertLessEqual(len(seeds) * max_epochs,
                             len(self.bm.SEEDS) * 100)
        self.assertLess(patience, max_epochs)

    def run_main(self, heterophilic_ghc):
        means = self.means(heterophilic_ghc)

        def fake_benchmark(spec, graph, label):
            mean = means[label, spec.model.arch]
            return Summary(mean, 0.0, len(spec.seeds), []), 0.0

        with mock.patch.object(self.bm, 'benchmark', fake_benchmark), \
                mock.patch.object(self.bm, 'write_csv') as write_csv, \
                mock.patch.object(self.bm.DataSpec, 'load'), \
                contextlib.redirect_stdout(io.StringIO()):
            code = self.bm.main()
        self.assertEqual(len(write_csv.call_args[0][2]), 6)
        return code

    def test_exit_code_follows_check(self):
        self.assertEqual(self.run_main(0.59), 0)
        self.assertEqual(self.run_main(0.5), 1)


if __name__ == '__main__':
    unittest.main()
