import contextlib
import csv
import io
import json
import os
import shutil
import tempfile
import unittest
from unittest import mock

from hyperagg import cli, models
from hyperagg.datasets import load_graph

from .graphs import fixture_path

QUICK = ['--set', 'model.hidden=8', '--set', 'model.mixing=4',
         '--set', 'experiment.max_epochs=3', '--set', 'experiment.patience=3']


class CliTestCase(unittest.TestCase):

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def path(self, *parts):
        return os.path.join(self.tmpdir, *parts)

    def run_cli(self, *argv):
        out, err = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            code = cli.main(list(argv))
        return code, out.getvalue(), err.getvalue()

    def read(self, *parts):
        with io.open(self.path(*parts), encoding='utf-8') as f:
            return f.read()

    def generate(self, name='sbm.hagraph', *extra):
        code, out, _ = self.run_cli('generate', '--n', '200', '--classes', '2',
                                    '--feat-dim', '4', '--output',
                                    self.path(name), *extra)
        self.assertEqual(code, 0)
        return self.path(name)


class TestGenerate(CliTestCase):

    def test_default_split(self):
        code, out, _ = self.run_cli('generate', '--n', '1000', '--classes',
                                    '4', '--output', self.path('g.hagraph'))
        self.assertEqual(code, 0)
        self.assertTrue(out.startswith('homophily '))
        lines = self.read('g.hagraph').split('\n')
        masks = lines[lines.index('MASKS') + 1:]
        self.assertEqual(masks.count('train'), 80)
        self.assertEqual(masks.count('val'), 120)

    def test_no_cross_edges(self):
        code, out, _ = self.run_cli('generate', '--n', '400', '--p-out', '0',
                                    '--output', self.path('g.hagraph'))
        self.assertEqual(code, 0)
        self.assertEqual(out.strip(), 'homophily 1.0000')

    def test_same_seed_same_file(self):
        self.generate('a.hagraph')
        self.generate('b.hagraph')
        self.assertEqual(self.read('a.hagraph'), self.read('b.hagraph'))

    def test_invalid_probability(self):
        code, _, err = self.run_cli('generate', '--p-in', '1.5', '--output',
                                    self.path('g.hagraph'))
        self.assertEqual(code, 2)
        self.assertIn('p_in', err)


class TestTrain(CliTestCase):

    def train(self, *extra):
        data = self.generate()
        return self.run_cli('train', '--data', data, '--seeds', '2',
                            '--output-dir', self.path('out'),
                            '--set', 'model.arch=MLP', *(QUICK + list(extra)))

    def test_smoke(self):
        code, out, _ = self.train('--omit-timing', '--set', 'model.mixing=32')
        self.assertEqual(code, 0)
        self.assertTrue(out.startswith('MLP sbm transductive '))
        rows = list(csv.reader(io.StringIO(
            self.read('out', 'MLP_sbm_transductive.csv'))))
        self.assertEqual(rows[0], ['seed', 'metric', 'epochs', 'seconds'])
        self.assertEqual([r[0] for r in rows[1:]], ['0', '1'])
        self.assertEqual([r[3] for r in rows[1:]], ['', ''])
        summary = json.loads(self.read('out', 'MLP_sbm_transductive.json'))
        self.assertEqual(summary['config']['model']['mixing'], 32)
        self.assertEqual(summary['config']['experiment']['seeds'], [0, 1])
        self.assertEqual(summary['metric'], 'accuracy')

    def test_omit_timing_is_reproducible(self):
        self.train('--omit-timing')
        first = self.read('out', 'MLP_sbm_transductive.csv')
        self.train('--omit-timing')
        self.assertEqual(self.read('out', 'MLP_sbm_transductive.csv'), first)

    def test_config_file(self):
        data = self.generate()
        config = self.path('ghc.ini')
        with io.open(config, 'w', encoding='utf-8') as f:
            f.write(u'[data]\npath = {0}\n\n[model]\narch = GHC\nhidden = 8\n'
                    u'mixing = 4\n\n[experiment]\nsetting = inductive_strict\n'
                    u'seeds = 4\nmax_epochs = 2\npatience = 2\n'.format(data))
        code, out, _ = self.run_cli('train', '--config', config,
                                    '--output-dir', self.path('out'))
        self.assertEqual(code, 0)
        self.assertTrue(out.startswith('GHC sbm inductive_strict '))
        self.assertTrue(os.path.exists(
            self.path('out', 'GHC_sbm_inductive_strict.json')))

    def test_save_params(self):
        code, _, _ = self.train('--save-params', self.path('mlp.ckpt'))
        self.assertEqual(code, 0)
        params = models.load_checkpoint(self.path('mlp.ckpt'))
        self.assertEqual(params.config.arch, 'MLP')
        self.assertEqual(params.in_features, 4)

    def test_missing_data_file(self):
        code, _, err = self.run_cli('train', '--data',
                                    self.path('absent.hagraph'),
                                    '--output-dir', self.path('out'))
        self.assertEqual(code, 3)
        self.assertIn('absent.hagraph', err)

    def test_malformed_data_file(self):
        with io.open(fixture_path(), 'rb') as f:
            data = f.read()
        cases = {'label.hagraph': data.replace(b'LABELS\n0\n', b'LABELS\n7\n'),
                 'bytes.hagraph': data.replace(b'EDGES', b'ED\xffGES')}
        for name, content in sorted(cases.items()):
            with io.open(self.path(name), 'wb') as f:
                f.write(content)
            code, _, err = self.run_cli('train', '--data', self.path(name),
                                        '--output-dir', self.path('out'))
            self.assertEqual(code, 3, name)
            self.assertIn('line', err)

    def test_missing_config_file(self):
        code, _, _ = self.run_cli('train', '--config', self.path('absent.ini'),
                                  '--synthetic', 'sbm')
        self.assertEqual(code, 2)

    def test_bad_config_value(self):
        code, _, err = self.train('--set', 'model.depth=0')
        self.assertEqual(code, 2)
        self.assertIn('model.depth', err)

    def test_unknown_config_key(self):
        code, _, err = self.train('--set', 'model.width=3')
        self.assertEqual(code, 2)
        self.assertIn('model.width', err)

    def test_fixture_with_unlabeled_vertex(self):
        code, out, _ = self.run_cli('train', '--data', fixture_path(),
                                    '--output-dir', self.path('out'),
                                    '--set', 'model.arch=GCN', *QUICK)
        self.assertEqual(code, 0)
        self.assertTrue(out.startswith('GCN five transductive '))

    def test_threads_variable(self):
        with mock.patch.dict(os.environ, {cli.THREADS_ENV: 'many'}):
            code, _, err = self.train()
        self.assertEqual(code, 2)
        self.assertIn(cli.THREADS_ENV, err)


class TestSweep(CliTestCase):

    def test_three_values(self):
        data = self.generate()
        code, out, _ = self.run_cli(
            'sweep', '--data', data, '--axis', 'hidden', '--values', '4,8,16',
            '--output-dir', self.path('out'), '--omit-timing',
            '--set', 'model.arch=MLP', *QUICK)
        self.assertEqual(code, 0)
        self.assertEqual(len(out.strip().split('\n')), 3)
        rows = list(csv.reader(io.StringIO(
            self.read('out', 'sweep_hidden.csv'))))
        self.assertEqual(rows[0][:3], ['axis', 'value', 'seed'])
        self.assertEqual([r[1] for r in rows[1:]], ['4', '8', '16'])
        summary = list(csv.reader(io.StringIO(
            self.read('out', 'sweep_hidden_summary.csv'))))
        self.assertEqual(len(summary), 4)
        self.assertEqual(summary[2][4], '0.0')

    def test_empty_axis(self):
        data = self.generate()
        code, _, err = self.run_cli('sweep', '--data', data, '--axis',
                                    'hidden', '--values', ',',
                                    '--output-dir', self.path('out'))
        self.assertEqual(code, 2)
        self.assertIn('empty sweep axis', err)


class TestGradcheck(CliTestCase):

    def test_passes(self):
        for arch in ('GHC', 'GHM', 'GCN', 'MLP'):
            code, out, _ = self.run_cli('gradcheck', '--arch', arch)
            self.assertEqual(code, 0, out)
            self.assertEqual(out.strip().split('\n')[-1], 'PASS')

    def test_corrupted_matmul_fails(self):
        code, out, _ = self.run_cli('gradcheck', '--arch', 'GHC', '--corrupt',
                                    'matmul')
        self.assertEqual(code, 4)
        self.assertEqual(out.strip().split('\n')[-1], 'FAIL')

    def test_corrupting_unknown_operation(self):
        code, out, err = self.run_cli('gradcheck', '--corrupt', 'nosuchop')
        self.assertEqual(code, 2)
        self.assertIn('nosuchop', err)
        self.assertNotIn('PASS', out)

    def test_corrupting_operation_the_arch_skips(self):
        code, out, err = self.run_cli('gradcheck', '--arch', 'MLP',
                                      '--corrupt', 'spmm')
        self.assertEqual(code, 2)
        self.assertIn('--corrupt: spmm does not occur', err)
        self.assertNotIn('PASS', out)

    def test_rejects_other_sections(self):
        code, _, _ = self.run_cli('gradcheck', '--set', 'data.n=3')
        self.assertEqual(code, 2)


class TestParser(unittest.TestCase):

    def test_command_required(self):
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit) as ctx:
                cli.main([])
        self.assertEqual(ctx.exception.code, 2)

    def test_data_sources_are_exclusive(self):
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit):
                cli.main(['train', '--data', 'a', '--synthetic', 'sbm'])

    def test_fixture_loads(self):
        self.assertEqual(load_graph(fixture_path()).num_vertices, 5)


if __name__ == '__main__':
    unittest.main()
