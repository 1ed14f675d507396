"""Cora in HAGRAPH format, 20 train and 30 validation vertices per class.

Usage: ``python benchmarks/bm_cora.py path/to/cora.hagraph``
"""
import sys

from hyperagg import harness
from hyperagg.config import DataSpec, ExperimentSpec, ModelConfig
from utils import benchmark, write_csv

SEEDS = list(range(10))
TOLERANCE = 4.0
REFERENCE = {'GHC': 78.85, 'GCN': 78.43}

CONFIGS = {
    'GHC': dict(arch='GHC', hidden=256, mixing=64, model_dropout=0.6,
                mixing_dropout=0.0),
    'GCN': dict(arch='GCN', hidden=256, model_dropout=0.6),
}


if __name__ == '__main__':
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    data = DataSpec(path=sys.argv[1])
    graph = data.load()
    rows = []
    ok = True
    for arch in ('GHC', 'GCN'):
        spec = ExperimentSpec(data, ModelConfig(**CONFIGS[arch]), seeds=SEEDS,
                              max_epochs=500, patience=100)
        summary, seconds = benchmark(spec, graph, graph.name)
        rows.append((arch, summary.mean, summary.std, seconds))
        off = abs(100.0 * summary.mean - REFERENCE[arch])
        ok = ok and off <= TOLERANCE
        print('{0}: {1:.2f} vs {2:.2f} {3}'.format(
            arch, 100.0 * summary.mean, REFERENCE[arch],
            'ok' if off <= TOLERANCE else 'FAIL'))
    write_csv(__file__, ('arch', 'mean', 'std', 'seconds'), rows)

    # Disabling the root connection should not help.
    spec = ExperimentSpec(data, ModelConfig(**CONFIGS['GHC']), seeds=SEEDS,
                          max_epochs=500, patience=100)
    no_root, = harness.sweep(spec, 'root_connection', ['false'], graph)
    print('root_connection=false: {0:+.2f} points {1}'.format(
        100.0 * no_root.delta, 'ok' if no_root.delta <= 0.01 else 'FAIL'))
    ok = ok and no_root.delta <= 0.01
    sys.exit(0 if ok else 1)
