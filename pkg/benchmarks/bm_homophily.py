import sys

from hyperagg.config import DataSpec, ExperimentSpec, ModelConfig, SBM
from utils import benchmark, write_csv

ARCHS = ('GHC', 'GCN', 'MLP')
SEEDS = list(range(10))

# (seeds, max_epochs, patience) per arch; the whole script fits in 10 minutes.
BUDGETS = {
    'GHC': (SEEDS[:5], 100, 20),
    'GCN': (SEEDS, 200, 50),
    'MLP': (SEEDS, 200, 50),
}

# Same expected degree, opposite homophily.
GRAPHS = (
    ('homophilic', 0.02, 0.002),
    ('heterophilic', 0.002, 0.02),
)

# Accuracy points over MLP required on the homophilic graph, and the largest
# drop below MLP tolerated for GHC on the heterophilic one.
HOMOPHILIC_MARGIN = 8.0
HETEROPHILIC_SLACK = 2.0


def check(means):
    ok = True
    mlp = means['homophilic', 'MLP']
    for arch in ('GHC', 'GCN'):
        gain = 100.0 * (means['homophilic', arch] - mlp)
        passed = gain >= HOMOPHILIC_MARGIN
        ok = ok and passed
        print('homophilic {0} - MLP: {1:+.2f} points {2}'.format(
            arch, gain, 'ok' if passed else 'FAIL'))
    gap = 100.0 * (means['heterophilic', 'GHC'] -
                   means['heterophilic', 'MLP'])
    passed = gap >= -HETEROPHILIC_SLACK
    print('heterophilic GHC - MLP: {0:+.2f} points {1}'.format(
        gap, 'ok' if passed else 'FAIL'))
    return ok and passed


def main():
    rows = []
    means = {}
    for label, p_in, p_out in GRAPHS:
        data = DataSpec(synthetic=SBM, n=1000, classes=4, p_in=p_in,
                        p_out=p_out, noise=1.0)
        graph = data.load()
        for arch in ARCHS:
            model = ModelConfig(arch=arch, hidden=32, mixing=16,
                                model_dropout=0.2)
            seeds, max_epochs, patience = BUDGETS[arch]
            spec = ExperimentSpec(data, model, seeds=seeds,
                                  max_epochs=max_epochs, patience=patience)
            summary, seconds = benchmark(spec, graph, label)
            means[label, arch] = summary.mean
            rows.append((label, arch, summary.mean, summary.std, seconds))
    write_csv(__file__, ('graph', 'arch', 'mean', 'std', 'seconds'), rows)
    return 0 if check(means) else 1


if __name__ == '__main__':
    sys.exit(main())
