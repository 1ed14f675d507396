from hyperagg.config import DataSpec, ExperimentSpec, ModelConfig, SBM
from utils import benchmark, write_csv


if __name__ == '__main__':
    data = DataSpec(synthetic=SBM, n=2000, classes=4)
    graph = data.load()
    rows = []
    for mixing in (4, 8, 16, 32, 64):
        model = ModelConfig(arch='GHC', hidden=32, mixing=mixing)
        spec = ExperimentSpec(data, model, seeds=[0, 1, 2], max_epochs=100,
                              patience=100)
        summary, seconds = benchmark(spec, graph, 'mixing={0}'.format(mixing))
        rows.append((mixing, summary.mean, summary.std, seconds))
    write_csv(__file__, ('mixing', 'mean', 'std', 'seconds'), rows)
