import time

from hyperagg import harness


def benchmark(spec, graph, label):
    print('Running {0} seeds of {1} on {2}'.format(
        len(spec.seeds), spec.model.arch, label))
    t1 = time.time()
    experiment = harness.run_experiment(spec, graph)
    total_time = time.time() - t1
    print(experiment.summary_line())
    print('Total time: {0:.2f}s\n'.format(total_time))
    return experiment.summary, total_time


def write_csv(name, header, rows):
    with open('{0}.csv'.format(name), 'w+') as f:
        f.write(','.join(header))
        f.write('\n')
        for row in rows:
            f.write(','.join(str(value) for value in row))
            f.write('\n')
