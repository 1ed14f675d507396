from hyperagg.exceptions import (
    HyperAggError, ConfigError, DataError, DimensionError, GraphFormatError,
    NumericalError, SupervisionError)
from hyperagg.tensor import Matrix, Tape, backward
from hyperagg.graph import Graph, from_edges
from hyperagg.config import DataSpec, ExperimentSpec, ModelConfig

__version__ = '0.1.0'
__author__ = 'hyperagg developers'
__license__ = 'MIT'

__all__ = [
    'HyperAggError',
    'ConfigError',
    'DataError',
    'DimensionError',
    'GraphFormatError',
    'NumericalError',
    'SupervisionError',
    'Matrix',
    'Tape',
    'backward',
    'Graph',
    'from_edges',
    'DataSpec',
    'ExperimentSpec',
    'ModelConfig',
]
