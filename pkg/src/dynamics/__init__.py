"""动力系统层 - 两尺度 Lorenz 96、单步格式和离散不可解趋势"""

from .base import EnsembleRun, FullState, L96Config, SeriesSet
from .integrators import rk4_step
from .lorenz96 import full_rhs, generate_dataset, truncated_rhs
from .reduction import ReducedMap, extract_discrepancy, reconstruct, reduced_increment, with_discrepancy
