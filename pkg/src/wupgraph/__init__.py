"""Weak uncertainty principle on finite metric measure spaces realized as weighted graphs."""
from .builders import (IfsSpec, build_interval, build_lattice_group, build_pcf, build_sg,
                       build_sg_lattice, solve_resistance_dimension)
from .errors import WupError
from .functionals import (ProductVariant, energy, moment_nash_functional, nash_functional,
                          uncertainty_product, variance)
from .kernels import BACKEND
from .optimizer import OptimizerOptions, brute_force_min, minimize_product, sample_baseline
from .resistance import effective_resistance, resistance_matrix
from .space import MetricMeasureSpace, load_space, normalize, save_space
from .verifier import HypothesisReport, theorem_lower_bound, verify_space

__version__ = "0.1.0"
