"""
Collective QSV - Configuration and settings

This module contains all the configuration settings for the toolkit, including
numerical tolerances, engine limits, file paths, default experiment parameters
and the CSV/circuit output conventions.
"""

import os

# Toolkit title
TOOLKIT_TITLE = "Collective QSV"
CSV_SCHEMA_LINE = "# collective-qsv v1"
CIRCUIT_SCHEMA_LINE = "# collective-qsv circuit v1"

# Numerical tolerances
NORM_TOL = 1e-12  # State vector normalization
HERMITIAN_TOL = 1e-12  # Entrywise Hermiticity
TRACE_TOL = 1e-12  # Unit trace
PSD_TOL = 1e-10  # Smallest allowed eigenvalue is -PSD_TOL
SPECTRUM_TOL = 1e-10  # Eigenvalue comparisons for strategies
UNITARY_TOL = 1e-12  # Gate payloads
DECOMPOSITION_TOL = 1e-10  # User-supplied Fredkin decompositions
IMAG_RESIDUE_TOL = 1e-12  # Allowed imaginary part of real-valued traces

# Exact engine limits
MAX_TOTAL_DIMENSION = 2 ** 20  # Largest Hilbert-space dimension the dense engine accepts

# File paths
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = os.path.join(BASE_DIR, 'data')
OUTPUT_DIR = os.path.join(BASE_DIR, 'output')

# Example experiment configurations
ANALYTIC_CONFIG = os.path.join(DATA_DIR, 'analytic_dicke.json')
SIMULATE_CONFIG = os.path.join(DATA_DIR, 'simulate_bell.json')
FIGURES_CONFIG = os.path.join(DATA_DIR, 'figures_bell.json')

# Default experiment parameters
DEFAULT_DELTA = 0.01
DEFAULT_LAMBDA = 1.0 / 3.0  # Bell state, optimal local strategy
DEFAULT_EPSILONS = [0.01]
DEFAULT_SCHEMES = [(2, 1)]
DEFAULT_NOISE = "independent_white"
DEFAULT_TARGET = "bell"
DEFAULT_ROUNDS = 10000
DEFAULT_SEED = 20240601
DEFAULT_MODE = "exact"
MAX_SEED = 2 ** 64 - 1

# Protocol settings
PURIFICATION_THRESHOLD = 0.5  # Above this infidelity the SWAP projection stops helping
ROUND_CHUNK_SIZE = 4096  # Rounds per worker task in the Monte Carlo runner
CONFIDENCE_LEVEL = 0.95  # Wilson interval level for pass rates

# Circuit settings
FREDKIN_TWO_QUBIT_COST = 5  # Two-qubit gates per Fredkin gate
EXPECTED_DECOMPOSITION_LENGTH = 5

# Figure sweeps
FIGURE_EPSILON_MIN = 1e-4
FIGURE_EPSILON_MAX = 0.1
FIGURE_EPSILON_POINTS = 31
FIGURE_K_VALUES = list(range(2, 21))
FIGURE_T_ENSEMBLE = 20
FIGURE_EPSILON = 0.01
FIGURE_SCHEMES = [(2, 1), (10, 1)]
FIGURE_NOISE = ["independent_white", "global_white", "global_unitary_control"]
FIGURE_FILES = {
    "infidelity": "complexity_vs_infidelity.csv",
    "k": "complexity_vs_k.csv",
    "t": "complexity_vs_t.csv",
    "output": "output_infidelity_vs_k.csv",
}

# CSV output
CSV_FLOAT_FORMAT = "{:.12g}"
RESULT_COLUMNS = [
    "k", "t", "noise", "lambda", "epsilon", "delta",
    "p_exact", "p_closed_form", "rounds_M", "samples_N",
    "output_infidelity", "pass_rate", "ci_low", "ci_high", "seed",
    "n_opt", "flag",
]
FIGURE_COLUMNS = [
    "noise", "k", "t", "lambda", "epsilon", "delta",
    "rounds_M", "samples_N", "n_opt", "n_std", "output_infidelity", "infidelity_ratio",
    "flag",
]
DISCRIMINATE_COLUMNS = [
    "model", "k", "t", "lambda", "epsilon", "model_rate",
    "observed_rate", "n_total", "divergence", "significance",
]
DISCRIMINATE_MODELS = ["independent_white", "global_white"]

# Threads
THREADS_ENV_VAR = "QSV_THREADS"
DEFAULT_THREADS = 1

# Logging
LOG_LEVEL = "INFO"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Exit codes
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RESOURCE = 3
EXIT_NUMERICAL = 4
