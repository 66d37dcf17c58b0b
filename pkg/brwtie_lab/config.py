"""
Configuration constants for the numerical laboratory.
"""

import os


class AiryConfig:
    """Airy evaluation, eigenvalue and Psi configuration"""

    ZERO_TOLERANCE = 1e-8
    ROOT_RESIDUAL = 1e-9

    # Gauss-Legendre nodes for the phase integral of 1/(Ai^2 + Bi^2)
    PHASE_NODES = 96
    # 1/(Ai^2 + Bi^2) underflows beyond this abscissa
    PHASE_CUTOFF = 40.0

    POLISH_WIDTH = 1e-6
    MAX_BRACKET_EXTENSIONS = int(os.getenv("BRWTIE_MAX_BRACKET_EXTENSIONS", "12"))

    PSI_TOLERANCE = 1e-9
    PSI_QUANTUM = 1e-10
    PSI_LINEAR_BELOW = 1e-6
    PSI_LATTICE_STEP = 1.0 / 64.0


class EnvironmentConfig:
    """Environment model configuration"""

    SUPERCRITICAL_GRID = 1000
    CONVEXITY_GRID = 64
    CONVEXITY_TOLERANCE = 1e-9
    LEGENDRE_XTOL = 1e-13
    THETA_SEARCH_START = 1.0
    TIME_STEP = 1e-5
    TILT_GRID_POINTS = 4097
    TILT_SPAN = 12.0


class FunctionalConfig:
    """Rate functional quadrature configuration"""

    CELLS = 512
    GAUSS_NODES = 5
    HDOT_ZERO = 1e-12
    CHECK_GRID = 1001


class OptimalPathConfig:
    """Optimal speed profile solver configuration"""

    GRID = 2048
    ENERGY_TOLERANCE = 1e-6
    PROFILE_TOLERANCE = 1e-4
    CONTACT_FACTOR = 10.0
    BLOCK_XTOL = 1e-14
    SPECIAL_CASE_XTOL = 1e-13

    # Penalised projected ascent
    PENALTY_SCHEDULE = (1e1, 1e2, 1e3, 1e4, 1e5, 1e6)
    PENALTY_INNER_ITERATIONS = 400
    PENALTY_STEP = 1.0
    PENALTY_BACKTRACK = 0.5
    PENALTY_MIN_STEP = 1e-14
    PENALTY_FEASIBILITY = 1e-3


class OdeConfig:
    """Boundary ODE configuration"""

    RTOL = 1e-10
    ATOL = 1e-12
    EPS_STOP = 1e-6
    SAMPLES = 1001
    LAMBDA_C_TOL = 1e-6
    LAMBDA_STAR_TOL = 1e-8
    LAMBDA_START_WIDTH = 1.0
    RESIDUAL_TOLERANCE = 1e-7


class PdeConfig:
    """Feynman-Kac PDE oracle configuration"""

    INTERVAL_POINTS = 400
    INTERVAL_DT = 1e-3
    INTERVAL_T_FINAL = 3.0

    HALFLINE_DX = 1e-2
    HALFLINE_DT = 1e-2
    HALFLINE_T_FINAL = 30.0
    HALFLINE_CONFINEMENT = 200.0
    HALFLINE_LENGTH = 12.0

    SMOOTHING_STEPS = 4
    SLOPE_TOLERANCE = 1e-5


class SimulationConfig:
    """Monte Carlo configuration"""

    WORKERS_ENV_VAR = "BRWTIE_WORKERS"
    DEFAULT_WORKERS = 1
    MAX_POPULATION = 1 << 20
    SMC_BATCHES = 8
    ESS_THRESHOLD = 0.5


class LoggingConfig:
    """Logging configuration"""

    LEVEL_ENV_VAR = "BRWTIE_LOG_LEVEL"
    FORMAT_ENV_VAR = "BRWTIE_LOG_FORMAT"
    LOG_LEVEL = os.getenv(LEVEL_ENV_VAR, "INFO")
    LOG_FORMAT = os.getenv(FORMAT_ENV_VAR, "json")


def worker_count() -> int:
    """Worker-pool size, read at call time so a loaded .env file applies."""
    raw = os.getenv(
        SimulationConfig.WORKERS_ENV_VAR, str(SimulationConfig.DEFAULT_WORKERS)
    )
    return max(1, int(raw))
