"""
Configuration settings for the pump scheduler.
"""
import os


def _float(name, default):
    return float(os.environ.get(name, default))


def _int(name, default):
    return int(os.environ.get(name, default))


class Config:
    """Base configuration."""
    # Logging settings
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')
    LOG_DIR = os.environ.get('LOG_DIR', 'logs')
    LOG_TO_FILE = True

    # Output settings
    OUT_DIR = os.environ.get('OUT_DIR', 'out')

    # Hydraulic simulator settings
    NEWTON_TOL = _float('NEWTON_TOL', 1e-8)
    NEWTON_MAX_ITER = _int('NEWTON_MAX_ITER', 50)
    NEWTON_MAX_HALVINGS = _int('NEWTON_MAX_HALVINGS', 10)
    FLOW_REGULARIZATION = _float('FLOW_REGULARIZATION', 1e-6)

    # Linearizer settings
    REFERENCE_HOUR = _float('REFERENCE_HOUR', 12)
    BREAKPOINT_MARGIN = _float('BREAKPOINT_MARGIN', 2.0)
    BREAKPOINT_COVERAGE = _float('BREAKPOINT_COVERAGE', 0.0)
    BREAKPOINT_FLOOR = _float('BREAKPOINT_FLOOR', 1.0)
    # "q0,s0"; empty means the pump's nominal point
    POWER_POINT = os.environ.get('POWER_POINT', '')

    # MILP builder settings
    BIG_U_FACTOR = _float('BIG_U_FACTOR', 2.0)

    # Solver settings
    SOLVER_BACKEND = os.environ.get('SOLVER_BACKEND', 'embedded')
    MIP_GAP = _float('MIP_GAP', 0.05)
    TIME_LIMIT = _float('TIME_LIMIT', 300)
    INTEGRALITY_TOL = _float('INTEGRALITY_TOL', 1e-6)
    FEASIBILITY_TOL = _float('FEASIBILITY_TOL', 1e-6)
    DIVE_EVERY = _int('DIVE_EVERY', 50)
    ORACLE_MAX_BINARIES = _int('ORACLE_MAX_BINARIES', 24)

    # Batch settings
    BATCH_JOBS = _int('BATCH_JOBS', 1)


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True
    ENV = 'development'


class TestingConfig(Config):
    """Testing configuration."""
    TESTING = True
    ENV = 'testing'
    LOG_TO_FILE = False
    TIME_LIMIT = 60


class ProductionConfig(Config):
    """Production configuration."""
    DEBUG = False
    ENV = 'production'
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'WARNING')


# Select the appropriate configuration based on environment
config_by_name = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig
}


def get_config_class(name=None):
    """Return the config class for ``name`` or for ``PUMPSCHED_ENV``."""
    name = name or os.environ.get('PUMPSCHED_ENV', 'development')
    return config_by_name.get(name, DevelopmentConfig)


def config_to_dict(config_class):
    """Collect the upper-case attributes of a config class into a dict."""
    return {
        key: getattr(config_class, key)
        for key in dir(config_class)
        if key.isupper()
    }
