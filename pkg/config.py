# config.py
import os


class Config:
    """Base configuration class"""

    APP_NAME = 'TabDecomp'
    APP_VERSION = '1.0.0'
    DEBUG = False
    TESTING = False

    # Logging Configuration
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')

    # Worker parallelism (node-wise regressions, per-clique fits)
    THREADS = int(os.environ.get('TABDECOMP_THREADS', 1))

    # Capacity limits
    S_MAX = int(os.environ.get('TABDECOMP_S_MAX', 10))
    MAX_TABLE_CELLS = int(os.environ.get('TABDECOMP_MAX_TABLE_CELLS', 65536))
    MAX_QUERY_CELLS = int(os.environ.get('TABDECOMP_MAX_QUERY_CELLS', 2 ** 20))
    # dense design matrices are m x m
    MAX_DESIGN_CELLS = int(os.environ.get('TABDECOMP_MAX_DESIGN_CELLS', 4096))

    # Random forest defaults for node-wise regression
    FOREST_CONFIG = {
        'n_trees': int(os.environ.get('TABDECOMP_N_TREES', 500)),
        'min_samples_leaf': int(os.environ.get('TABDECOMP_MIN_SAMPLES_LEAF', 5)),
        'max_depth': None,
        'max_features': None,  # None means sqrt(p - 1)
    }

    # Group lasso / cross-validation
    CV_FOLDS = int(os.environ.get('TABDECOMP_CV_FOLDS', 10))
    LAMBDA_GRID_SIZE = 30
    LAMBDA_MIN_RATIO = 1e-3
    GL_TOL = 1e-9
    GL_MAX_ITER = 20000
    GL_KKT_TOL = 1e-7

    # Iterative proportional fitting
    IPF_TOL = 1e-8
    IPF_MAX_ITER = 5000

    # Empirical KL reference size when sampling from a true model
    KL_REFERENCE_SIZE = 1_000_000


class DevelopmentConfig(Config):
    """Development configuration"""
    DEBUG = True
    LOG_LEVEL = 'DEBUG'


class ProductionConfig(Config):
    """Production configuration"""
    LOG_LEVEL = 'INFO'


class TestingConfig(Config):
    """Testing configuration"""
    DEBUG = True
    TESTING = True
    LOG_LEVEL = 'WARNING'

    # Small forests keep the importance tests fast
    FOREST_CONFIG = {
        'n_trees': 50,
        'min_samples_leaf': 5,
        'max_depth': None,
        'max_features': None,
    }
    CV_FOLDS = 5
    LAMBDA_GRID_SIZE = 12
    KL_REFERENCE_SIZE = 100_000


_CONFIGS = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
}


def get_config():
    """Get configuration class based on environment"""
    env = os.environ.get('TABDECOMP_ENV', 'development').lower()
    return _CONFIGS.get(env, DevelopmentConfig)


def validate_environment():
    """Validate environment configuration"""
    errors = []
    warnings = []

    env = os.environ.get('TABDECOMP_ENV', 'development').lower()
    if env not in _CONFIGS:
        warnings.append(f"Unknown TABDECOMP_ENV '{env}', falling back to development")

    config = get_config()
    if config.S_MAX < 2:
        errors.append("TABDECOMP_S_MAX must be at least 2")
    if config.MAX_TABLE_CELLS < 2 ** 2:
        errors.append("TABDECOMP_MAX_TABLE_CELLS is too small to hold any pairwise table")
    if config.THREADS < 1:
        errors.append("TABDECOMP_THREADS must be positive")
    if 2 ** config.S_MAX > config.MAX_TABLE_CELLS:
        warnings.append("S_MAX binary cliques exceed MAX_TABLE_CELLS; large cliques will fail")

    return {
        'valid': len(errors) == 0,
        'errors': errors,
        'warnings': warnings
    }
