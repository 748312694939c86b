"""
Application factory for the variable-speed pump scheduler.
"""
import os
import logging
from logging.handlers import RotatingFileHandler

from app.config import get_config_class, config_to_dict


class SchedulerApp:
    """Holds the resolved configuration and the package logger."""

    def __init__(self, config, logger):
        self.config = config
        self.logger = logger

    def __repr__(self):
        return f"<SchedulerApp env={self.config.get('ENV')}>"


def _configure_logging(config):
    logger = logging.getLogger('app')
    level = getattr(logging, str(config.get('LOG_LEVEL', 'INFO')).upper(), logging.INFO)

    # Clear existing handlers to avoid duplicates
    logger.handlers = []

    if config.get('LOG_TO_FILE', True):
        log_dir = config.get('LOG_DIR', 'logs')
        if not os.path.exists(log_dir):
            os.makedirs(log_dir, exist_ok=True)

        file_handler = RotatingFileHandler(
            os.path.join(log_dir, 'scheduler.log'),
            maxBytes=1024000,
            backupCount=5
        )
        file_handler.setFormatter(logging.Formatter(
            '%(asctime)s %(levelname)s: %(message)s [in %(pathname)s:%(lineno)d]'
        ))
        file_handler.setLevel(level)
        logger.addHandler(file_handler)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(logging.Formatter(
        '%(asctime)s %(levelname)s: %(message)s'
    ))
    console_handler.setLevel(level)
    logger.addHandler(console_handler)

    logger.setLevel(level)
    logger.propagate = False
    return logger


def create_app(config=None, config_name=None):
    """Create and configure the scheduler application.

    Args:
        config (dict, optional): Overrides applied on top of the selected
            configuration class.
        config_name (str, optional): One of ``development``, ``testing`` or
            ``production``. Defaults to ``PUMPSCHED_ENV``.

    Returns:
        SchedulerApp: The configured application.
    """
    settings = config_to_dict(get_config_class(config_name))

    # Override config if provided
    if config:
        settings.update(config)

    logger = _configure_logging(settings)
    app = SchedulerApp(settings, logger)
    logger.debug(f"Pump scheduler startup ({settings.get('ENV')})")

    # Initialize services
    from app.services.simulator import simulator
    from app.services.linearizer import linearizer
    from app.services.milp_builder import milp_builder
    from app.services.milp_solver import milp_solver

    simulator.init_app(app)
    linearizer.init_app(app)
    milp_builder.init_app(app)
    milp_solver.init_app(app)

    return app
