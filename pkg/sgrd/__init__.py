import os
import logging

from config import Config

__version__ = '0.1.0'


def create_harness(config_class=Config):
    """Configure logging for the command-line harness and return the settings."""
    settings = config_class()

    # Ensure logging is configured early so service loggers emit to stderr
    try:
        log_level = os.environ.get('LOG_LEVEL', getattr(settings, 'LOG_LEVEL', 'INFO')).upper()
        logger = logging.getLogger('sgrd')
        if not logger.handlers:
            handler = logging.StreamHandler()
            handler.setLevel(log_level)
            fmt = logging.Formatter('[%(asctime)s] %(levelname)s in %(module)s: %(message)s')
            handler.setFormatter(fmt)
            logger.addHandler(handler)
            logger.propagate = False
        logger.setLevel(getattr(logging, log_level, logging.INFO))
        # Also set root logger level to allow libs to emit
        logging.getLogger().setLevel(getattr(logging, log_level, logging.INFO))
        logging.basicConfig()
        logger.debug('Logging configured (level=%s)', log_level)
    except Exception:
        # If logging config fails, fallback silently but avoid crashing startup
        pass

    return settings
