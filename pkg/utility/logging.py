# svann-interpretation/utility/logging.py

import logging
import os
import sys
from logging.handlers import RotatingFileHandler

from config import settings

LOG_FILE = os.path.join(settings.LOG_DIR, settings.LOG_FILE_NAME)
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def _file_handler() -> RotatingFileHandler:
    os.makedirs(settings.LOG_DIR, exist_ok=True)
    handler = RotatingFileHandler(LOG_FILE, maxBytes=1024 * 1024, backupCount=5)  # 1 MB per file
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    return handler


def setup_logger(name):
    """Module logger writing to stderr, plus the rotating activity log when SVANN_LOG_TO_FILE is set."""
    logger = logging.getLogger(name)
    logger.setLevel(settings.LOG_LEVEL.upper())

    if not logger.handlers:
        # stdout is reserved for CSV output
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(console_handler)

        if settings.LOG_TO_FILE:
            logger.addHandler(_file_handler())

    return logger
