import logging
import os
from pathlib import Path


LOGGER_NAME = "MultiStepMAML"
APP_DATA_DIR = Path(os.environ.get("MMAML_HOME", Path.home() / ".mmaml"))
LOG_DIR = APP_DATA_DIR / "logs"
LOG_FILE = LOG_DIR / "app.log"


def setup_logger(enable_console=False, verbose=False, log_file=None):
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(logging.DEBUG)
    logger.propagate = False

    log_file = Path(log_file) if log_file else LOG_FILE
    log_file.parent.mkdir(parents=True, exist_ok=True)

    formatter = logging.Formatter("%(asctime)s | %(levelname)s | %(message)s")

    has_file_handler = any(
        isinstance(handler, logging.FileHandler)
        and Path(getattr(handler, "baseFilename", "")) == log_file.resolve()
        for handler in logger.handlers
    )
    if not has_file_handler:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    if enable_console:
        console_level = logging.INFO if verbose else logging.WARNING
        console_handler = next(
            (
                handler for handler in logger.handlers
                if isinstance(handler, logging.StreamHandler)
                and not isinstance(handler, logging.FileHandler)
            ),
            None,
        )
        if console_handler is None:
            console_handler = logging.StreamHandler()
            console_handler.setFormatter(formatter)
            logger.addHandler(console_handler)
        console_handler.setLevel(console_level)

    return logger


logger = logging.getLogger(LOGGER_NAME)
