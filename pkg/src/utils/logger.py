"""
Logging utility for trunc-ellipse
Console diagnostics go to stderr; stdout is reserved for JSON output
"""

import logging
import os
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional

LOGGER_NAME = 'trunc_ellipse'


def setup_logger(log_level=logging.INFO, enable_console=True, log_dir: Optional[Path] = None):
    """
    Set up the package logger

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        enable_console: Whether to print logs to stderr
        log_dir: Directory for a timestamped log file (None disables the file)

    Returns:
        Logger instance
    """
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(log_level)

    # Remove existing handlers to avoid duplicates
    logger.handlers = []
    logger.propagate = False

    if enable_console:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(log_level)
        console_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))
        logger.addHandler(console_handler)

    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)

        timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
        log_file = log_dir / f'{LOGGER_NAME}_{timestamp}.log'
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(logging.DEBUG)

        file_format = logging.Formatter(
            '%(asctime)s | %(levelname)-8s | %(name)s | %(funcName)s:%(lineno)d | %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
        file_handler.setFormatter(file_format)
        logger.addHandler(file_handler)

        logger.debug('=' * 80)
        logger.debug(f'Log file: {log_file}')
        logger.debug(f'Python version: {sys.version}')
        logger.debug(f'Working directory: {os.getcwd()}')
        logger.debug('=' * 80)

    if not logger.handlers:
        logger.addHandler(logging.NullHandler())

    return logger


def get_logger(name: Optional[str] = None):
    """
    Get the package logger or one of its children

    Args:
        name: Module name; 'src.core.sampling' becomes 'trunc_ellipse.core.sampling'
    """
    if not name:
        return logging.getLogger(LOGGER_NAME)

    suffix = name[4:] if name.startswith('src.') else name
    return logging.getLogger(f'{LOGGER_NAME}.{suffix}')


def log_exception(exc_type, exc_value, exc_traceback):
    """
    Exception hook that logs unhandled exceptions

    Usage:
        import sys
        sys.excepthook = log_exception
    """
    if issubclass(exc_type, KeyboardInterrupt):
        sys.__excepthook__(exc_type, exc_value, exc_traceback)
        return

    logger = get_logger()
    logger.critical(
        'Unhandled exception:',
        exc_info=(exc_type, exc_value, exc_traceback)
    )


def log_startup_validation():
    """
    Check the files the CLI relies on and log what is missing

    Returns:
        List of issue descriptions (empty when everything is in place)
    """
    from src.utils.persistence import get_config_dir, get_schema_dir

    logger = get_logger()
    logger.debug('Running startup validation...')

    issues = []

    schema_dir = Path(get_schema_dir())
    if schema_dir.exists():
        n_schemas = len(list(schema_dir.glob('*.schema.json')))
        logger.debug(f'[OK] Schema directory found: {schema_dir} ({n_schemas} schemas)')
    else:
        logger.warning(f'[X] Schema directory NOT FOUND: {schema_dir}')
        issues.append('Schema directory missing')

    default_profile = Path(get_config_dir()) / 'profiles' / 'default.json'
    if default_profile.exists():
        logger.debug(f'[OK] Default profile found: {default_profile}')
    else:
        logger.debug(f'[i] Default profile will be created: {default_profile}')

    if issues:
        logger.warning(f'Startup validation found {len(issues)} issue(s):')
        for issue in issues:
            logger.warning(f'  - {issue}')

    return issues
