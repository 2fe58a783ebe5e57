"""trunc-ellipse - Main entry point."""

import os
import sys
import traceback

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.cli.commands import dispatch
from src.config.config_manager import ConfigManager
from src.utils.persistence import get_config_dir
from src.utils.logger import setup_logger, get_logger, log_exception, log_startup_validation


def main(argv=None):
    """Command-line entry point; exits with the dispatch status."""
    logger = None

    try:
        # Quiet until dispatch applies --log-level
        logger = setup_logger(log_level='WARNING', enable_console=True)

        sys.excepthook = log_exception

        validation_issues = log_startup_validation()
        if validation_issues:
            logger.warning(f'Starting with {len(validation_issues)} validation warnings')

        ConfigManager(get_config_dir()).create_default_profile()

        status = dispatch(sys.argv[1:] if argv is None else argv)

    except Exception as e:
        error_msg = f'CRITICAL ERROR: {str(e)}\n{traceback.format_exc()}'
        if logger:
            logger.critical(error_msg)
        else:
            print(error_msg, file=sys.stderr)
        sys.exit(1)

    sys.exit(status)


if __name__ == "__main__":
    main()
