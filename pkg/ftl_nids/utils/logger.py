"""
Logging Configuration
JSON lines in production, plain text otherwise; tqdm-safe console output
"""

import os
import json
import logging
from datetime import datetime, timezone
from logging.handlers import RotatingFileHandler

from tqdm import tqdm

LOG_FILE = 'ftl.log'
PLAIN_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

_STANDARD_FIELDS = frozenset(logging.LogRecord('', 0, '', 0, '', (), None).__dict__) | {'message', 'asctime'}


class JSONFormatter(logging.Formatter):
    """One JSON object per record; `extra=` fields such as round or client_id are carried through"""

    def format(self, record):
        entry = {
            'timestamp': datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
            'level': record.levelname,
            'logger': record.name,
            'message': record.getMessage(),
            'module': record.module,
            'line': record.lineno,
        }
        if record.exc_info:
            entry['exception'] = self.formatException(record.exc_info)

        entry.update({k: v for k, v in record.__dict__.items() if k not in _STANDARD_FIELDS})
        return json.dumps(entry, default=str)


class TqdmHandler(logging.StreamHandler):
    """Writes through tqdm.write so log lines don't tear active progress bars"""

    def emit(self, record):
        try:
            tqdm.write(self.format(record), file=self.stream)
            self.flush()
        except Exception:
            self.handleError(record)


def setup_logging(log_level=None, show_progress=None):
    """
    Configure the root logger for one CLI run.

    LOG_LEVEL          root level (default INFO)
    ENVIRONMENT        'production' switches the console to JSON lines
    ENABLE_FILE_LOGGING / LOG_DIR
                       adds a rotating JSON file, 10MB x 5
    FTL_SHOW_PROGRESS  routes console output through tqdm
    """
    level_name = (log_level or os.getenv('LOG_LEVEL', 'INFO')).upper()
    if show_progress is None:
        show_progress = os.getenv('FTL_SHOW_PROGRESS', 'false').lower() == 'true'

    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, level_name, logging.INFO))
    root_logger.handlers = []

    console = TqdmHandler() if show_progress else logging.StreamHandler()
    if os.getenv('ENVIRONMENT', 'development').lower() == 'production':
        console.setFormatter(JSONFormatter())
    else:
        console.setFormatter(logging.Formatter(PLAIN_FORMAT))
    root_logger.addHandler(console)

    if os.getenv('ENABLE_FILE_LOGGING', 'false').lower() == 'true':
        log_dir = os.getenv('LOG_DIR', 'logs')
        os.makedirs(log_dir, exist_ok=True)
        file_handler = RotatingFileHandler(
            filename=os.path.join(log_dir, LOG_FILE),
            maxBytes=10 * 1024 * 1024,
            backupCount=5,
        )
        file_handler.setFormatter(JSONFormatter())
        root_logger.addHandler(file_handler)

    # numexpr (via pandas) logs its thread count at INFO
    logging.getLogger('numexpr').setLevel(logging.WARNING)

    return logging.getLogger('FTL')
