"""
python -m ftl_nids <command> ...
"""
import sys

from .cli import main
from .utils import setup_logging

if __name__ == '__main__':
    setup_logging()
    sys.exit(main())
