"""
Output formatters for experiment reports
"""
from .console_formatter import ConsoleFormatter
from .json_formatter import JSONFormatter

__all__ = ['ConsoleFormatter', 'JSONFormatter']
