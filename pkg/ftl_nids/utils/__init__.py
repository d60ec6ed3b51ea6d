"""
Shared utilities
"""
from .logger import JSONFormatter, setup_logging

__all__ = ['JSONFormatter', 'setup_logging']
