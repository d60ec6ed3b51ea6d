"""
JSON formatter for experiment artifacts
"""
import json
from datetime import date, datetime
from pathlib import Path
from typing import Dict

import numpy as np


class JSONFormatter:
    """Stable-key JSON for reports and JSON-lines round logs"""

    def format_stats(self, stats: Dict) -> str:
        """Format a report document as indented JSON"""
        return json.dumps(stats, indent=2, sort_keys=True, default=self._json_serial) + "\n"

    def format_line(self, record: Dict) -> str:
        """One compact JSON-lines record"""
        return json.dumps(record, sort_keys=True, separators=(',', ':'), default=self._json_serial)

    def _json_serial(self, obj):
        """JSON serializer for objects not serializable by default"""
        if isinstance(obj, (datetime, date)):
            return obj.isoformat()
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (bytes, bytearray)):
            return obj.hex()
        if isinstance(obj, Path):
            return str(obj)
        raise TypeError(f"Type {type(obj)} not serializable")
