"""
Accumulates per-command figures (change counts, aspects, sites rewritten,
weave latency, fleet outcomes) so a run can be summarized and appended to
a CSV for comparison across runs.
"""
import os
import sys
from typing import Any, Dict

import pandas as pd

from utilities import save_json


class ReportAccumulator:
    """
    Collects figures throughout one hotmend command.

    Usage:
        stats = ReportAccumulator(output_dir, command='translate')
        stats.add('classify.items', 2)
        stats.add_bulk({'patch.aspects': 4, 'patch.functions': 2})
        stats.save_summary()
        stats.append_to_csv('runs.csv')
    """

    def __init__(self, base_path, command=''):
        """
        Args:
            base_path: Directory where the summary file is written
            command: Name of the command the figures belong to
        """
        self.base_path = base_path
        self.summary_stats: Dict[str, Any] = {}
        if command:
            self.summary_stats['command'] = command

    def add(self, key: str, value: Any):
        """
        Add one figure. Dotted keys ('weave.elapsed_us') nest.
        """
        if '.' in key:
            self._add_nested(key, value)
        else:
            self.summary_stats[key] = value

    def add_bulk(self, stats_dict: Dict[str, Any]):
        for key, value in stats_dict.items():
            self.add(key, value)

    def _add_nested(self, key: str, value: Any):
        parts = key.split('.')
        current = self.summary_stats
        for part in parts[:-1]:
            current = current.setdefault(part, {})
        current[parts[-1]] = value

    def get(self, key: str, default=None):
        """Retrieve a figure by key (supports dot notation)"""
        current = self.summary_stats
        for part in key.split('.'):
            if isinstance(current, dict) and part in current:
                current = current[part]
            else:
                return default
        return current

    def save_summary(self, filename: str = "hotmend_summary.json"):
        os.makedirs(self.base_path, exist_ok=True)
        filepath = os.path.join(self.base_path, filename)
        save_json(self.summary_stats, filepath)
        print(f"Saved summary to: {filepath}", file=sys.stderr)
        return filepath

    def append_to_csv(self, filepath: str):
        """
        Append the figures as one flat row to a CSV file, creating it with
        headers if needed. Columns missing on either side are left empty.
        """
        flat_stats = self.flat()
        if os.path.exists(filepath):
            df = pd.read_csv(filepath)
            df = pd.concat([df, pd.DataFrame([flat_stats])], ignore_index=True)
        else:
            directory = os.path.dirname(filepath)
            if directory:
                os.makedirs(directory, exist_ok=True)
            df = pd.DataFrame([flat_stats])
        df.to_csv(filepath, index=False)
        print(f"Appended figures to: {filepath}", file=sys.stderr)
        return filepath

    def flat(self):
        return self._flatten_dict(self.summary_stats)

    def _flatten_dict(self, d: Dict, parent_key: str = '', sep: str = '_') -> Dict:
        items = []
        for k, v in d.items():
            new_key = f"{parent_key}{sep}{k}" if parent_key else k
            if isinstance(v, dict):
                items.extend(self._flatten_dict(v, new_key, sep=sep).items())
            elif isinstance(v, (list, tuple)):
                items.append((new_key, ';'.join(str(x) for x in v)))
            else:
                items.append((new_key, v))
        return dict(items)

    def print_summary(self, stream=None):
        stream = stream or sys.stderr
        print("\n" + "=" * 60, file=stream)
        print("RUN SUMMARY", file=stream)
        print("=" * 60, file=stream)
        self._print_dict(self.summary_stats, 0, stream)
        print("=" * 60 + "\n", file=stream)

    def _print_dict(self, d: Dict, indent: int, stream):
        for key, value in d.items():
            if isinstance(value, dict):
                print("  " * indent + f"{key}:", file=stream)
                self._print_dict(value, indent + 1, stream)
            else:
                print("  " * indent + f"{key}: {value}", file=stream)
