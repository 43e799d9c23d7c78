"""
Run Manifest - Provenance record written next to every CSV output
"""
import csv
import json
import logging
import os
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from typing import Any, Dict, List

logger = logging.getLogger(__name__)

TOOL_NAME = "newsvendor-dc"
TOOL_VERSION = "1.0.0"


def format_money(value):
    """Two decimals, '.' separator, empty for missing values"""
    if value is None or value != value:
        return ""
    return f"{value:.2f}"


def format_ratio(value):
    if value is None or value != value:
        return ""
    return f"{value:.6f}"


def manifest_path_for(csv_path):
    """<dir>/<name>.manifest.json for <dir>/<name>.csv"""
    stem, _ = os.path.splitext(csv_path)
    return f"{stem}.manifest.json"


class RunManifest:
    """Tool version, resolved settings, seeds, timestamps and per-step durations of one command"""

    def __init__(self, command, settings, argv=None):
        """
        Initialize run manifest

        Args:
            command: CLI subcommand name
            settings: Fully resolved settings dictionary
            argv: Command-line arguments as given
        """
        self.command = command
        self.settings = {k: v for k, v in settings.items() if not k.startswith("_")}
        self.settings_source = settings.get("_source")
        self.argv = list(argv or [])
        self.seeds: List[int] = []
        self.started_at = datetime.now(timezone.utc).isoformat()
        self.finished_at = None
        self.durations: Dict[str, float] = {}
        self.outputs: List[str] = []
        self.notes: Dict[str, Any] = {}

    def add_seed(self, seed):
        if int(seed) not in self.seeds:
            self.seeds.append(int(seed))

    @contextmanager
    def timed(self, step):
        """Accumulate the wall time of a block under the given step name"""
        started = time.perf_counter()
        try:
            yield
        finally:
            self.durations[step] = self.durations.get(step, 0.0) + time.perf_counter() - started

    def to_dict(self):
        return {
            "tool": TOOL_NAME,
            "version": TOOL_VERSION,
            "command": self.command,
            "argv": self.argv,
            "settings_source": self.settings_source,
            "settings": self.settings,
            "seeds": self.seeds,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "durations_seconds": self.durations,
            "outputs": self.outputs,
            "notes": self.notes,
        }

    def save(self, path):
        """Save JSON to file"""
        self.finished_at = datetime.now(timezone.utc).isoformat()
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, default=str)
        logger.debug(f"Manifest written to {path}")


def write_csv(path, columns, rows, manifest):
    """
    Write a CSV whose first line names its manifest, then save the manifest beside it

    Args:
        path: CSV file path
        columns: Header, in output order
        rows: Iterable of sequences already formatted as strings
        manifest: RunManifest

    Returns:
        Path of the manifest file
    """
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    manifest_file = manifest_path_for(path)

    count = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# manifest: {os.path.basename(manifest_file)}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(row)
            count += 1

    manifest.outputs.append(os.path.abspath(path))
    manifest.save(manifest_file)
    logger.info(f"Wrote {count} rows to {path}")
    return manifest_file


def read_csv(path):
    """Rows of a CSV written by write_csv as dictionaries, skipping the manifest line"""
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))
