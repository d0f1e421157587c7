"""
Results Writer for Blind Search
Renders result tables as CSV or JSON and writes them to a file or stdout.
Output is rendered in memory first, so a failing command writes nothing.
Timestamps only ever go to the optional metadata sidecar.
"""

import io
import csv
import sys
import json
import math
import logging
from datetime import datetime
from pathlib import Path
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np


logger = logging.getLogger("BlindSearch.Results")

FORMATS = ("csv", "json")


@dataclass
class OutputConfig:
    """Where and how results are written."""
    fmt: str = "csv"
    out_path: Optional[str] = None
    sidecar: bool = False
    session_metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.fmt not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}, got {self.fmt!r}")


def to_plain(value: Any) -> Any:
    """
    JSON-safe copy of value: numpy scalars and arrays become Python types,
    non-finite floats become the strings "inf", "-inf" and "nan".
    """
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def render_csv(rows: Sequence[dict], fieldnames: Sequence[str]) -> str:
    """CSV with a fixed header; missing values are empty, extra keys ignored."""
    buffer = io.StringIO()
    writer = csv.DictWriter(
        buffer,
        fieldnames=list(fieldnames),
        extrasaction="ignore",
        lineterminator="\n",
    )
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else v) for k, v in to_plain(row).items()})
    return buffer.getvalue()


def render_json(payload: Any) -> str:
    """Lossless JSON: floats keep their shortest round-trip repr."""
    return json.dumps(to_plain(payload), indent=2) + "\n"


class ResultsWriter:
    """
    Writes one command's primary output and, on request, a metadata sidecar
    next to it.
    """

    def __init__(self, config: Optional[OutputConfig] = None):
        self.config = config or OutputConfig()
        self._session_metadata = dict(self.config.session_metadata or {})
        self._stats = {
            "files_written": 0,
            "bytes_written": 0,
        }

    def render(self, rows: Sequence[dict], fieldnames: Sequence[str], payload: Any) -> str:
        """CSV of rows, or JSON of payload."""
        if self.config.fmt == "json":
            return render_json(payload)
        return render_csv(rows, fieldnames)

    def write(self, text: str) -> Optional[Path]:
        """Write rendered text to out_path, or stdout when no path is set."""
        if self.config.out_path is None:
            sys.stdout.write(text)
            sys.stdout.flush()
            self._stats["bytes_written"] += len(text)
            return None

        path = Path(self.config.out_path)
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(text)
        self._stats["files_written"] += 1
        self._stats["bytes_written"] += len(text)
        logger.debug(f"wrote {len(text)} bytes to {path}")
        return path

    def sidecar_path(self, command: str, started: datetime) -> Path:
        if self.config.out_path is not None:
            return Path(f"{self.config.out_path}.meta.json")
        return Path(f"blind_search_{command}_{started:%Y%m%d_%H%M%S}.meta.json")

    def write_metadata(self, command: str, started: datetime, extra: Optional[dict] = None) -> Optional[Path]:
        """Sidecar with timestamps and run settings; no-op unless enabled."""
        if not self.config.sidecar:
            return None
        finished = datetime.now()
        record = {
            "command": command,
            "started": started.isoformat(),
            "finished": finished.isoformat(),
            "elapsed_seconds": (finished - started).total_seconds(),
            "format": self.config.fmt,
            "output": self.config.out_path,
            **self._session_metadata,
            **(extra or {}),
        }
        path = self.sidecar_path(command, started)
        with open(path, "w") as f:
            json.dump(to_plain(record), f, indent=2)
        self._stats["files_written"] += 1
        return path

    def emit(
        self,
        command: str,
        rows: Sequence[dict],
        fieldnames: Sequence[str],
        payload: Any,
        started: Optional[datetime] = None,
        extra: Optional[dict] = None,
    ) -> str:
        """Render, write and (optionally) describe one result."""
        text = self.render(rows, fieldnames, payload)
        self.write(text)
        self.write_metadata(command, started or datetime.now(), extra)
        return text

    def get_statistics(self) -> dict:
        return dict(self._stats)


def rows_of(items: Sequence[Any]) -> List[dict]:
    """to_row() of every item."""
    return [item.to_row() for item in items]
