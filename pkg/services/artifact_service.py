"""
Artifact writer for toolkit runs.

Writes CSV tables and JSON reports into the output directory. Every file
embeds the toolkit version and the resolved configuration: CSV files as
leading ``#`` comment lines, JSON files under a ``meta`` key. The run state
(last run time, subcommand, artifact list with SHA-256 digests) goes to a
small JSON file so reruns can be compared byte for byte.
"""

import csv
import hashlib
import io
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

logger = logging.getLogger(__name__)


class ArtifactService:
    """Writes run artifacts with an embedded config header."""

    def __init__(self, output_dir: str, config: Dict[str, Any], version: str):
        self.output_dir = Path(output_dir).expanduser()
        self.config = dict(config)
        self.version = version
        self.written: List[Path] = []

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """Write a CSV table; returns its path."""
        buffer = io.StringIO()
        buffer.write(f"# toolkit_version: {self.version}\n")
        buffer.write(f"# config: {json.dumps(self.config, sort_keys=True, default=str)}\n")
        writer = csv.writer(buffer, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        writer.writerow(header)
        count = 0
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"{name}: row has {len(row)} fields, header has {len(header)}")
            writer.writerow([_format_cell(value) for value in row])
            count += 1
        path = self._write(name, buffer.getvalue())
        logger.info("Wrote %s (%d rows)", path, count)
        return path

    def write_json(self, name: str, payload: Any) -> Path:
        document = {"meta": {"toolkit_version": self.version, "config": self.config}, "data": payload}
        text = json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False, default=str) + "\n"
        path = self._write(name, text)
        logger.info("Wrote %s", path)
        return path

    def digests(self) -> Dict[str, str]:
        return {str(path): file_digest(path) for path in self.written}

    def save_run_state(self, state_file: str, subcommand: str) -> None:
        """Persist the run state. Failures are logged, never raised."""
        path = Path(state_file).expanduser()
        payload = {
            "last_run": datetime.now(timezone.utc).isoformat(),
            "subcommand": subcommand,
            "toolkit_version": self.version,
            "artifacts": self.digests(),
        }
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
        except OSError as exc:
            logger.warning("Could not write run state to %s: %s", path, exc)

    # ------------------------------------------------------------------
    # Private helpers
    # ------------------------------------------------------------------

    def _write(self, name: str, text: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / name
        path.write_text(text, encoding="utf-8")
        if path not in self.written:
            self.written.append(path)
        return path


def load_run_state(state_file: str) -> Optional[Dict[str, Any]]:
    """Previous run state, or None when missing or unreadable."""
    path = Path(state_file).expanduser()
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, OSError) as exc:
        logger.warning("Could not read run state from %s: %s", path, exc)
        return None


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_csv_rows(path: Path) -> List[Dict[str, str]]:
    """Rows of an artifact CSV as dicts, skipping the comment header."""
    lines = [line for line in Path(path).read_text(encoding="utf-8").splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


def _format_cell(value: Any) -> Any:
    # repr keeps every float bit, so reruns compare byte for byte
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (dict, list)):
        return json.dumps(value, sort_keys=True)
    return value
