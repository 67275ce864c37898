"""
Helpers for writing run artifacts: CSV tables, JSON reports and the
``RunManifest`` that accompanies every output file.

CSV files are comma-delimited with LF line endings. They start with
'#'-prefixed provenance comments, then a header row, and numbers carry 9
significant digits. JSON is written with sorted keys so that reruns
reproduce files byte for byte.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

from . import __version__
from .errors import CVQKDError

logger = logging.getLogger(__name__)

MANIFEST_SUFFIX = ".manifest.json"


# --- Formatting ------------------------------------------------------------


def format_number(value: Any) -> str:
    """Render numbers with 9 significant digits; other values via ``str``."""
    if isinstance(value, bool) or value is None:
        return "" if value is None else str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def to_json(data: Any) -> str:
    """Serialise ``data`` deterministically, ending with a newline."""
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


# --- Writers ----------------------------------------------------------------


def _ensure_parent(path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IOError(f"Failed to create directory {path.parent}: {e}") from e


def write_csv(
    path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    provenance: Sequence[str] = (),
) -> Path:
    """
    Write a CSV table with provenance comments.

    Parameters
    ----------
    path : pathlib.Path
        Destination file; parent directories are created.
    header : Sequence[str]
        Column names.
    rows : Iterable[Sequence[Any]]
        Row values, formatted with :func:`format_number`.
    provenance : Sequence[str]
        Comment lines written before the header, without the '#'.

    Returns
    -------
    pathlib.Path
        The written path.
    """
    _ensure_parent(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as f:
            for line in provenance:
                f.write(f"# {line}\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_number(v) for v in row])
    except OSError as e:
        raise IOError(f"Failed to write file {path}: {e}") from e
    logger.info("Wrote %s", path)
    return path


def write_json(path: Path, data: Any) -> Path:
    _ensure_parent(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as f:
            f.write(to_json(data))
    except OSError as e:
        raise IOError(f"Failed to write file {path}: {e}") from e
    logger.info("Wrote %s", path)
    return path


# --- Manifest ---------------------------------------------------------------


@dataclass
class RunManifest:
    """
    Everything needed to regenerate a set of artifacts.

    ``params`` are the fully resolved command parameters; replaying them
    through the same command rewrites the artifacts byte for byte.
    """

    command: str
    params: Dict[str, Any]
    seed: Optional[int] = None
    config: Optional[Dict[str, Any]] = None
    artifacts: List[str] = field(default_factory=list)
    version: str = __version__

    def write(self, path: Path) -> Path:
        return write_json(path, asdict(self))

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        try:
            with Path(path).open("r", encoding="utf-8") as f:
                data = json.load(f)
            return cls(**data)
        except (OSError, json.JSONDecodeError, TypeError) as e:
            raise CVQKDError(f"Could not read manifest {path}: {e}") from e


def manifest_path_for(artifact: Path) -> Path:
    """``out/fig3.csv`` -> ``out/fig3.manifest.json``."""
    return artifact.with_name(artifact.stem + MANIFEST_SUFFIX)
