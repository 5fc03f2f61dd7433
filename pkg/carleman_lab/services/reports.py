"""
Report writers.

JSON and CSV artifacts are written atomically (temporary file in the target
directory, then os.replace) and deterministically: sorted JSON keys and a
fixed float format. Anything time-dependent goes to metadata.json only.
"""

import json
import logging
import math
import os
import platform
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from carleman_lab import __version__
from carleman_lab.core.inequalities import InequalityReport

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


def _atomic_write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug(f"Wrote {path}")
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


def render_json(data: Any) -> str:
    """Sorted, indented JSON; non-finite floats become null."""
    return json.dumps(_jsonable(data), indent=2, sort_keys=True, allow_nan=False) + "\n"


def render_csv(frame: pd.DataFrame) -> str:
    """CSV with a fixed float format and no index."""
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_json(path: Path, data: Any) -> Path:
    return _atomic_write_text(path, render_json(data))


def write_csv(path: Path, frame: pd.DataFrame) -> Path:
    return _atomic_write_text(path, render_csv(frame))


def reports_frame(reports: list[InequalityReport]) -> pd.DataFrame:
    """One row per report: id, parameters, every term and the ratio."""
    rows = []
    for report in reports:
        record = report.to_dict()
        row: dict[str, Any] = {"inequality": report.inequality, "spec_id": report.spec_id}
        row.update({f"param.{k}": v for k, v in report.params.items()})
        row.update(record["terms"])
        row["ratio"] = report.ratio
        row["flags"] = ";".join(report.flags)
        rows.append(row)
    frame = pd.DataFrame(rows)
    if not frame.empty:
        frame = frame.sort_values(["inequality", "spec_id"] + sorted(c for c in frame.columns if c.startswith("param.")),
                                  kind="mergesort").reset_index(drop=True)
    return frame


def write_reports(out_dir: Path, stem: str, reports: list[InequalityReport]) -> tuple[Path, Path]:
    """<stem>.json (list of report dicts) and <stem>.csv (summary rows)."""
    out_dir = Path(out_dir)
    json_path = write_json(out_dir / f"{stem}.json", [r.to_dict() for r in reports])
    csv_path = write_csv(out_dir / f"{stem}.csv", reports_frame(reports))
    return json_path, csv_path


def write_metadata(out_dir: Path, command: str, config: dict[str, Any]) -> Path:
    """metadata.json: timestamp, versions and the resolved configuration."""
    metadata = {
        "command": command,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "config": config,
    }
    return write_json(Path(out_dir) / "metadata.json", metadata)
