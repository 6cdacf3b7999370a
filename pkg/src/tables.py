"""CSV and JSON table I/O shared by the library and the command line."""
import json
from pathlib import Path

import numpy as np
import pandas as pd
from pandas.errors import ParserError

FLOAT_FORMAT = "%.17g"


def write_table(frame: pd.DataFrame, path, fmt="csv", float_format=FLOAT_FORMAT):
    """Write a table as CSV (header row, 17 significant digits) or JSON records."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        frame.to_csv(out, index=False, float_format=float_format, lineterminator="\n")
    elif fmt == "json":
        records = [
            {key: _plain(value) for key, value in row.items()}
            for row in frame.to_dict(orient="records")
        ]
        out.write_text(json.dumps(records, indent=1) + "\n")
    else:
        raise ValueError(f"Unknown table format: {fmt}")
    return out


def read_table(file_path):
    """Read a table written by :func:`write_table` (CSV or JSON records)."""
    path = Path(file_path)
    if path.suffix == ".json":
        return pd.DataFrame(json.loads(path.read_text()))
    try:
        return pd.read_csv(path, comment="#")
    except ParserError:
        return pd.read_csv(path, engine="python")


def profile_frame(x, values, label="value") -> pd.DataFrame:
    return pd.DataFrame({"x": np.asarray(x, dtype=float), label: np.asarray(values, dtype=float)})


def kernel_frame(x, kernel) -> pd.DataFrame:
    """Long-format (x, y, value) table of a square kernel sampled on ``x``."""
    x = np.asarray(x, dtype=float)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    return pd.DataFrame({"x": xx.ravel(), "y": yy.ravel(), "value": np.asarray(kernel).ravel()})


def _plain(value):
    if isinstance(value, (np.floating, float)):
        return float(value) if np.isfinite(value) else str(value)
    if isinstance(value, np.integer):
        return int(value)
    return value
