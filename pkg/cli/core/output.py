"""Output directory handling for one run"""
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from cli.core.config import settings
from cli.schemas.results import RunSummary
from src.exceptions import InputError
from src.tables import write_table

logger = logging.getLogger(__name__)


class RunOutput:
    """Collects the tables and scalar results written by one command"""

    def __init__(self, directory, fmt: str = "csv"):
        self.directory = Path(directory)
        self.format = fmt
        self.files = []
        self.results = {}
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise InputError(f"output directory {self.directory} is not writable: {e}") from e

    def table(self, name: str, frame: pd.DataFrame, fmt=None) -> Path:
        fmt = fmt or self.format
        path = write_table(frame, self.directory / f"{name}.{fmt}", fmt, settings.FLOAT_FORMAT)
        self.files.append(path.name)
        logger.info("wrote %s (%d rows)", path, len(frame))
        return path

    def record(self, **values):
        self.results.update({key: _clean(value) for key, value in values.items()})

    def summary(self, command: str) -> Path:
        summary = RunSummary(command=command, version=settings.VERSION, results=self.results,
                             files=list(self.files))
        path = self.directory / "summary.json"
        path.write_text(json.dumps(summary.model_dump(), indent=1, allow_nan=False) + "\n")
        return path


def _clean(value):
    if isinstance(value, dict):
        return {key: _clean(v) for key, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value
