"""Pydantic schema for job files"""
import json
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from cli.core.config import settings
from src.exceptions import DomainViolation, GridMismatch, LdtkError, MissingField, ParseError, UnknownKey

COMMANDS = (
    "scgf", "rate-function", "steady", "correlations", "ldf-current", "ldf-density",
    "ring-instability", "simulate", "infinite-line", "check",
)

Command = Literal[
    "scgf", "rate-function", "steady", "correlations", "ldf-current", "ldf-density",
    "ring-instability", "simulate", "infinite-line", "check",
]


class JobConfig(BaseModel):
    """One batch job: a command, a model block and the command's parameters"""
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    command: Command
    model: Optional[Dict[str, Any]] = Field(default=None, description="Model block")

    # Grids given as [min, max, step]
    lambda_grid: Optional[List[float]] = None
    q_grid: Optional[List[float]] = None
    grid_n: int = Field(default=settings.DEFAULT_GRID_N, ge=16)

    # Spectral
    observable: Union[int, str] = 0

    # Macroscopic
    rho: Optional[List[float]] = Field(default=None, description="Reservoir densities [rho1, rho2]")
    rho_bar: Optional[List[float]] = Field(default=None, description="Ring densities")
    profile: Optional[List[float]] = Field(default=None, description="Density values on the grid_n+1 nodes")
    amplitude: Optional[float] = Field(default=None, description="Sine perturbation of the steady profile")
    indices: Optional[List[int]] = None
    convex_envelope: bool = False

    # Simulation
    t_max: Optional[float] = Field(default=None, gt=0)
    replicas: int = Field(default=1, ge=1)
    burn_in: Optional[float] = Field(default=None, ge=0)
    n_batches: int = Field(default=20, ge=1)
    seed: int = Field(default=0, ge=0)

    # Infinite line
    rho_a: Optional[float] = Field(default=None, gt=0)
    walker_samples: int = Field(default=0, ge=0)
    walker_time: float = Field(default=100.0, gt=0)

    # Output
    output: Optional[str] = None
    format: Literal["csv", "json"] = "csv"

    @field_validator("lambda_grid", "q_grid")
    @classmethod
    def check_grid(cls, v):
        if v is None:
            return v
        if len(v) != 3:
            raise GridMismatch("grids are [min, max, step]")
        lo, hi, step = v
        if not (np.isfinite(lo) and np.isfinite(hi) and np.isfinite(step)):
            raise GridMismatch("grid bounds must be finite")
        if step <= 0 or hi < lo:
            raise GridMismatch(f"grid {v} is empty or not ordered")
        return v

    @field_validator("rho")
    @classmethod
    def check_rho(cls, v):
        if v is not None and len(v) != 2:
            raise DomainViolation("rho must be [rho1, rho2]")
        return v

    @field_validator("rho_bar")
    @classmethod
    def check_rho_bar(cls, v):
        if v is not None and len(v) == 0:
            raise GridMismatch("rho_bar must not be empty")
        return v


def grid_values(grid) -> np.ndarray:
    """Points of a [min, max, step] grid, both ends included when the step divides the range."""
    lo, hi, step = (float(v) for v in grid)
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(count), 12)


def _translate(error: ValidationError) -> LdtkError:
    issues = error.errors()
    for kind, exc in (("extra_forbidden", UnknownKey), ("missing", MissingField)):
        for issue in issues:
            if issue["type"] == kind:
                return exc(".".join(str(p) for p in issue["loc"]))
    for issue in issues:
        cause = issue.get("ctx", {}).get("error")
        if isinstance(cause, LdtkError):
            return cause
    issue = issues[0]
    where = ".".join(str(p) for p in issue["loc"])
    return DomainViolation(f"{where}: {issue['msg']}")


def parse_config(text) -> JobConfig:
    """
    Validate a JSON job description.

    Raises:
        ParseError, UnknownKey, MissingField, DomainViolation, GridMismatch
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.lineno, e.msg) from e
    except UnicodeDecodeError as e:
        raise ParseError(1, f"not UTF-8: {e}") from e
    if not isinstance(data, dict):
        raise ParseError(1, "a job is a JSON object")
    try:
        return JobConfig.model_validate(data)
    except ValidationError as e:
        raise _translate(e) from e
