"""Run summaries and error responses"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class RunSummary(BaseModel):
    """Contents of summary.json"""
    success: bool = True
    command: str
    version: str
    results: Dict[str, Any] = Field(default_factory=dict)
    files: List[str] = Field(default_factory=list)


class CheckLine(BaseModel):
    """One row of check.csv"""
    invariant: str
    status: str
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "PASS"


class ErrorResponse(BaseModel):
    """Error rendered on stderr"""
    success: bool = False
    error: str
    detail: Optional[str] = None
