from __future__ import annotations

from pathlib import Path
from typing import Optional


class HiccError(ValueError):
    """Base class for every error the pipeline reports as a one-line diagnostic."""


class IngestError(HiccError):
    def __init__(self, message: str, path: Optional[str | Path] = None, line: Optional[int] = None):
        self.path = str(path) if path is not None else None
        self.line = line
        where = ""
        if self.path is not None:
            where = f"{self.path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(f"{where}{message}")


class ValidationError(HiccError):
    pass


class ConfigError(HiccError):
    pass


class SchemaMismatchError(HiccError):
    pass


class TrainingError(HiccError):
    pass
