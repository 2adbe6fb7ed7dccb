from __future__ import annotations

import logging
import sys

from pythonjsonlogger.json import JsonFormatter
from rich.console import Console
from rich.logging import RichHandler


def setup_logging(level: str = "INFO", json_logs: bool = False) -> None:
    """Install one root handler: rich console output, or JSON lines on stderr."""
    root = logging.getLogger()
    for h in list(root.handlers):
        if getattr(h, "_hicc", False):
            root.removeHandler(h)

    if json_logs:
        handler: logging.Handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(JsonFormatter("%(asctime)s %(levelname)s %(name)s %(message)s"))
    else:
        handler = RichHandler(
            console=Console(stderr=True),
            show_path=False,
            rich_tracebacks=False,
            markup=False,
        )
        handler.setFormatter(logging.Formatter("%(message)s"))

    handler._hicc = True  # type: ignore[attr-defined]
    root.addHandler(handler)
    root.setLevel(level.upper())
