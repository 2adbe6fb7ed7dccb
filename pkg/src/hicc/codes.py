from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Optional

import pandas as pd

_SPACE_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class CodeNormalization:
    uppercase: bool = True
    strip_dots: bool = False
    normalize_form: str = "NFKC"


def normalize_code(code: Optional[str], cfg: CodeNormalization = CodeNormalization()) -> Optional[str]:
    """Canonical form of an ICD/CPT/GPI code; empty input maps to None."""
    if code is None:
        return None
    c = unicodedata.normalize(cfg.normalize_form, str(code))
    c = _SPACE_RE.sub("", c)
    if cfg.strip_dots:
        c = c.replace(".", "")
    if cfg.uppercase:
        c = c.upper()
    return c or None


def normalize_codes(codes: Iterable[str], cfg: CodeNormalization = CodeNormalization()) -> frozenset[str]:
    out = set()
    for c in codes:
        n = normalize_code(c, cfg)
        if n is not None:
            out.add(n)
    return frozenset(out)


def normalize_code_series(codes: pd.Series, cfg: CodeNormalization = CodeNormalization()) -> pd.Series:
    """Vectorized normalize_code over a string column; missing codes become ''."""
    s = codes.fillna("").astype(str).str.normalize(cfg.normalize_form)
    s = s.str.replace(_SPACE_RE.pattern, "", regex=True)
    if cfg.strip_dots:
        s = s.str.replace(".", "", regex=False)
    if cfg.uppercase:
        s = s.str.upper()
    return s
