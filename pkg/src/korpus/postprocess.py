"""Rule-based cleaning for scraped text corpora.

Four rules, applied in a fixed order per document:
  1. drop texts containing an HTTP-error pattern (case-insensitive substring)
  2. drop texts shorter than min_chars characters (Unicode scalars, not bytes)
  3. cap runs of U+0020 spaces at max_space_run
  4. cap runs of '.' at max_dot_run

The "HTTP error" criterion is an interpretation: the source procedure names
the category but never defines it, so the pattern list below is a default
and stays overridable (CLI --http-error-patterns).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .corpus_io import Document
from .errors import ValidationError

DEFAULT_HTTP_ERROR_PATTERNS = (
    "404 not found",
    "403 forbidden",
    "500 internal server error",
    "access denied",
    "request timed out",
    "page not found",
)


@dataclass
class CleanConfig:
    min_chars: int = 3
    max_space_run: int = 6
    max_dot_run: int = 6
    http_error_patterns: tuple[str, ...] = DEFAULT_HTTP_ERROR_PATTERNS

    def __post_init__(self):
        if self.min_chars < 0:
            raise ValidationError("min_chars must be >= 0")
        if self.max_space_run < 1 or self.max_dot_run < 1:
            raise ValidationError("run caps must be >= 1")


@dataclass
class CleanReport:
    seen: int = 0
    kept: int = 0
    dropped_short: int = 0
    dropped_http_error: int = 0
    # documents whose text changed under the respective normalizer
    normalized_space: int = 0
    normalized_dots: int = 0


def filter_http_error(doc: Document, patterns: Iterable[str]) -> bool:
    """True = keep. Drops when any pattern occurs case-insensitively in the text."""
    low = doc.text.lower()
    return not any(p.lower() in low for p in patterns)


def filter_length(doc: Document, min_chars: int) -> bool:
    """True = keep. Drops texts with fewer than min_chars Unicode characters."""
    return len(doc.text) >= min_chars


def normalize_whitespace(text: str, cap: int) -> str:
    """Replace every run of cap or more U+0020 spaces with exactly cap spaces."""
    return re.sub(" {%d,}" % cap, " " * cap, text)


def normalize_dots(text: str, cap: int) -> str:
    """Replace every run of cap or more '.' characters with exactly cap dots."""
    return re.sub(r"\.{%d,}" % cap, "." * cap, text)


def clean_corpus(
    docs: Iterable[Document],
    cfg: CleanConfig | None = None,
    report: CleanReport | None = None,
) -> tuple[Iterator[Document], CleanReport]:
    """Apply all four rules lazily.

    Returns (iterator, report). The report's counters are final only after
    the iterator is fully consumed.
    """
    cfg = cfg or CleanConfig()
    rep = report if report is not None else CleanReport()

    def gen() -> Iterator[Document]:
        for doc in docs:
            rep.seen += 1
            if not filter_http_error(doc, cfg.http_error_patterns):
                rep.dropped_http_error += 1
                continue
            if not filter_length(doc, cfg.min_chars):
                rep.dropped_short += 1
                continue
            out = normalize_whitespace(doc.text, cfg.max_space_run)
            if out != doc.text:
                rep.normalized_space += 1
            out2 = normalize_dots(out, cfg.max_dot_run)
            if out2 != out:
                rep.normalized_dots += 1
            rep.kept += 1
            yield Document(doc.id, out2, doc.meta)

    return gen(), rep


def clean_text(text: str, cfg: CleanConfig | None = None) -> str | None:
    """Single-text convenience wrapper. Returns the cleaned text or None if dropped."""
    cfg = cfg or CleanConfig()
    it, _ = clean_corpus([Document("x", text)], cfg)
    out = list(it)
    return out[0].text if out else None
