"""JSONL corpus reading and writing.

Records are one JSON object per line with a required "text" field, an
optional "id" and an optional flat "meta" object (string keys and values).
Interior newlines live inside the JSON string escaping, so a record never
spans lines. Reading is lazy: one record is held in memory at a time, so
files larger than RAM stream fine.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import ValidationError


class CorpusFormatError(ValidationError):
    """Malformed corpus input (bad JSON, bad UTF-8, wrong field types)."""


@dataclass
class Document:
    id: str
    text: str
    meta: dict[str, str] = field(default_factory=dict)


@dataclass
class DatasetStats:
    record_count: int = 0
    total_bytes: int = 0
    min_len: int | None = None
    max_len: int | None = None
    mean_len: float = 0.0


def read_stream(path: str) -> Iterator[Document]:
    """Yield Documents from a JSONL file in file order.

    Missing ids are synthesized as "<filename>:<line-number>". Malformed
    JSON raises with the line number; invalid UTF-8 raises with the byte
    offset of the first bad byte.
    """
    name = os.path.basename(path)
    offset = 0
    try:
        fh = open(path, "rb")
    except FileNotFoundError as e:
        raise CorpusFormatError(f"no such input file: {path}") from e
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line_start = offset
            offset += len(raw)
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise CorpusFormatError(
                    f"{path}: invalid UTF-8 at byte {line_start + e.start}"
                ) from None
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"{path}:{lineno}: malformed JSON ({e.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusFormatError(f"{path}:{lineno}: record is not an object")
            text = obj.get("text")
            if not isinstance(text, str):
                raise CorpusFormatError(f"{path}:{lineno}: missing or non-string 'text' field")
            doc_id = obj.get("id")
            if doc_id is None:
                doc_id = f"{name}:{lineno}"
            elif not isinstance(doc_id, str):
                doc_id = str(doc_id)
            if not doc_id:
                raise CorpusFormatError(f"{path}:{lineno}: empty 'id'")
            meta_raw = obj.get("meta") or {}
            if not isinstance(meta_raw, dict):
                raise CorpusFormatError(f"{path}:{lineno}: 'meta' is not an object")
            meta = {
                str(k): v if isinstance(v, str) else json.dumps(v, ensure_ascii=False)
                for k, v in meta_raw.items()
            }
            yield Document(id=doc_id, text=text, meta=meta)


def write_stream(docs: Iterable[Document], path: str) -> DatasetStats:
    """Write Documents as JSONL (atomically, via a .tmp rename) and return stats."""
    count = 0
    total = 0
    min_len: int | None = None
    max_len: int | None = None
    len_sum = 0
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as fh:
            for doc in docs:
                rec: dict = {"id": doc.id, "text": doc.text}
                if doc.meta:
                    rec["meta"] = doc.meta
                data = (json.dumps(rec, ensure_ascii=False) + "\n").encode("utf-8")
                fh.write(data)
                count += 1
                total += len(data)
                n = len(doc.text)
                len_sum += n
                if min_len is None or n < min_len:
                    min_len = n
                if max_len is None or n > max_len:
                    max_len = n
    except OSError as e:
        raise OSError(f"writing {path}: {e}") from e
    os.replace(tmp, path)
    return DatasetStats(
        record_count=count,
        total_bytes=total,
        min_len=min_len,
        max_len=max_len,
        mean_len=len_sum / count if count else 0.0,
    )
