"""Extract structured QA items from raw model output.

The clients wrap their object in prose or emit Python-repr payloads, so the
parser scans for the outermost balanced object literal (quote-aware), tries
JSON first, then a Python literal, and digs through nested {"qa": ...}
wrappers. Items are validated individually; bad ones are rejected with a
reason instead of poisoning the batch.
"""

from __future__ import annotations

import ast
import json
from dataclasses import dataclass

from ..errors import ValidationError

LETTERS = ("A", "B", "C", "D")


@dataclass
class QAChoiceItem:
    question: str
    options: dict[str, str]  # keys exactly A-D
    answer: str

    def to_json_obj(self) -> dict:
        out: dict = {"question": self.question}
        out.update(self.options)
        out["answer"] = self.answer
        return out


@dataclass
class QAItem:
    question: str
    answer: str

    def to_json_obj(self) -> dict:
        return {"question": self.question, "answer": self.answer}


@dataclass
class Rejection:
    index: int
    reason: str


def _scan_literal(raw: str) -> tuple[str, int]:
    """Return (literal substring, byte offset of its start) for the outermost
    balanced {...} or [...] in raw."""
    start = -1
    opener = closer = ""
    for i, ch in enumerate(raw):
        if ch in "{[":
            start, opener, closer = i, ch, "}" if ch == "{" else "]"
            break
    if start < 0:
        raise ValidationError("no object literal found (byte offset 0)")
    depth = 0
    quote = None
    i = start
    while i < len(raw):
        ch = raw[i]
        if quote:
            if ch == "\\":
                i += 2
                continue
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch in "{[":
            depth += 1
        elif ch in "}]":
            depth -= 1
            if depth == 0:
                return raw[start:i + 1], len(raw[:start].encode("utf-8"))
        i += 1
    raise ValidationError(
        f"unbalanced {opener!r} (byte offset {len(raw[:start].encode('utf-8'))})")


def _load_literal(text: str, offset: int):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError) as e:
        raise ValidationError(f"unparseable structured output (byte offset {offset}): {e}") from e


def _validate_choice(item, index: int) -> QAChoiceItem | Rejection:
    if not isinstance(item, dict):
        return Rejection(index, "item is not an object")
    question = item.get("question")
    if not isinstance(question, str) or not question.strip():
        return Rejection(index, "missing question")
    source = item.get("options") if isinstance(item.get("options"), dict) else item
    options = {}
    for letter in LETTERS:
        value = source.get(letter)
        if not isinstance(value, str) or not value.strip():
            return Rejection(index, f"missing option {letter}")
        options[letter] = value
    answer = item.get("answer")
    if answer not in LETTERS:
        return Rejection(index, "answer not in A-D")
    return QAChoiceItem(question=question, options=options, answer=answer)


def _validate_open(item, index: int) -> QAItem | Rejection:
    if not isinstance(item, dict):
        return Rejection(index, "item is not an object")
    question = item.get("question")
    answer = item.get("answer")
    if not isinstance(question, str) or not question.strip():
        return Rejection(index, "missing question")
    if not isinstance(answer, str) or not answer.strip():
        return Rejection(index, "missing answer")
    return QAItem(question=question, answer=answer)


def parse_structured_qa(raw: str, schema: str,
                        rejections: list[Rejection] | None = None) -> list:
    """Parse raw into validated items. schema is 'qa_choice' or 'open_qa'.

    Per-item failures go into the optional rejections list; a raw string with
    no parseable payload raises instead.
    """
    if schema not in ("qa_choice", "open_qa"):
        raise ValidationError(f"unknown schema {schema!r}, expected qa_choice or open_qa")
    literal, offset = _scan_literal(raw)
    obj = _load_literal(literal, offset)
    # payloads arrive as {"qa": [...]}, {"qa": {"qa": [...]}}, a full record
    # holding such an object, or a bare list
    seen = 0
    while isinstance(obj, dict) and "qa" in obj and seen < 4:
        obj = obj["qa"]
        seen += 1
    if not isinstance(obj, list):
        raise ValidationError(
            f"structured output has no item list (byte offset {offset})")
    validate = _validate_choice if schema == "qa_choice" else _validate_open
    items = []
    for i, entry in enumerate(obj):
        result = validate(entry, i)
        if isinstance(result, Rejection):
            if rejections is not None:
                rejections.append(result)
        else:
            items.append(result)
    return items
