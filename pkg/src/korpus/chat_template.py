"""Render conversations to the Mistral instruction template and parse them back.

Format: <s>[INST] u1 [/INST] a1</s> [INST] u2 [/INST]
One <s> prefix, one space around the markers, </s> glued to the assistant
text. Content containing a literal marker is rejected instead of escaped;
there is no escape syntax, and silently mangling fine-tuning data is worse
than failing loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ValidationError

ROLES = ("system", "context", "user", "assistant")
MARKERS = ("<s>", "</s>", "[INST]", "[/INST]")

_BOS = "<s>"
_EOS = "</s>"
_INST = "[INST]"
_INST_END = "[/INST]"


class TemplateParseError(ValidationError):
    """Raised on malformed template strings; offset is a byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass
class Turn:
    role: str
    content: str
    content_ms: str | None = None
    indon: bool | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValidationError(f"unknown role {self.role!r}, expected one of {ROLES}")
        if self.content is None:
            raise ValidationError("turn content must not be null")


@dataclass
class Conversation:
    turns: list[Turn] = field(default_factory=list)
    # set by generators that stopped early; holds the failure stage/message
    error: dict | None = None

    def to_json_obj(self) -> dict:
        out = []
        for t in self.turns:
            d: dict = {"role": t.role, "content": t.content}
            if t.content_ms is not None:
                d["content_ms"] = t.content_ms
            if t.indon is not None:
                d["indon"] = t.indon
            out.append(d)
        obj: dict = {"turns": out}
        if self.error is not None:
            obj["error"] = self.error
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Conversation":
        if not isinstance(obj, dict) or not isinstance(obj.get("turns"), list):
            raise ValidationError("conversation record must be an object with a 'turns' list")
        turns = []
        for i, t in enumerate(obj["turns"]):
            if not isinstance(t, dict) or "role" not in t or "content" not in t:
                raise ValidationError(f"turn {i} must be an object with 'role' and 'content'")
            turns.append(Turn(role=t["role"], content=t["content"],
                              content_ms=t.get("content_ms"), indon=t.get("indon")))
        return cls(turns=turns, error=obj.get("error"))


def _check_alternation(turns: list[Turn]) -> int:
    """Returns the index of the first user turn; raises on invariant violations."""
    i = 0
    while i < len(turns) and turns[i].role in ("system", "context"):
        i += 1
    first_user = i
    if first_user == len(turns):
        raise ValidationError(f"no user turn found (turn {len(turns) - 1 if turns else 0})")
    for j in range(first_user, len(turns)):
        want = "user" if (j - first_user) % 2 == 0 else "assistant"
        if turns[j].role != want:
            raise ValidationError(
                f"turn {j}: expected role {want!r}, got {turns[j].role!r}")
    return first_user


def _check_markers(content: str, index: int):
    for m in MARKERS:
        if m in content:
            raise ValidationError(f"turn {index}: ambiguous content, contains {m!r}")


def render(conv: Conversation) -> str:
    """Render to the template string. Leading system/context turns are merged
    into the first user turn, separated by a blank line."""
    turns = conv.turns
    first_user = _check_alternation(turns)
    for i, t in enumerate(turns):
        _check_markers(t.content, i)

    prefix = "\n\n".join(t.content for t in turns[:first_user])
    parts = [_BOS]
    for j in range(first_user, len(turns)):
        t = turns[j]
        content = t.content
        if j == first_user and prefix:
            content = f"{prefix}\n\n{content}"
        if t.role == "user":
            sep = "" if j == first_user else " "
            parts.append(f"{sep}{_INST} {content} {_INST_END}")
        else:
            parts.append(f" {content}{_EOS}")
    return "".join(parts)


def _byte_offset(s: str, pos: int) -> int:
    return len(s[:pos].encode("utf-8"))


def parse(s: str) -> Conversation:
    """Inverse of render. Marker-delimited splitting; unbalanced markers raise
    TemplateParseError with the byte offset, marker-bearing content raises
    an ambiguous-content error."""
    if not s.startswith(_BOS + _INST + " "):
        raise TemplateParseError(f"expected {_BOS + _INST!r} prefix", _byte_offset(s, 0))
    turns: list[Turn] = []
    pos = len(_BOS)
    while True:
        # cursor sits on "[INST] "
        pos += len(_INST) + 1
        end = s.find(f" {_INST_END}", pos)
        if end < 0:
            raise TemplateParseError(f"unclosed {_INST!r}", _byte_offset(s, pos))
        content = s[pos:end]
        _check_ambiguous(content, s, pos)
        turns.append(Turn(role="user", content=content))
        pos = end + 1 + len(_INST_END)
        if pos == len(s):
            return Conversation(turns=turns)
        if not s.startswith(" ", pos):
            raise TemplateParseError(f"expected space after {_INST_END!r}", _byte_offset(s, pos))
        pos += 1
        if s.startswith(_INST + " ", pos):
            # open follow-up user turn with no assistant reply in between is
            # not a render() product; treat as unbalanced
            raise TemplateParseError("expected assistant text, found [INST]", _byte_offset(s, pos))
        end = s.find(_EOS, pos)
        if end < 0:
            raise TemplateParseError(f"unterminated assistant turn, missing {_EOS!r}",
                                     _byte_offset(s, pos))
        content = s[pos:end]
        _check_ambiguous(content, s, pos)
        turns.append(Turn(role="assistant", content=content))
        pos = end + len(_EOS)
        if pos == len(s):
            return Conversation(turns=turns)
        if not s.startswith(f" {_INST} ", pos):
            raise TemplateParseError(f"expected ' {_INST} ' after {_EOS!r}", _byte_offset(s, pos))
        pos += 1


def _check_ambiguous(content: str, s: str, pos: int):
    for m in MARKERS:
        at = content.find(m)
        if at >= 0:
            raise TemplateParseError(f"ambiguous content, contains {m!r}",
                                     _byte_offset(s, pos + at))
