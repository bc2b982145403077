"""Indonesian detection and Malay substitution hooks.

The default hook is a wordlist heuristic: texts whose token stream carries
enough distinctly-Indonesian function words get flagged, and the fallback
translator rewrites only those words while leaving fenced code blocks
byte-for-byte untouched. A real NMT model can be plugged in through the
same interface.
"""

from __future__ import annotations

import re
from typing import Callable, Protocol

# words that are Indonesian rather than Malay usage; Malay counterparts where
# a safe one-to-one rewrite exists
DEFAULT_REPLACEMENTS = {
    "bahwa": "bahawa",
    "bisa": "boleh",
    "karena": "kerana",
    "jawaban": "jawapan",
    "pertanyaan": "soalan",
    "silakan": "sila",
    "jadwal": "jadual",
    "metode": "kaedah",
    "kode": "kod",
    "saran": "cadangan",
    "teknis": "teknikal",
    "evaluasi": "penilaian",
    "mengevaluasi": "menilai",
    "butuh": "perlu",
    "uang": "wang",
    "mobil": "kereta",
    "kantor": "pejabat",
    "senin": "isnin",
    "handal": "cekap",
    "ngobrol": "berbual",
}

# markers with no safe rewrite still count toward detection
DEFAULT_MARKERS = frozenset(DEFAULT_REPLACEMENTS) | {
    "nggak", "gak", "udah", "aja", "kayak", "gimana", "gitu", "gini",
    "kalo", "sih", "dong", "deh", "nih", "banget", "bikin", "ketemu",
    "pengen", "kalian", "cewek", "cowok",
}

_WORD_RE = re.compile(r"\w+", re.UNICODE)
_FENCE_RE = re.compile(r"```.*?```", re.DOTALL)


class TranslationHook(Protocol):
    def detect_indonesian(self, text: str) -> bool: ...

    def translate_to_malay(self, text: str) -> str: ...


def _sub_outside_fences(text: str, fn: Callable[[str], str]) -> str:
    """Apply fn to the text between fenced code blocks; fences pass through
    untouched. An unterminated fence protects everything after it."""
    out = []
    pos = 0
    for m in _FENCE_RE.finditer(text):
        out.append(fn(text[pos:m.start()]))
        out.append(m.group(0))
        pos = m.end()
    rest = text[pos:]
    cut = rest.find("```")
    if cut >= 0:
        out.append(fn(rest[:cut]))
        out.append(rest[cut:])
    else:
        out.append(fn(rest))
    return "".join(out)


class WordlistTranslationHook:
    """Detection: flag when >= min_hits marker words appear and they make up
    at least `threshold` of all tokens. Translation: word-for-word rewrite
    of the replacement table outside code fences, keeping sentence case."""

    def __init__(self, threshold: float = 0.05, min_hits: int = 1,
                 markers: frozenset[str] | None = None,
                 replacements: dict[str, str] | None = None,
                 translate_fn: Callable[[str], str] | None = None):
        self.threshold = threshold
        self.min_hits = min_hits
        self.markers = markers if markers is not None else DEFAULT_MARKERS
        self.replacements = replacements if replacements is not None else DEFAULT_REPLACEMENTS
        self.translate_fn = translate_fn
        if self.replacements:
            self._word_sub = re.compile(
                r"\b(" + "|".join(re.escape(w) for w in sorted(self.replacements, key=len, reverse=True)) + r")\b",
                re.IGNORECASE)
        else:
            self._word_sub = None

    def detect_indonesian(self, text: str) -> bool:
        words = _WORD_RE.findall(text.lower())
        if not words:
            return False
        hits = sum(1 for w in words if w in self.markers)
        return hits >= self.min_hits and hits / len(words) >= self.threshold

    def _replace_words(self, segment: str) -> str:
        if self._word_sub is None:
            return segment

        def repl(m: re.Match) -> str:
            word = m.group(0)
            target = self.replacements.get(word.lower(), word)
            if word.isupper():
                return target.upper()
            if word[:1].isupper():
                return target[:1].upper() + target[1:]
            return target

        return self._word_sub.sub(repl, segment)

    def translate_to_malay(self, text: str) -> str:
        fn = self.translate_fn or self._replace_words
        return _sub_outside_fences(text, fn)


class NullTranslationHook:
    """Never flags, never rewrites."""

    def detect_indonesian(self, text: str) -> bool:
        return False

    def translate_to_malay(self, text: str) -> str:
        return text
