"""Tokenize documents and pack them into fixed-length training blocks.

The token stream is encode(d1) + [eos] + encode(d2) + [eos] + ... with an
eos after every document including the last, chunked greedily into blocks
of exactly context_length tokens. The final partial block is dropped by
default (keep_tail="pad" pads it with eos instead). Source spans tile every
block so each token can be traced back to its document.
"""

from __future__ import annotations

import json
import struct
import zlib
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Protocol, Sequence

from .corpus_io import Document
from .errors import ValidationError

PAD_DOC_ID = "<pad>"
PRESET_CONTEXT_LENGTHS = (4096, 32768)


class Tokenizer(Protocol):
    eos_id: int
    vocab_size: int

    def encode(self, text: str) -> list[int]: ...

    def decode(self, ids: Sequence[int]) -> str: ...


class WhitespaceTokenizer:
    """Reference tokenizer: words map to stable crc32 hash buckets.

    Id 0 is eos; words land in [1, vocab_size). decode() uses an id-to-word
    table filled during encode (first writer wins), so decode(encode(x))
    equals whitespace-normalized x provided no two distinct words of x share
    a bucket. Unseen ids decode to "<id>" placeholders.
    """

    def __init__(self, vocab_size: int = 65536):
        if vocab_size < 2:
            raise ValidationError("vocab_size must be >= 2")
        self.vocab_size = vocab_size
        self.eos_id = 0
        self._words: dict[int, str] = {}

    def encode(self, text: str) -> list[int]:
        out = []
        for w in text.split():
            tid = zlib.crc32(w.encode("utf-8")) % (self.vocab_size - 1) + 1
            self._words.setdefault(tid, w)
            out.append(tid)
        return out

    def decode(self, ids: Sequence[int]) -> str:
        return " ".join(self._words.get(i, f"<{i}>") for i in ids if i != self.eos_id)


def load_tokenizer(spec: str, vocab_size: int = 65536) -> Tokenizer:
    """Build a tokenizer from a CLI spec: "whitespace" or "external:<module>:<attr>".

    The external form imports a zero-argument factory returning a Tokenizer.
    """
    if spec == "whitespace":
        return WhitespaceTokenizer(vocab_size=vocab_size)
    if spec.startswith("external:"):
        target = spec[len("external:"):]
        mod_name, sep, attr = target.rpartition(":")
        if not sep or not mod_name or not attr:
            raise ValidationError(f"bad external tokenizer spec {spec!r}, want external:<module>:<attr>")
        import importlib
        try:
            mod = importlib.import_module(mod_name)
            factory = getattr(mod, attr)
        except (ImportError, AttributeError) as e:
            raise ValidationError(f"cannot load tokenizer {spec!r}: {e}") from e
        return factory()
    raise ValidationError(f"unknown tokenizer {spec!r}")


@dataclass
class Span:
    doc_id: str
    start: int  # offset into the doc's token sequence (the trailing eos is its last token)
    count: int


@dataclass
class PackedSequence:
    ids: list[int]
    source_spans: list[Span]


@dataclass
class PackStats:
    sequences: int = 0
    tokens_emitted: int = 0
    tokens_dropped_tail: int = 0
    docs_consumed: int = 0


@dataclass
class CheckResult:
    ok: bool
    diff: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def pack(
    docs: Iterable[Document],
    tok: Tokenizer,
    context_length: int,
    keep_tail: str = "drop",
    stats: PackStats | None = None,
) -> tuple[Iterator[PackedSequence], PackStats]:
    """Pack lazily. Returns (iterator, stats); stats are final once the iterator is drained."""
    if context_length < 2:
        raise ValidationError("context_length must be >= 2")
    if keep_tail not in ("drop", "pad"):
        raise ValidationError("keep_tail must be 'drop' or 'pad'")
    st = stats if stats is not None else PackStats()

    def gen() -> Iterator[PackedSequence]:
        buffer: list[int] = []
        spans: deque[tuple[str, int, int]] = deque()

        def take_block() -> PackedSequence:
            nonlocal buffer
            ids, buffer = buffer[:context_length], buffer[context_length:]
            taken: list[Span] = []
            need = context_length
            while need:
                did, start, count = spans[0]
                use = min(count, need)
                taken.append(Span(did, start, use))
                need -= use
                if use == count:
                    spans.popleft()
                else:
                    spans[0] = (did, start + use, count - use)
            st.sequences += 1
            st.tokens_emitted += context_length
            return PackedSequence(ids=ids, source_spans=taken)

        for doc in docs:
            try:
                ids = tok.encode(doc.text)
            except Exception as e:
                raise ValidationError(f"tokenizer failed on document {doc.id!r}: {e}") from e
            st.docs_consumed += 1
            buffer.extend(ids)
            buffer.append(tok.eos_id)
            spans.append((doc.id, 0, len(ids) + 1))
            while len(buffer) >= context_length:
                yield take_block()
        if buffer:
            if keep_tail == "pad":
                pad = context_length - len(buffer)
                buffer.extend([tok.eos_id] * pad)
                spans.append((PAD_DOC_ID, 0, pad))
                yield take_block()
            else:
                st.tokens_dropped_tail = len(buffer)

    return gen(), st


def reference_stream(docs: Iterable[Document], tok: Tokenizer) -> list[int]:
    """The eos-separated stream pack() chunks; exposed for verification."""
    out: list[int] = []
    for doc in docs:
        out.extend(tok.encode(doc.text))
        out.append(tok.eos_id)
    return out


def unpack_check(seqs: Sequence[PackedSequence], tok: Tokenizer,
                 docs: Iterable[Document]) -> CheckResult:
    """Verify block concatenation equals the reference stream prefix and spans
    map back to their documents' token ranges. Falsy result carries the first
    diff location."""
    doc_tokens: dict[str, list[int]] = {}
    stream: list[int] = []
    for doc in docs:
        ids = tok.encode(doc.text) + [tok.eos_id]
        doc_tokens[doc.id] = ids
        stream.extend(ids)

    flat: list[int] = []
    for si, seq in enumerate(seqs):
        if sum(s.count for s in seq.source_spans) != len(seq.ids):
            return CheckResult(False, f"block {si}: spans do not tile the block")
        off = 0
        for span in seq.source_spans:
            expect = ([tok.eos_id] * span.count if span.doc_id == PAD_DOC_ID
                      else doc_tokens.get(span.doc_id, [])[span.start:span.start + span.count])
            if len(expect) != span.count or seq.ids[off:off + span.count] != expect:
                return CheckResult(False, f"block {si}: span for {span.doc_id!r} at offset {off} mismatches")
            off += span.count
        flat.extend(seq.ids)

    # pad-mode tail makes flat longer than the stream; compare the real prefix
    n = min(len(flat), len(stream))
    for i in range(n):
        if flat[i] != stream[i]:
            return CheckResult(False, f"stream mismatch at token offset {i}")
    if len(flat) > len(stream):
        for i in range(len(stream), len(flat)):
            if flat[i] != tok.eos_id:
                return CheckResult(False, f"non-eos padding at token offset {i}")
    return CheckResult(True)


def write_packed(seqs: Iterable[PackedSequence], path: str) -> tuple[int, list[list[Span]]]:
    """Binary writer: per block, a little-endian u32 length then that many u32 ids.

    Returns (block count, per-block span lists) for the sidecar manifest.
    """
    count = 0
    all_spans: list[list[Span]] = []
    with open(path, "wb") as fh:
        for seq in seqs:
            for tid in seq.ids:
                if not 0 <= tid < (1 << 32):
                    raise ValidationError(f"token id {tid} does not fit u32")
            fh.write(struct.pack("<I", len(seq.ids)))
            fh.write(struct.pack("<%dI" % len(seq.ids), *seq.ids))
            all_spans.append(seq.source_spans)
            count += 1
    return count, all_spans


def read_packed(path: str) -> Iterator[list[int]]:
    """Read blocks written by write_packed."""
    with open(path, "rb") as fh:
        while True:
            head = fh.read(4)
            if not head:
                return
            (n,) = struct.unpack("<I", head)
            body = fh.read(4 * n)
            if len(body) != 4 * n:
                raise ValidationError(f"{path}: truncated block")
            yield list(struct.unpack("<%dI" % n, body))


def write_manifest(path: str, context_length: int, tokenizer_desc: dict,
                   stats: PackStats, spans: list[list[Span]], config_echo: dict | None = None):
    doc = {
        "format": "packed-u32le-v1",
        "context_length": context_length,
        "tokenizer": tokenizer_desc,
        "stats": {
            "sequences": stats.sequences,
            "tokens_emitted": stats.tokens_emitted,
            "tokens_dropped_tail": stats.tokens_dropped_tail,
            "docs_consumed": stats.docs_consumed,
        },
        "blocks": [
            {"spans": [[s.doc_id, s.start, s.count] for s in block]} for block in spans
        ],
    }
    if config_echo:
        doc["config"] = config_echo
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
