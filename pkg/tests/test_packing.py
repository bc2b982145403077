import random

import pytest

from conftest import random_words
from korpus.corpus_io import Document
from korpus.errors import ValidationError
from korpus.packing import (
    PAD_DOC_ID,
    PackStats,
    WhitespaceTokenizer,
    load_tokenizer,
    pack,
    read_packed,
    reference_stream,
    unpack_check,
    write_manifest,
    write_packed,
)


class FixedTokenizer:
    """Maps each doc to a preset id list; eos is 2."""

    eos_id = 2
    vocab_size = 100

    def __init__(self, table):
        self.table = table

    def encode(self, text):
        return list(self.table[text])

    def decode(self, ids):
        return " ".join(str(i) for i in ids)


def test_frozen_example():
    # docs [5,6,7] and [8,9], eos 2, L=4:
    # stream 5 6 7 2 8 9 2 -> one block, tail of 3 dropped
    tok = FixedTokenizer({"a": [5, 6, 7], "b": [8, 9]})
    docs = [Document("a", "a"), Document("b", "b")]
    seqs, stats = pack(docs, tok, context_length=4)
    blocks = list(seqs)
    assert [b.ids for b in blocks] == [[5, 6, 7, 2]]
    assert [(s.doc_id, s.start, s.count) for s in blocks[0].source_spans] == [("a", 0, 4)]
    assert stats.sequences == 1
    assert stats.tokens_emitted == 4
    assert stats.tokens_dropped_tail == 3
    assert stats.docs_consumed == 2


def test_frozen_example_pad():
    tok = FixedTokenizer({"a": [5, 6, 7], "b": [8, 9]})
    docs = [Document("a", "a"), Document("b", "b")]
    seqs, stats = pack(docs, tok, context_length=4, keep_tail="pad")
    blocks = list(seqs)
    assert [b.ids for b in blocks] == [[5, 6, 7, 2], [8, 9, 2, 2]]
    last = blocks[1].source_spans
    assert [(s.doc_id, s.count) for s in last] == [("b", 3), (PAD_DOC_ID, 1)]
    assert stats.tokens_dropped_tail == 0


def test_eos_after_every_doc():
    tok = WhitespaceTokenizer(vocab_size=1000)
    docs = [Document(str(i), random_words(random.Random(i), 7)) for i in range(5)]
    stream = reference_stream(docs, tok)
    assert stream.count(tok.eos_id) == 5
    assert stream[-1] == tok.eos_id


def test_blocks_tile_reference_stream():
    rng = random.Random(21)
    tok = WhitespaceTokenizer(vocab_size=5000)
    docs = [Document(f"d{i}", random_words(rng, rng.randrange(1, 40))) for i in range(200)]
    L = 64
    seqs, stats = pack(docs, tok, L)
    blocks = list(seqs)
    flat = [t for b in blocks for t in b.ids]
    ref = reference_stream(docs, tok)
    assert all(len(b.ids) == L for b in blocks)
    assert flat == ref[:len(flat)]
    assert stats.tokens_dropped_tail == len(ref) - len(flat)
    assert stats.tokens_dropped_tail < L


def test_token_conservation():
    rng = random.Random(22)
    tok = WhitespaceTokenizer()
    docs = [Document(f"d{i}", random_words(rng, rng.randrange(1, 30))) for i in range(120)]
    ref_len = len(reference_stream(docs, tok))
    seqs, stats = pack(docs, tok, 128)
    list(seqs)
    assert stats.tokens_emitted + stats.tokens_dropped_tail == ref_len


def test_unpack_check_passes_and_catches_mutation():
    rng = random.Random(23)
    tok = WhitespaceTokenizer(vocab_size=3000)
    docs = [Document(f"d{i}", random_words(rng, rng.randrange(1, 25))) for i in range(60)]
    seqs, _ = pack(docs, tok, 32)
    blocks = list(seqs)
    assert unpack_check(blocks, tok, docs)
    blocks[1].ids[5] ^= 1
    res = unpack_check(blocks, tok, docs)
    assert not res
    assert res.diff


def test_unpack_check_pad_mode():
    tok = WhitespaceTokenizer(vocab_size=500)
    docs = [Document("only", "satu dua tiga")]
    seqs, _ = pack(docs, tok, 16, keep_tail="pad")
    blocks = list(seqs)
    assert len(blocks) == 1
    assert unpack_check(blocks, tok, docs)


def test_doc_spanning_multiple_blocks():
    tok = FixedTokenizer({"long": list(range(10, 21))})  # 11 ids + eos = 12
    docs = [Document("long", "long")]
    seqs, _ = pack(docs, tok, 4, keep_tail="pad")
    blocks = list(seqs)
    assert len(blocks) == 3
    spans = [s for b in blocks for s in b.source_spans if s.doc_id == "long"]
    # consecutive spans cover the doc's 12 tokens in order
    offsets = []
    for s in spans:
        offsets.extend(range(s.start, s.start + s.count))
    assert offsets == list(range(12))


def test_context_length_validation():
    tok = WhitespaceTokenizer()
    with pytest.raises(ValidationError):
        pack([], tok, 1)
    with pytest.raises(ValidationError):
        pack([], tok, 4096, keep_tail="truncate")


def test_tokenizer_failure_names_document():
    class Broken:
        eos_id = 0
        vocab_size = 10

        def encode(self, text):
            raise RuntimeError("boom")

        def decode(self, ids):
            return ""

    seqs, _ = pack([Document("bad-doc", "x")], Broken(), 8)
    with pytest.raises(ValidationError) as e:
        list(seqs)
    assert "bad-doc" in str(e.value)


def test_whitespace_tokenizer_roundtrip():
    tok = WhitespaceTokenizer(vocab_size=1 << 20)
    text = "pasar pagi jual ikan segar"
    ids = tok.encode(text)
    assert all(1 <= i < tok.vocab_size for i in ids)
    assert tok.decode(ids) == text
    assert tok.decode(ids + [tok.eos_id]) == text  # eos skipped


def test_whitespace_tokenizer_stable_ids():
    a = WhitespaceTokenizer(vocab_size=4096)
    b = WhitespaceTokenizer(vocab_size=4096)
    assert a.encode("kereta api malam") == b.encode("kereta api malam")


def test_load_tokenizer_specs():
    tok = load_tokenizer("whitespace", vocab_size=128)
    assert tok.vocab_size == 128
    with pytest.raises(ValidationError):
        load_tokenizer("sentencepiece")
    with pytest.raises(ValidationError):
        load_tokenizer("external:not_a_module:factory")
    with pytest.raises(ValidationError):
        load_tokenizer("external:nocolon")


def test_binary_roundtrip(tmp_path):
    rng = random.Random(31)
    tok = WhitespaceTokenizer(vocab_size=2000)
    docs = [Document(f"d{i}", random_words(rng, 10)) for i in range(30)]
    seqs, _ = pack(docs, tok, 16)
    blocks = list(seqs)
    path = str(tmp_path / "packed.bin")
    count, spans = write_packed(blocks, path)
    assert count == len(blocks)
    back = list(read_packed(path))
    assert back == [b.ids for b in blocks]


def test_write_packed_rejects_oversized_ids(tmp_path):
    from korpus.packing import PackedSequence, Span
    seq = PackedSequence(ids=[1 << 32], source_spans=[Span("d", 0, 1)])
    with pytest.raises(ValidationError):
        write_packed([seq], str(tmp_path / "x.bin"))


def test_manifest_contents(tmp_path):
    import json
    tok = WhitespaceTokenizer(vocab_size=2000)
    docs = [Document("a", "satu dua tiga empat lima enam tujuh lapan")]
    stats = PackStats()
    seqs, _ = pack(docs, tok, 4, stats=stats)
    blocks = list(seqs)
    _, spans = write_packed(blocks, str(tmp_path / "p.bin"))
    mpath = str(tmp_path / "p.json")
    write_manifest(mpath, 4, {"kind": "whitespace", "vocab_size": 2000}, stats, spans)
    with open(mpath) as f:
        man = json.load(f)
    assert man["format"] == "packed-u32le-v1"
    assert man["context_length"] == 4
    assert man["stats"]["sequences"] == stats.sequences
    assert man["stats"]["tokens_emitted"] == stats.sequences * 4
    assert len(man["blocks"]) == len(blocks)


def test_stats_object_shared_when_passed_in():
    tok = WhitespaceTokenizer()
    mine = PackStats()
    seqs, returned = pack([Document("a", "x y z")], tok, 2, stats=mine)
    assert returned is mine
    list(seqs)
    assert mine.sequences == 2
