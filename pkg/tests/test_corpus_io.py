import json
import tracemalloc

import pytest

from korpus.corpus_io import CorpusFormatError, Document, read_stream, write_stream


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def test_roundtrip(tmp_path):
    docs = [
        Document("a", "teks pertama"),
        Document("b", "teks kedua", meta={"lang": "ms"}),
        Document("c", ""),
    ]
    path = str(tmp_path / "corpus.jsonl")
    stats = write_stream(docs, path)
    assert stats.record_count == 3
    back = list(read_stream(path))
    assert back == docs


def test_stats(tmp_path):
    path = str(tmp_path / "c.jsonl")
    stats = write_stream([Document("a", "xx"), Document("b", "xxxx")], path)
    assert stats.record_count == 2
    assert stats.min_len == 2
    assert stats.max_len == 4
    assert stats.mean_len == 3.0
    assert stats.total_bytes > 0


def test_missing_id_synthesized(tmp_path):
    path = str(tmp_path / "noid.jsonl")
    write_jsonl(path, [{"text": "satu"}, {"id": "x", "text": "dua"}, {"text": "tiga"}])
    docs = list(read_stream(path))
    assert docs[0].id == "noid.jsonl:1"
    assert docs[1].id == "x"
    assert docs[2].id == "noid.jsonl:3"


def test_bad_json_names_line(tmp_path):
    path = str(tmp_path / "bad.jsonl")
    with open(path, "w") as f:
        f.write('{"id": "a", "text": "ok"}\n')
        f.write("{nope\n")
    with pytest.raises(CorpusFormatError) as e:
        list(read_stream(path))
    assert "2" in str(e.value)


def test_bad_utf8_names_byte_offset(tmp_path):
    path = str(tmp_path / "bin.jsonl")
    good = b'{"id": "a", "text": "ok"}\n'
    with open(path, "wb") as f:
        f.write(good)
        f.write(b'{"id": "b", "text": "\xff\xfe"}\n')
    with pytest.raises(CorpusFormatError) as e:
        list(read_stream(path))
    # offset of the first bad byte from file start
    assert str(len(good) + len(b'{"id": "b", "text": "')) in str(e.value)


def test_non_string_text_rejected(tmp_path):
    path = str(tmp_path / "types.jsonl")
    write_jsonl(path, [{"id": "a", "text": 5}])
    with pytest.raises(CorpusFormatError):
        list(read_stream(path))


def test_missing_file(tmp_path):
    with pytest.raises(CorpusFormatError) as e:
        list(read_stream(str(tmp_path / "nope.jsonl")))
    assert "nope.jsonl" in str(e.value)


def test_write_is_atomic(tmp_path):
    path = str(tmp_path / "out.jsonl")
    write_stream([Document("a", "ok")], path)

    def boom():
        yield Document("b", "x")
        raise RuntimeError("mid-stream failure")

    with pytest.raises(RuntimeError):
        write_stream(boom(), path)
    # previous contents survive a failed rewrite
    assert [d.id for d in read_stream(path)] == ["a"]


def test_streaming_memory(tmp_path):
    """Reading must not hold the whole file: peak traced memory stays far
    below the file size while iterating a ~8MB corpus."""
    path = str(tmp_path / "big.jsonl")
    row = {"id": "r", "text": "panjang " * 100}
    with open(path, "w") as f:
        line = json.dumps(row) + "\n"
        for i in range(10000):
            f.write(line)
    size = 10000 * len(json.dumps(row) + "\n")
    assert size > 8_000_000

    tracemalloc.start()
    count = 0
    for doc in read_stream(path):
        count += 1
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    assert count == 10000
    assert peak < size / 4
