import json
import threading
import time

import pytest

from korpus.clients import MockChatClient
from korpus.errors import ChatClientError, ValidationError
from korpus.synthgen import JobSpec, read_records, run_generation_job
from korpus.synthgen.translate import NullTranslationHook


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return str(path)


def read_jsonl(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def context_records(n):
    return [{"id": f"r{i}", "paragraph": f"Perenggan nombor {i}."} for i in range(n)]


def spec_for(inp, out, **kw):
    kw.setdefault("recipe", "question_from_context")
    kw.setdefault("backoff_base", 0.0)
    return JobSpec(input_path=str(inp), output_path=str(out), **kw)


def test_basic_run_and_report(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl", context_records(5))
    out = str(tmp_path / "out.jsonl")
    spec = spec_for(inp, out)
    report = run_generation_job(spec, MockChatClient(), hook=NullTranslationHook())
    assert (report.total, report.succeeded, report.failed, report.skipped) == (5, 5, 0, 0)
    rows = read_jsonl(out)
    assert [r["id"] for r in rows] == [f"r{i}" for i in range(5)]
    assert all(r["indon"] is False for r in rows)
    assert all("generate a question related to the context" in r["prompt"] for r in rows)
    side = json.load(open(out + ".report.json"))
    assert side["config"]["recipe"] == "question_from_context"
    assert side["report"]["succeeded"] == 5


def test_input_ids_synthesized_and_duplicates_rejected(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl", [{"paragraph": "a"}, {"paragraph": "b"}])
    records = read_records(inp)
    assert [r["id"] for r in records] == ["in.jsonl:1", "in.jsonl:2"]

    dup = write_jsonl(tmp_path / "dup.jsonl",
                      [{"id": "x", "paragraph": "a"}, {"id": "x", "paragraph": "b"}])
    with pytest.raises(ValidationError):
        run_generation_job(spec_for(dup, tmp_path / "o.jsonl"), MockChatClient())


def test_failed_records_reported_not_written(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl", context_records(4))
    out = str(tmp_path / "out.jsonl")

    def fail_r2(turns, params, seed):
        if "nombor 2" in turns[0].content:
            raise ChatClientError("no capacity")
        return "soalan dijana"

    spec = spec_for(inp, out, retries=1)
    report = run_generation_job(spec, MockChatClient(fallback=fail_r2),
                                hook=NullTranslationHook())
    assert report.succeeded == 3
    assert report.failed == 1
    assert report.errors == [{"id": "r2", "error": "no capacity"}]
    assert [r["id"] for r in read_jsonl(out)] == ["r0", "r1", "r3"]


def test_resume_skips_completed_ids(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl", context_records(4))
    out = str(tmp_path / "out.jsonl")

    def fail_r2(turns, params, seed):
        if "nombor 2" in turns[0].content:
            raise ChatClientError("down")
        return "ok"

    run_generation_job(spec_for(inp, out, retries=0), MockChatClient(fallback=fail_r2),
                       hook=NullTranslationHook())

    second = MockChatClient()
    report = run_generation_job(spec_for(inp, out), second, hook=NullTranslationHook())
    assert report.skipped == 3
    assert report.succeeded == 1
    assert second.call_count == 1  # zero duplicate calls for completed records
    rows = read_jsonl(out)
    assert sorted(r["id"] for r in rows) == ["r0", "r1", "r2", "r3"]
    assert len(rows) == 4


def test_crash_leaves_resumable_output(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl", context_records(5))
    out = str(tmp_path / "out.jsonl")
    state = {"count": 0}

    def crash_on_third(turns, params, seed):
        state["count"] += 1
        if state["count"] == 3:
            raise RuntimeError("process killed")  # not a ChatClientError
        return "ok"

    with pytest.raises(RuntimeError):
        run_generation_job(spec_for(inp, out), MockChatClient(fallback=crash_on_third),
                           hook=NullTranslationHook())
    assert [r["id"] for r in read_jsonl(out)] == ["r0", "r1"]

    # simulate a torn write from the crash: partial trailing line
    with open(out, "a", encoding="utf-8") as f:
        f.write('{"id": "r2", "trunc')

    second = MockChatClient()
    report = run_generation_job(spec_for(inp, out), second, hook=NullTranslationHook())
    assert report.skipped == 2
    assert second.call_count == 3  # r2 redone (its line was torn), r3, r4
    rows = read_jsonl(out)  # every line parses again: the torn tail is gone
    assert [r["id"] for r in rows] == ["r0", "r1", "r2", "r3", "r4"]
    assert all("output" in r for r in rows)


def test_resume_drops_torn_but_parseable_tail(tmp_path):
    # complete JSON, missing newline: must be redone, not appended onto
    inp = write_jsonl(tmp_path / "in.jsonl", context_records(2))
    out = str(tmp_path / "out.jsonl")
    with open(out, "w", encoding="utf-8") as f:
        f.write(json.dumps({"id": "r0", "output": "lama"}) + "\n")
        f.write(json.dumps({"id": "r1", "output": "separuh"}))  # no newline

    client = MockChatClient()
    report = run_generation_job(spec_for(inp, out), client, hook=NullTranslationHook())
    assert report.skipped == 1
    assert client.call_count == 1
    rows = read_jsonl(out)
    assert [r["id"] for r in rows] == ["r0", "r1"]
    assert rows[1]["output"] != "separuh"


def test_retry_with_backoff_eventually_succeeds(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl", context_records(1))
    out = str(tmp_path / "out.jsonl")
    attempts = {"n": 0}

    def flaky(turns, params, seed):
        attempts["n"] += 1
        if attempts["n"] <= 2:
            raise ChatClientError("transient")
        return "ok"

    report = run_generation_job(spec_for(inp, out, retries=2),
                                MockChatClient(fallback=flaky), hook=NullTranslationHook())
    assert report.succeeded == 1
    assert attempts["n"] == 3


def test_retry_budget_exhausted(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl", context_records(1))
    out = str(tmp_path / "out.jsonl")
    attempts = {"n": 0}

    def always_down(turns, params, seed):
        attempts["n"] += 1
        raise ChatClientError("down")

    report = run_generation_job(spec_for(inp, out, retries=2),
                                MockChatClient(fallback=always_down),
                                hook=NullTranslationHook())
    assert report.failed == 1
    assert attempts["n"] == 3  # first try + 2 retries


def test_concurrent_output_order_matches_input(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl", context_records(12))
    out = str(tmp_path / "out.jsonl")
    lock = threading.Lock()

    def slow_early(turns, params, seed):
        # earlier records sleep longer, so completion order inverts
        num = int(turns[0].content.split("nombor ")[1].rstrip(".\ngenerate a question related to the context"))
        time.sleep((12 - num) * 0.002)
        with lock:
            return f"soalan {num}"

    spec = spec_for(inp, out, concurrency=4)
    report = run_generation_job(spec, MockChatClient(fallback=slow_early),
                                hook=NullTranslationHook())
    assert report.succeeded == 12
    assert [r["id"] for r in read_jsonl(out)] == [f"r{i}" for i in range(12)]


def test_seed_forwarded_per_record(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl", context_records(3))
    out = str(tmp_path / "out.jsonl")
    seeds = []

    def capture(turns, params, seed):
        seeds.append(seed)
        return "ok"

    run_generation_job(spec_for(inp, out, seed=100), MockChatClient(fallback=capture),
                       hook=NullTranslationHook())
    assert seeds == [100 ^ 0, 100 ^ 1, 100 ^ 2]


def test_structured_recipe_parses_reply(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl", [{"id": "p0", "paragraph": "Teks."}])
    out = str(tmp_path / "out.jsonl")
    reply = ('{"qa": [{"question": "Q?", "A": "1", "B": "2", "C": "3", "D": "4", '
             '"answer": "D"}, {"question": "Rosak", "answer": "E"}]}')
    spec = spec_for(inp, out, recipe="qa_choice")
    report = run_generation_job(spec, MockChatClient(fallback=lambda t, p, s: reply),
                                hook=NullTranslationHook())
    assert report.succeeded == 1
    row = read_jsonl(out)[0]
    assert row["qa"]["qa"][0]["answer"] == "D"
    assert row["rejected"] == [{"index": 1, "reason": "missing option A"}]


def test_unparseable_structured_reply_fails_record(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl", [{"id": "p0", "paragraph": "Teks."}])
    out = str(tmp_path / "out.jsonl")
    spec = spec_for(inp, out, recipe="qa_choice")
    report = run_generation_job(spec, MockChatClient(fallback=lambda t, p, s: "maaf, tiada"),
                                hook=NullTranslationHook())
    assert report.failed == 1
    assert read_jsonl(out) == []


def test_ultrachat_recipe_output_shape(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl",
                      [{"id": "u0", "paragraph": "Perenggan.", "question": "Soalan?"}])
    out = str(tmp_path / "out.jsonl")
    spec = spec_for(inp, out, recipe="ultrachat", turns=1)
    report = run_generation_job(spec, MockChatClient(), hook=NullTranslationHook())
    assert report.succeeded == 1
    row = read_jsonl(out)[0]
    assert row["paragraph"] == "Perenggan."
    assert row["question"] == "Soalan?"
    assert [t["role"] for t in row["turns"]] == \
        ["context", "user", "assistant", "user", "assistant"]
    assert row["indon"] is False


def test_ultrachat_recipe_retries_resume_midway(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl",
                      [{"id": "u0", "paragraph": "P.", "question": "S?"}])
    out = str(tmp_path / "out.jsonl")
    calls = {"n": 0}

    def fail_once(turns, params, seed):
        calls["n"] += 1
        if calls["n"] == 2:
            raise ChatClientError("hiccup")
        return f"balasan {calls['n']}"

    spec = spec_for(inp, out, recipe="ultrachat", turns=1, retries=1)
    report = run_generation_job(spec, MockChatClient(fallback=fail_once),
                                hook=NullTranslationHook())
    assert report.succeeded == 1
    row = read_jsonl(out)[0]
    # turn 2 (assistant) was kept from the first attempt, not regenerated
    assert row["turns"][2]["content"] == "balasan 1"
    assert len(row["turns"]) == 5


def test_missing_required_field_fails_record(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl", [{"id": "u0", "paragraph": "P."}])
    out = str(tmp_path / "out.jsonl")
    spec = spec_for(inp, out, recipe="ultrachat")
    report = run_generation_job(spec, MockChatClient(), hook=NullTranslationHook())
    assert report.failed == 1
    assert "question" in report.errors[0]["error"]


def test_evolve_recipes(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl",
                      [{"id": "e0", "instruction": "Tulis cerpen."}])
    out = str(tmp_path / "out.jsonl")
    spec = spec_for(inp, out, recipe="evolve", evolve_mode="breadth")
    report = run_generation_job(spec, MockChatClient(fallback=lambda t, p, s: "Prompt baru."),
                                hook=NullTranslationHook())
    assert report.succeeded == 1
    row = read_jsonl(out)[0]
    assert "#Given Prompt#:\nTulis cerpen." in row["prompt"]
    assert row["output"] == "Prompt baru."


def test_evolve_depth_without_method_fails_records(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl", [{"id": "e0", "instruction": "X."}])
    out = str(tmp_path / "out.jsonl")
    spec = spec_for(inp, out, recipe="evolve", evolve_mode="depth")
    report = run_generation_job(spec, MockChatClient(), hook=NullTranslationHook())
    assert report.failed == 1
    assert "method" in report.errors[0]["error"]


def test_indon_reply_translated_and_counted(tmp_path):
    inp = write_jsonl(tmp_path / "in.jsonl", context_records(1))
    out = str(tmp_path / "out.jsonl")
    indo = "jawaban bisa karena uang"
    report = run_generation_job(spec_for(inp, out),
                                MockChatClient(fallback=lambda t, p, s: indo))
    assert report.indon_translations == 1
    row = read_jsonl(out)[0]
    assert row["indon"] is True
    assert row["output_ms"] == "jawapan boleh kerana wang"


def test_spec_validation():
    with pytest.raises(ValidationError):
        JobSpec(recipe="nope", input_path="a", output_path="b")
    with pytest.raises(ValidationError):
        JobSpec(recipe="evolve", evolve_mode="spiral", input_path="a", output_path="b")
    with pytest.raises(ValidationError):
        JobSpec(recipe="ultrachat", input_path="a", output_path="b", concurrency=0)
    with pytest.raises(ValidationError):
        JobSpec(recipe="ultrachat", input_path="a", output_path="b", retries=-1)
