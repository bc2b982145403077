"""Batch generation over a record file: retries, resumption, bounded concurrency.

Records already present in the output (matched by id) are never re-requested,
so a crashed or interrupted job can simply be rerun. Output lines are written
in input order regardless of concurrency.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from ..chat_template import Conversation, Turn
from ..clients import ChatClient, GenerationParams
from ..errors import ChatClientError, ValidationError
from .prompts import EVOLVE_MODES, RECIPES, build_prompt, evolve
from .structured import parse_structured_qa
from .translate import TranslationHook, WordlistTranslationHook
from .ultrachat import ultrachat

JOB_RECIPES = RECIPES + ("evolve", "ultrachat")


@dataclass
class JobSpec:
    recipe: str
    input_path: str
    output_path: str
    concurrency: int = 1
    retries: int = 2  # retry budget per record, on top of the first attempt
    backoff_base: float = 1.0
    turns: int = 1  # ultrachat loop depth
    evolve_mode: str = "breadth"
    evolve_method: str | None = None
    seed: int | None = None
    params: GenerationParams = field(default_factory=GenerationParams)

    def __post_init__(self):
        if self.recipe not in JOB_RECIPES:
            raise ValidationError(
                f"unknown recipe {self.recipe!r}, expected one of {', '.join(JOB_RECIPES)}")
        if self.concurrency < 1:
            raise ValidationError("concurrency must be >= 1")
        if self.retries < 0:
            raise ValidationError("retries must be >= 0")
        if self.backoff_base < 0:
            raise ValidationError("backoff_base must be >= 0")
        if self.recipe == "evolve" and self.evolve_mode not in EVOLVE_MODES:
            raise ValidationError(f"unknown evolve mode {self.evolve_mode!r}")

    def config_echo(self) -> dict:
        return {
            "recipe": self.recipe,
            "input": self.input_path,
            "output": self.output_path,
            "concurrency": self.concurrency,
            "retries": self.retries,
            "turns": self.turns,
            "evolve_mode": self.evolve_mode if self.recipe == "evolve" else None,
            "evolve_method": self.evolve_method if self.recipe == "evolve" else None,
            "seed": self.seed,
        }


@dataclass
class JobReport:
    total: int = 0
    skipped: int = 0
    succeeded: int = 0
    failed: int = 0
    indon_translations: int = 0
    errors: list = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "total": self.total,
            "skipped": self.skipped,
            "succeeded": self.succeeded,
            "failed": self.failed,
            "indon_translations": self.indon_translations,
            "errors": self.errors,
        }


def read_records(path: str) -> list[dict]:
    """JSONL records with arbitrary fields; ids synthesized when absent."""
    records = []
    base = os.path.basename(path)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValidationError(f"{path}:{lineno}: bad JSON: {e.msg}") from e
            if not isinstance(obj, dict):
                raise ValidationError(f"{path}:{lineno}: record must be an object")
            obj.setdefault("id", f"{base}:{lineno}")
            if not isinstance(obj["id"], str) or not obj["id"]:
                raise ValidationError(f"{path}:{lineno}: id must be a non-empty string")
            records.append(obj)
    return records


def _completed_ids(path: str) -> set[str]:
    """Ids already written to the output file.

    A crash can tear the final line (no trailing newline, possibly even valid
    JSON). That line is truncated away and its id left uncounted so the record
    is redone on a clean line boundary.
    """
    done: set[str] = set()
    if not os.path.exists(path):
        return done
    start = 0
    with open(path, "rb") as fh:
        for raw in fh:
            if not raw.endswith(b"\n"):
                os.truncate(path, start)
                break
            start += len(raw)
            line = raw.decode("utf-8", errors="replace").strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                continue  # foreign garbage line; the record is redone
            if isinstance(obj, dict) and isinstance(obj.get("id"), str):
                done.add(obj["id"])
    return done


def _require(record: dict, *names: str) -> list[str]:
    values = []
    for name in names:
        value = record.get(name)
        if not isinstance(value, str) or not value:
            raise ValidationError(f"record {record.get('id')!r} missing field {name!r}")
        values.append(value)
    return values


class _RecordRunner:
    def __init__(self, spec: JobSpec, client: ChatClient, hook: TranslationHook):
        self.spec = spec
        self.client = client
        self.hook = hook

    def _complete_with_retry(self, turns: list[Turn], seed: int | None) -> str:
        last: Exception | None = None
        for attempt in range(self.spec.retries + 1):
            try:
                return self.client.complete(turns, self.spec.params, seed=seed)
            except ChatClientError as e:
                last = e
                if attempt < self.spec.retries:
                    time.sleep(self.spec.backoff_base * (2 ** attempt))
        assert last is not None
        raise last

    def _seed_for(self, index: int) -> int | None:
        if self.spec.seed is None:
            return None
        return self.spec.seed ^ index

    def run(self, index: int, record: dict) -> tuple[str, dict | None, str | None]:
        """Returns (status, output record, error message)."""
        spec = self.spec
        try:
            if spec.recipe == "ultrachat":
                out = self._run_ultrachat(record)
            elif spec.recipe == "evolve":
                out = self._run_single(record, evolve(
                    _require(record, "instruction")[0], spec.evolve_mode, spec.evolve_method),
                    index)
            else:
                out = self._run_single(record, build_prompt(spec.recipe, record), index)
        except (ChatClientError, ValidationError) as e:
            return "failed", None, str(e)
        out["id"] = record["id"]
        return "ok", out, None

    def _run_single(self, record: dict, turns: list[Turn], index: int) -> dict:
        reply = self._complete_with_retry(turns, self._seed_for(index))
        out: dict = {"prompt": turns[0].content, "output": reply}
        if self.spec.recipe in ("qa_choice", "open_qa"):
            rejections: list = []
            items = parse_structured_qa(reply, self.spec.recipe, rejections)
            out["qa"] = {"qa": [item.to_json_obj() for item in items]}
            if rejections:
                out["rejected"] = [{"index": r.index, "reason": r.reason} for r in rejections]
        if self.hook.detect_indonesian(reply):
            out["indon"] = True
            out["output_ms"] = self.hook.translate_to_malay(reply)
        else:
            out["indon"] = False
        return out

    def _run_ultrachat(self, record: dict) -> dict:
        paragraph, question = _require(record, "paragraph", "question")
        conv: Conversation | None = None
        for attempt in range(self.spec.retries + 1):
            conv = ultrachat(paragraph, question, self.client, n=self.spec.turns,
                             hook=self.hook, params=self.spec.params, resume=conv)
            if conv.error is None:
                break
            if attempt < self.spec.retries:
                time.sleep(self.spec.backoff_base * (2 ** attempt))
        assert conv is not None
        if conv.error is not None:
            raise ChatClientError(
                f"ultrachat stopped at turn {conv.error['turn_index']}: {conv.error['message']}")
        obj = conv.to_json_obj()
        obj["paragraph"] = paragraph
        obj["question"] = question
        if self.spec.recipe == "ultrachat":
            obj["indon"] = any(t.indon for t in conv.turns)
        return obj


def run_generation_job(spec: JobSpec, client: ChatClient,
                       hook: TranslationHook | None = None) -> JobReport:
    """Run the job; returns the report and writes it next to the output."""
    hook = hook or WordlistTranslationHook()
    records = read_records(spec.input_path)
    done = _completed_ids(spec.output_path)
    report = JobReport(total=len(records))

    pending: list[tuple[int, dict]] = []
    seen: set[str] = set()
    for i, record in enumerate(records):
        if record["id"] in seen:
            raise ValidationError(f"duplicate record id {record['id']!r}")
        seen.add(record["id"])
        if record["id"] in done:
            report.skipped += 1
        else:
            pending.append((i, record))

    runner = _RecordRunner(spec, client, hook)
    with open(spec.output_path, "a", encoding="utf-8") as out:
        def emit(result: tuple[str, dict | None, str | None], record: dict):
            status, obj, err = result
            if status == "ok":
                assert obj is not None
                out.write(json.dumps(obj, ensure_ascii=False) + "\n")
                out.flush()
                report.succeeded += 1
                if obj.get("indon") or any(
                        t.get("indon") for t in obj.get("turns", []) if isinstance(t, dict)):
                    report.indon_translations += 1
            else:
                report.failed += 1
                report.errors.append({"id": record["id"], "error": err})

        if spec.concurrency == 1 or len(pending) <= 1:
            for i, record in pending:
                emit(runner.run(i, record), record)
        else:
            with ThreadPoolExecutor(max_workers=spec.concurrency) as pool:
                results = pool.map(lambda pair: runner.run(*pair), pending)
                for (i, record), result in zip(pending, results):
                    emit(result, record)

    _write_report(spec, report)
    return report


def _write_report(spec: JobSpec, report: JobReport):
    doc = {"config": spec.config_echo(), "report": report.to_json_obj()}
    with open(spec.output_path + ".report.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
