"""Multiple-choice benchmark harness: n-shot prompts, k samples per question,
answer extraction, majority vote, accuracy.

The extraction rules and the vote tie-break are pinned here and golden-tested
so scores stay comparable across client backends.
"""

from __future__ import annotations

import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .chat_template import Turn
from .clients import ChatClient, GenerationParams
from .errors import ChatClientError, ValidationError

INSTRUCTION_LINE = "Jawab soalan berikut. Berikan jawapan dalam bentuk 'Jawapan: <huruf>'."

ABSTAIN = None


@dataclass
class Choice:
    text: str
    answer: bool


@dataclass
class BenchmarkQuestion:
    question: str
    choices: dict[str, Choice]
    source: str = ""
    instruction: str | None = None
    id: str = ""

    def __post_init__(self):
        if len(self.choices) < 2:
            raise ValidationError(f"question {self.id or self.question!r}: needs >= 2 choices")
        true_keys = [k for k, c in self.choices.items() if c.answer]
        if len(true_keys) != 1:
            raise ValidationError(
                f"question {self.id or self.question!r}: expected exactly one true answer, "
                f"got {len(true_keys)}")

    @property
    def true_key(self) -> str:
        return next(k for k, c in self.choices.items() if c.answer)

    @property
    def letters(self) -> list[str]:
        return sorted(self.choices)


@dataclass
class EvalConfig:
    shots: int = 0
    samples_per_question: int = 5
    gen: GenerationParams = field(default_factory=GenerationParams)
    seed: int = 0

    def __post_init__(self):
        if self.shots < 0:
            raise ValidationError("shots must be >= 0")
        if self.samples_per_question < 1:
            raise ValidationError("samples_per_question must be >= 1")


@dataclass
class PerQuestion:
    id: str
    votes: list
    final: str | None
    correct: bool
    error: str | None = None


@dataclass
class EvalResult:
    per_question: list[PerQuestion]
    accuracy: float
    abstentions: int

    def row(self, shots: int) -> str:
        return f"Tatabahasa {shots} shot {self.accuracy:.2f}"


def load_questions(path: str) -> list[BenchmarkQuestion]:
    """JSONL records: question, optional instruction, choices {letter:
    {text, answer}}, and a source URL under 'source' or 'website'."""
    questions = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValidationError(f"{path}:{lineno}: bad JSON: {e.msg}") from e
            if not isinstance(obj, dict) or not isinstance(obj.get("question"), str):
                raise ValidationError(f"{path}:{lineno}: record needs a string 'question'")
            raw_choices = obj.get("choices")
            if not isinstance(raw_choices, dict):
                raise ValidationError(f"{path}:{lineno}: record needs a 'choices' object")
            choices = {}
            for letter, entry in raw_choices.items():
                if not isinstance(entry, dict) or "text" not in entry or "answer" not in entry:
                    raise ValidationError(
                        f"{path}:{lineno}: choice {letter!r} needs 'text' and 'answer'")
                choices[letter] = Choice(text=str(entry["text"]), answer=bool(entry["answer"]))
            try:
                questions.append(BenchmarkQuestion(
                    question=obj["question"],
                    choices=choices,
                    source=obj.get("source") or obj.get("website") or "",
                    instruction=obj.get("instruction"),
                    id=f"{lineno - 1}",
                ))
            except ValidationError as e:
                raise ValidationError(f"{path}:{lineno}: {e}") from e
    return questions


def _question_block(q: BenchmarkQuestion, reveal: bool) -> str:
    lines = []
    if q.instruction:
        lines.append(q.instruction)
    lines.append(f"Soalan: {q.question}")
    for letter in q.letters:
        lines.append(f"{letter}. {q.choices[letter].text}")
    lines.append(f"Jawapan: {q.true_key}" if reveal else "Jawapan:")
    return "\n".join(lines)


def build_prompt(q: BenchmarkQuestion, exemplars: list[BenchmarkQuestion]) -> str:
    """Instruction line, solved exemplar blocks, then the target block with
    its answer left open. Blocks are separated by blank lines."""
    for ex in exemplars:
        if ex is q or (ex.question == q.question and ex.choices == q.choices):
            raise ValidationError("exemplar overlaps the target question")
    blocks = [INSTRUCTION_LINE]
    blocks.extend(_question_block(ex, reveal=True) for ex in exemplars)
    blocks.append(_question_block(q, reveal=False))
    return "\n\n".join(blocks)


def pick_exemplars(questions: list[BenchmarkQuestion], target_index: int,
                   shots: int) -> list[BenchmarkQuestion]:
    """First `shots` questions in file order, skipping the target."""
    exemplars = []
    for i, q in enumerate(questions):
        if len(exemplars) == shots:
            break
        if i == target_index:
            continue
        exemplars.append(q)
    if len(exemplars) < shots:
        raise ValidationError(f"need {shots} exemplars, file has {len(questions)} questions")
    return exemplars


_ANSWER_RE = re.compile(r"jawapan\s*:\s*([A-Za-z])\b", re.IGNORECASE)
_LEADING_RE = re.compile(r"^\s*([A-Za-z])(?=[\s.,:)\]]|$)")
_LINESTART_RE = re.compile(r"^\s{0,4}([A-Za-z])[.)]", re.MULTILINE)


def extract_answer(generation: str, valid_letters) -> str | None:
    """Ordered rules, first hit wins: an explicit "Jawapan: X", a standalone
    letter opening the text, a "X." / "X)" line start. Otherwise abstain."""
    valid = {letter.upper() for letter in valid_letters}
    for m in _ANSWER_RE.finditer(generation):
        letter = m.group(1).upper()
        if letter in valid:
            return letter
    m = _LEADING_RE.match(generation)
    if m and m.group(1).upper() in valid:
        return m.group(1).upper()
    for m in _LINESTART_RE.finditer(generation):
        letter = m.group(1).upper()
        if letter in valid:
            return letter
    return ABSTAIN


def majority_vote(votes: list) -> str | None:
    """Modal non-abstain vote; ties go to the letter whose first occurrence
    comes earliest; all-abstain stays abstain."""
    if not votes:
        raise ValidationError("empty vote list")
    counts: dict[str, int] = {}
    first: dict[str, int] = {}
    for i, v in enumerate(votes):
        if v is ABSTAIN:
            continue
        counts[v] = counts.get(v, 0) + 1
        first.setdefault(v, i)
    if not counts:
        return ABSTAIN
    return min(counts, key=lambda letter: (-counts[letter], first[letter]))


def _sample_seed(base: int, q_index: int, k: int) -> int:
    return (base * 1000003 + q_index) * 1000003 + k


def run_eval(questions: list[BenchmarkQuestion], cfg: EvalConfig, client: ChatClient,
             threads: int = 1, retries: int = 2, backoff_base: float = 0.0) -> EvalResult:
    """Evaluate every question: k samples, extract, vote, score. Abstentions
    count as incorrect. Client failures exhaust `retries` per sample, then the
    question is marked abstained with the error noted and the run continues."""
    if not questions:
        raise ValidationError("no questions")

    def eval_one(pair) -> PerQuestion:
        q_index, q = pair
        exemplars = pick_exemplars(questions, q_index, cfg.shots)
        prompt = build_prompt(q, exemplars)
        votes: list = []
        for k in range(cfg.samples_per_question):
            seed = _sample_seed(cfg.seed, q_index, k)
            attempt = 0
            while True:
                try:
                    generation = client.complete([Turn(role="user", content=prompt)],
                                                 cfg.gen, seed=seed)
                    break
                except ChatClientError as e:
                    if attempt >= retries:
                        return PerQuestion(id=q.id, votes=votes, final=ABSTAIN,
                                           correct=False, error=str(e))
                    if backoff_base:
                        time.sleep(backoff_base * (2 ** attempt))
                    attempt += 1
            votes.append(extract_answer(generation, q.letters))
        final = majority_vote(votes)
        return PerQuestion(id=q.id, votes=votes, final=final,
                           correct=final == q.true_key)

    pairs = list(enumerate(questions))
    if threads <= 1:
        rows = [eval_one(p) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(eval_one, pairs))

    correct = sum(1 for r in rows if r.correct)
    abstentions = sum(1 for r in rows if r.final is ABSTAIN)
    return EvalResult(per_question=rows,
                      accuracy=100.0 * correct / len(rows),
                      abstentions=abstentions)


def report_json_obj(result: EvalResult, cfg: EvalConfig, questions_path: str) -> dict:
    return {
        "config": {
            "questions": questions_path,
            "shots": cfg.shots,
            "samples_per_question": cfg.samples_per_question,
            "seed": cfg.seed,
            "gen": {
                "top_p": cfg.gen.top_p,
                "top_k": cfg.gen.top_k,
                "temperature": cfg.gen.temperature,
                "do_sample": cfg.gen.do_sample,
                "num_beams": cfg.gen.num_beams,
                "max_new_tokens": cfg.gen.max_new_tokens,
            },
        },
        "row": result.row(cfg.shots),
        "accuracy": round(result.accuracy, 2),
        "abstentions": result.abstentions,
        "per_question": [
            {"id": r.id, "votes": r.votes, "final": r.final, "correct": r.correct,
             **({"error": r.error} if r.error else {})}
            for r in result.per_question
        ],
    }
