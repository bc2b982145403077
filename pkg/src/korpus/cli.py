"""Command line interface: one binary, subcommands per stage, plus a
pipeline command chaining clean -> dedup -> pack from a TOML config.

Exit codes: 0 success, 1 bad input/config/arguments, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import __version__
from .chat_template import Conversation, parse, render
from .clients import GenerationParams, make_client
from .corpus_io import read_stream, write_stream
from .dedup import DedupConfig, dedup_corpus
from .errors import ValidationError
from .evaluate import EvalConfig, load_questions, report_json_obj, run_eval
from .grammar_synth import generate_corpus, load_rules, read_parses, write_items
from .packing import load_tokenizer, pack, write_manifest, write_packed
from .postprocess import CleanConfig, CleanReport, clean_corpus
from .synthgen import JobSpec, run_generation_job


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for runtime failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_version(p: argparse.ArgumentParser):
    p.add_argument("--version", action="version", version=f"korpus {__version__}")


def _add_threads(p: argparse.ArgumentParser):
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: available parallelism); results do not depend on it")


def _threads(args) -> int:
    if args.threads is not None:
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        return args.threads
    return os.cpu_count() or 1


def build_parser() -> _Parser:
    parser = _Parser(prog="korpus",
                     description="Corpus preparation, synthetic data generation and evaluation.")
    _add_version(parser)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("clean", help="filter and normalize a document stream")
    _add_version(p)
    _add_threads(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--min-chars", type=int, default=3)
    p.add_argument("--space-cap", type=int, default=6)
    p.add_argument("--dot-cap", type=int, default=6)
    p.add_argument("--http-error-patterns", default=None,
                   help="file with one lowercase substring pattern per line")
    p.add_argument("--report", default=None, help="write the report JSON here instead of stderr text")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("dedup", help="near-duplicate removal")
    _add_version(p)
    _add_threads(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--clusters", default=None, help="write the cluster report JSON here")
    p.add_argument("--num-perm", type=int, default=256)
    p.add_argument("--threshold", type=float, default=0.95)
    p.add_argument("--ngram", type=int, default=5)
    p.add_argument("--hash-bits", type=int, default=64, choices=[32, 64])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_dedup)

    p = sub.add_parser("pack", help="tokenize and pack documents into fixed-length blocks")
    _add_version(p)
    _add_threads(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--context-length", type=int, default=4096)
    p.add_argument("--tokenizer", default="whitespace",
                   help="'whitespace' or 'external:<module>:<attr>'")
    p.add_argument("--vocab-size", type=int, default=65536)
    p.add_argument("--keep-tail", choices=["drop", "pad"], default="drop")
    p.add_argument("--manifest", default=None, help="sidecar path (default: <output>.manifest.json)")
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("template", help="chat template rendering and parsing")
    _add_version(p)
    tsub = p.add_subparsers(dest="mode", required=True, metavar="mode")
    for mode, func in (("render", cmd_template_render), ("parse", cmd_template_parse)):
        tp = tsub.add_parser(mode)
        _add_version(tp)
        tp.add_argument("--input", required=True)
        tp.add_argument("--output", required=True)
        tp.set_defaults(func=func)

    p = sub.add_parser("synth", help="synthetic data generation jobs")
    _add_version(p)
    p.add_argument("--recipe", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--turns", type=int, default=1, help="conversation loop depth")
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--client", choices=["mock", "http"], default="mock")
    p.add_argument("--mode", choices=["breadth", "depth"], default="breadth",
                   help="evolve recipe only")
    p.add_argument("--method", default=None, help="evolve depth method text")
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--backoff", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("grammar-synth", help="grammar-error question synthesis")
    _add_version(p)
    p.add_argument("--parses", required=True, help="column-format parse file")
    p.add_argument("--rules", default=None, help="rule table TOML (default: packaged)")
    p.add_argument("--per-sentence", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_grammar_synth)

    p = sub.add_parser("eval", help="multiple-choice benchmark harness")
    _add_version(p)
    _add_threads(p)
    p.add_argument("--questions", required=True)
    p.add_argument("--shots", type=int, default=0)
    p.add_argument("--samples", type=int, default=5)
    p.add_argument("--client", choices=["mock", "http"], default="mock")
    p.add_argument("--report", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="clean -> dedup -> pack from one config file")
    _add_version(p)
    _add_threads(p)
    p.add_argument("--config", required=True)
    p.add_argument("--input", default=None, help="overrides the config's input")
    p.add_argument("--workdir", default=None, help="overrides the config's workdir")
    p.set_defaults(func=cmd_pipeline)

    return parser


def _load_patterns(path: str | None):
    if path is None:
        return None
    with open(path, "r", encoding="utf-8") as fh:
        patterns = [line.strip().lower() for line in fh if line.strip()]
    if not patterns:
        raise ValidationError(f"{path}: no patterns")
    return patterns


def _clean_report_obj(report: CleanReport, cfg: CleanConfig) -> dict:
    return {
        "config": {
            "min_chars": cfg.min_chars,
            "max_space_run": cfg.max_space_run,
            "max_dot_run": cfg.max_dot_run,
            "http_error_patterns": list(cfg.http_error_patterns),
        },
        "report": {
            "seen": report.seen,
            "kept": report.kept,
            "dropped_short": report.dropped_short,
            "dropped_http_error": report.dropped_http_error,
            "normalized_space": report.normalized_space,
            "normalized_dots": report.normalized_dots,
        },
    }


def cmd_clean(args) -> int:
    patterns = _load_patterns(args.http_error_patterns)
    kwargs = {"min_chars": args.min_chars, "max_space_run": args.space_cap,
              "max_dot_run": args.dot_cap}
    if patterns is not None:
        kwargs["http_error_patterns"] = patterns
    cfg = CleanConfig(**kwargs)
    cleaned, report = clean_corpus(read_stream(args.input), cfg)
    write_stream(cleaned, args.output)
    obj = _clean_report_obj(report, cfg)
    if args.report:
        _write_json(args.report, obj)
    else:
        for key, value in obj["report"].items():
            print(f"clean {key}: {value}", file=sys.stderr)
    return 0


def cmd_dedup(args) -> int:
    cfg = DedupConfig(num_perm=args.num_perm, threshold=args.threshold,
                      hash_bits=args.hash_bits, shingle_n=args.ngram, seed=args.seed)
    docs = list(read_stream(args.input))
    result = dedup_corpus(docs, cfg, threads=_threads(args))
    kept_ids = set(result.kept)
    write_stream((d for d in docs if d.id in kept_ids), args.output)
    print(f"dedup kept: {len(result.kept)}", file=sys.stderr)
    print(f"dedup dropped: {len(result.dropped)}", file=sys.stderr)
    if args.clusters:
        _write_json(args.clusters, {
            "config": {"num_perm": cfg.num_perm, "threshold": cfg.threshold,
                       "hash_bits": cfg.hash_bits, "ngram": cfg.shingle_n, "seed": cfg.seed},
            "plan": {"bands": result.plan.bands, "rows": result.plan.rows},
            "clusters": [{"kept": members[0], "dropped": members[1:]}
                         for members in result.clusters],
            "kept": len(result.kept),
            "dropped": len(result.dropped),
        })
    return 0


def cmd_pack(args) -> int:
    tok = load_tokenizer(args.tokenizer, vocab_size=args.vocab_size)
    seqs, stats = pack(read_stream(args.input), tok, args.context_length,
                       keep_tail=args.keep_tail)
    _, spans = write_packed(seqs, args.output)
    manifest = args.manifest or f"{args.output}.manifest.json"
    write_manifest(manifest, args.context_length,
                   {"spec": args.tokenizer, "vocab_size": args.vocab_size},
                   stats, spans,
                   config_echo={"context_length": args.context_length,
                                "tokenizer": args.tokenizer,
                                "vocab_size": args.vocab_size,
                                "keep_tail": args.keep_tail})
    print(f"pack sequences: {stats.sequences}", file=sys.stderr)
    print(f"pack tokens_dropped_tail: {stats.tokens_dropped_tail}", file=sys.stderr)
    return 0


def cmd_template_render(args) -> int:
    with open(args.input, "r", encoding="utf-8") as src, \
            open(args.output, "w", encoding="utf-8") as dst:
        for lineno, line in enumerate(src, start=1):
            if not line.strip():
                continue
            try:
                conv = Conversation.from_json_obj(json.loads(line))
                text = render(conv)
            except (json.JSONDecodeError, ValidationError) as e:
                raise ValidationError(f"{args.input}:{lineno}: {e}") from e
            dst.write(json.dumps({"text": text}, ensure_ascii=False) + "\n")
    return 0


def cmd_template_parse(args) -> int:
    with open(args.input, "r", encoding="utf-8") as src, \
            open(args.output, "w", encoding="utf-8") as dst:
        for lineno, line in enumerate(src, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                text = obj["text"] if isinstance(obj, dict) else obj
                conv = parse(text)
            except (json.JSONDecodeError, KeyError, TypeError, ValidationError) as e:
                raise ValidationError(f"{args.input}:{lineno}: {e}") from e
            dst.write(json.dumps(conv.to_json_obj(), ensure_ascii=False) + "\n")
    return 0


def cmd_synth(args) -> int:
    spec = JobSpec(
        recipe=args.recipe.replace("-", "_"),
        input_path=args.input,
        output_path=args.output,
        concurrency=args.concurrency,
        retries=args.retries,
        backoff_base=args.backoff,
        turns=args.turns,
        evolve_mode=args.mode,
        evolve_method=args.method,
        seed=args.seed,
    )
    client = make_client(args.client)
    report = run_generation_job(spec, client)
    for key, value in report.to_json_obj().items():
        if key != "errors":
            print(f"synth {key}: {value}", file=sys.stderr)
    for err in report.errors:
        print(f"synth failed {err['id']}: {err['error']}", file=sys.stderr)
    return 0


def cmd_grammar_synth(args) -> int:
    parsed = read_parses(args.parses)
    specs = load_rules(args.rules)
    items, report = generate_corpus(parsed, specs, args.per_sentence, args.seed)
    write_items(items, args.output)
    _write_json(f"{args.output}.report.json", {
        "config": {"parses": args.parses, "rules": args.rules or "packaged",
                   "per_sentence": args.per_sentence, "seed": args.seed},
        "report": report.to_json_obj(),
    })
    print(f"grammar-synth items: {report.items}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    questions = load_questions(args.questions)
    cfg = EvalConfig(shots=args.shots, samples_per_question=args.samples,
                     gen=GenerationParams(), seed=args.seed)
    client = make_client(args.client)
    result = run_eval(questions, cfg, client, threads=_threads(args))
    print(result.row(cfg.shots))
    if args.report:
        _write_json(args.report, report_json_obj(result, cfg, args.questions))
    return 0


# pipeline config: keys checked strictly so typos fail instead of silently
# running with defaults; [training] is echoed into the manifest untouched
_PIPELINE_KEYS = {"input", "workdir", "manifest", "threads", "clean", "dedup", "pack", "training"}
_CLEAN_KEYS = {"min_chars", "space_cap", "dot_cap", "http_error_patterns"}
_DEDUP_KEYS = {"num_perm", "threshold", "ngram", "hash_bits", "seed"}
_PACK_KEYS = {"context_length", "tokenizer", "vocab_size", "keep_tail"}


@dataclass
class PipelineConfig:
    input: str
    workdir: str
    manifest: str
    threads: int | None = None
    clean: dict = field(default_factory=dict)
    dedup: dict = field(default_factory=dict)
    pack: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str, input_override: str | None = None,
             workdir_override: str | None = None,
             threads_override: int | None = None) -> "PipelineConfig":
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except FileNotFoundError as e:
            raise ValidationError(f"config not found: {path}") from e
        except tomllib.TOMLDecodeError as e:
            raise ValidationError(f"{path}: bad TOML: {e}") from e

        unknown = set(doc) - _PIPELINE_KEYS
        if unknown:
            raise ValidationError(f"{path}: unknown keys: {', '.join(sorted(unknown))}")
        for section, allowed in (("clean", _CLEAN_KEYS), ("dedup", _DEDUP_KEYS),
                                 ("pack", _PACK_KEYS)):
            extra = set(doc.get(section, {})) - allowed
            if extra:
                raise ValidationError(
                    f"{path}: unknown keys in [{section}]: {', '.join(sorted(extra))}")

        input_path = input_override or doc.get("input")
        if not input_path:
            raise ValidationError(f"{path}: no input (set it in the config or pass --input)")
        workdir = workdir_override or doc.get("workdir")
        if not workdir:
            raise ValidationError(f"{path}: no workdir (set it in the config or pass --workdir)")
        threads = threads_override if threads_override is not None else doc.get("threads")
        return cls(
            input=input_path,
            workdir=workdir,
            manifest=doc.get("manifest") or os.path.join(workdir, "manifest.json"),
            threads=threads,
            clean=dict(doc.get("clean", {})),
            dedup=dict(doc.get("dedup", {})),
            pack=dict(doc.get("pack", {})),
            training=dict(doc.get("training", {})),
            raw=doc,
        )


def run_pipeline(cfg: PipelineConfig) -> dict:
    os.makedirs(cfg.workdir, exist_ok=True)
    threads = cfg.threads or os.cpu_count() or 1

    clean_cfg = CleanConfig(
        min_chars=cfg.clean.get("min_chars", 3),
        max_space_run=cfg.clean.get("space_cap", 6),
        max_dot_run=cfg.clean.get("dot_cap", 6),
    )
    clean_path = os.path.join(cfg.workdir, "clean.jsonl")
    cleaned, clean_report = clean_corpus(read_stream(cfg.input), clean_cfg)
    write_stream(cleaned, clean_path)

    dedup_cfg = DedupConfig(
        num_perm=cfg.dedup.get("num_perm", 256),
        threshold=cfg.dedup.get("threshold", 0.95),
        hash_bits=cfg.dedup.get("hash_bits", 64),
        shingle_n=cfg.dedup.get("ngram", 5),
        seed=cfg.dedup.get("seed", 0),
    )
    docs = list(read_stream(clean_path))
    result = dedup_corpus(docs, dedup_cfg, threads=threads)
    kept_ids = set(result.kept)
    dedup_path = os.path.join(cfg.workdir, "dedup.jsonl")
    write_stream((d for d in docs if d.id in kept_ids), dedup_path)

    context_length = cfg.pack.get("context_length", 4096)
    tokenizer_spec = cfg.pack.get("tokenizer", "whitespace")
    vocab_size = cfg.pack.get("vocab_size", 65536)
    keep_tail = cfg.pack.get("keep_tail", "drop")
    tok = load_tokenizer(tokenizer_spec, vocab_size=vocab_size)
    packed_path = os.path.join(cfg.workdir, "packed.bin")
    seqs, stats = pack(read_stream(dedup_path), tok, context_length, keep_tail=keep_tail)
    _, spans = write_packed(seqs, packed_path)
    write_manifest(f"{packed_path}.manifest.json", context_length,
                   {"spec": tokenizer_spec, "vocab_size": vocab_size}, stats, spans,
                   config_echo=cfg.pack)

    manifest = {
        "config": cfg.raw,
        "input": cfg.input,
        "outputs": {"clean": clean_path, "dedup": dedup_path, "packed": packed_path},
        "stages": {
            "clean": {
                "seen": clean_report.seen,
                "kept": clean_report.kept,
                "dropped_short": clean_report.dropped_short,
                "dropped_http_error": clean_report.dropped_http_error,
                "normalized_space": clean_report.normalized_space,
                "normalized_dots": clean_report.normalized_dots,
            },
            "dedup": {
                "input": len(docs),
                "kept": len(result.kept),
                "dropped": len(result.dropped),
                "clusters": len(result.clusters),
                "bands": result.plan.bands,
                "rows": result.plan.rows,
            },
            "pack": {
                "sequences": stats.sequences,
                "tokens_emitted": stats.tokens_emitted,
                "tokens_dropped_tail": stats.tokens_dropped_tail,
                "docs_consumed": stats.docs_consumed,
                "context_length": context_length,
            },
        },
    }
    if cfg.training:
        manifest["training"] = cfg.training
    _write_json(cfg.manifest, manifest)
    return manifest


def cmd_pipeline(args) -> int:
    cfg = PipelineConfig.load(args.config, input_override=args.input,
                              workdir_override=args.workdir,
                              threads_override=args.threads)
    manifest = run_pipeline(cfg)
    for stage, counts in manifest["stages"].items():
        summary = ", ".join(f"{k}={v}" for k, v in counts.items())
        print(f"pipeline {stage}: {summary}", file=sys.stderr)
    print(f"pipeline manifest: {cfg.manifest}", file=sys.stderr)
    return 0


def _write_json(path: str, obj: dict):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    command = args.command
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"korpus {command}: {e}", file=sys.stderr)
        return 1
    except (OSError, RuntimeError) as e:
        print(f"korpus {command}: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
