"""Corpus preparation, synthetic data generation and evaluation toolkit."""

__version__ = "0.1.0"

from .chat_template import Conversation, Turn, parse, render
from .clients import GenerationParams, HTTPChatClient, MockChatClient, make_client
from .corpus_io import DatasetStats, Document, read_stream, write_stream
from .dedup import DedupConfig, dedup_corpus, estimate_jaccard, minhash, plan_bands, shingle
from .errors import ChatClientError, ValidationError
from .evaluate import (
    BenchmarkQuestion,
    EvalConfig,
    EvalResult,
    extract_answer,
    load_questions,
    majority_vote,
    run_eval,
)
from .grammar_synth import (
    ErrorSpec,
    ParsedSentence,
    TatabahasaItem,
    apply_swap,
    generate_corpus,
    load_rules,
    make_item,
)
from .packing import PackStats, PackedSequence, WhitespaceTokenizer, pack, unpack_check
from .postprocess import CleanConfig, CleanReport, clean_corpus, clean_text

__all__ = [
    "__version__",
    "Conversation",
    "Turn",
    "parse",
    "render",
    "GenerationParams",
    "HTTPChatClient",
    "MockChatClient",
    "make_client",
    "DatasetStats",
    "Document",
    "read_stream",
    "write_stream",
    "DedupConfig",
    "dedup_corpus",
    "estimate_jaccard",
    "minhash",
    "plan_bands",
    "shingle",
    "ChatClientError",
    "ValidationError",
    "BenchmarkQuestion",
    "EvalConfig",
    "EvalResult",
    "extract_answer",
    "load_questions",
    "majority_vote",
    "run_eval",
    "ErrorSpec",
    "ParsedSentence",
    "TatabahasaItem",
    "apply_swap",
    "generate_corpus",
    "load_rules",
    "make_item",
    "PackStats",
    "PackedSequence",
    "WhitespaceTokenizer",
    "pack",
    "unpack_check",
    "CleanConfig",
    "CleanReport",
    "clean_corpus",
    "clean_text",
]
