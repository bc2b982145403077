from .jobs import JOB_RECIPES, JobReport, JobSpec, read_records, run_generation_job
from .prompts import (
    EVOLVE_MODES,
    RECIPES,
    build_prompt,
    depth_methods,
    evolve,
    load_template,
    template_placeholders,
    ultrachat_continue_instruction,
    ultrachat_system_prompt,
)
from .structured import QAChoiceItem, QAItem, Rejection, parse_structured_qa
from .translate import NullTranslationHook, TranslationHook, WordlistTranslationHook
from .ultrachat import ultrachat

__all__ = [
    "JOB_RECIPES",
    "JobReport",
    "JobSpec",
    "read_records",
    "run_generation_job",
    "EVOLVE_MODES",
    "RECIPES",
    "build_prompt",
    "depth_methods",
    "evolve",
    "load_template",
    "template_placeholders",
    "ultrachat_continue_instruction",
    "ultrachat_system_prompt",
    "QAChoiceItem",
    "QAItem",
    "Rejection",
    "parse_structured_qa",
    "NullTranslationHook",
    "TranslationHook",
    "WordlistTranslationHook",
    "ultrachat",
]
