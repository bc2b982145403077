"""Prompt builders for the synthetic-data recipes.

Templates live as data files under templates/ so they diff cleanly; the
loader strips exactly one trailing newline, which lets templates that
genuinely end with a newline round-trip (their file ends with two).
"""

from __future__ import annotations

import string
from functools import lru_cache
from importlib import resources

from ..chat_template import Turn
from ..errors import ValidationError

RECIPES = (
    "code_translate",
    "code_answer",
    "commonsense",
    "malaysian_qa",
    "ayat_pasif",
    "kertas1",
    "qa_choice",
    "open_qa",
    "question_from_context",
)

EVOLVE_MODES = ("breadth", "depth")


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    path = resources.files("korpus.synthgen") / "templates" / f"{name}.txt"
    try:
        data = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise ValidationError(f"no template {name!r}") from e
    if data.endswith("\n"):
        data = data[:-1]
    return data


def template_placeholders(template: str) -> list[str]:
    names = []
    for _, field, _, _ in string.Formatter().parse(template):
        if field is not None and field != "" and field not in names:
            names.append(field)
    return names


def build_prompt(recipe: str, inputs: dict) -> list[Turn]:
    """Render a recipe's template with the given inputs as a single user turn.

    Substitutes placeholders verbatim; extra input keys are ignored.
    """
    if recipe not in RECIPES:
        raise ValidationError(f"unknown recipe {recipe!r}, expected one of {', '.join(RECIPES)}")
    template = load_template(recipe)
    values = {}
    for name in template_placeholders(template):
        if name not in inputs or inputs[name] is None:
            raise ValidationError(f"missing placeholder: {name}")
        values[name] = inputs[name] if isinstance(inputs[name], str) else str(inputs[name])
    return [Turn(role="user", content=template.format(**values))]


def depth_methods() -> list[str]:
    return [line for line in load_template("depth_methods").split("\n") if line.strip()]


def evolve(instruction: str, mode: str, method: str | None = None) -> list[Turn]:
    """Breadth/depth instruction rewriting prompts.

    Depth requires a method string for the template's "{}" slot; the packaged
    depth_methods list has ready-made ones.
    """
    if mode not in EVOLVE_MODES:
        raise ValidationError(f"unknown evolve mode {mode!r}, expected breadth or depth")
    if mode == "breadth":
        body = load_template("evolve_breadth")
        text = f"{body}\n#Given Prompt#:\n{instruction}\n#Created Prompt#:\n"
    else:
        if not method:
            raise ValidationError("depth mode requires a method")
        body = load_template("evolve_depth").format(method)
        text = f"{body}\n#The Given Prompt#:\n{instruction}\n#Rewritten Prompt#:\n"
    return [Turn(role="user", content=text)]


def ultrachat_system_prompt() -> str:
    return load_template("ultrachat_system")


def ultrachat_continue_instruction() -> str:
    return load_template("ultrachat_continue")
