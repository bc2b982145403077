"""Multi-turn conversation synthesis: a model impersonates the user, then
answers as the assistant, n times after the seed exchange.

The saved conversation is [context, user, assistant, (user, assistant) x n],
3 + 2n turns. The impersonation instruction is sent on a throwaway copy of
the message list and never appears in the saved turns.
"""

from __future__ import annotations

from ..chat_template import Conversation, Turn
from ..clients import ChatClient, GenerationParams
from ..errors import ChatClientError, ValidationError
from .prompts import ultrachat_continue_instruction, ultrachat_system_prompt
from .translate import TranslationHook, WordlistTranslationHook


def _annotate(turn: Turn, hook: TranslationHook) -> Turn:
    flagged = hook.detect_indonesian(turn.content)
    turn.indon = flagged
    if flagged:
        turn.content_ms = hook.translate_to_malay(turn.content)
    return turn


def ultrachat(paragraph: str, question: str, client: ChatClient, n: int = 1,
              hook: TranslationHook | None = None,
              params: GenerationParams | None = None,
              resume: Conversation | None = None) -> Conversation:
    """Generate (or continue) one conversation.

    On client failure the partial conversation is returned with its error
    field set; passing it back as resume continues from the failed call
    without repeating completed ones.
    """
    if n < 0:
        raise ValidationError(f"n must be >= 0, got {n}")
    hook = hook or WordlistTranslationHook()
    params = params or GenerationParams()

    if resume is not None:
        results = list(resume.turns)
        if len(results) < 2 or results[0].role != "context" or results[1].role != "user":
            raise ValidationError("resume conversation must start with context and user turns")
        paragraph = results[0].content
        question = results[1].content
    else:
        results = [Turn(role="context", content=paragraph),
                   Turn(role="user", content=question)]

    system = Turn(role="system", content=ultrachat_system_prompt())
    messages = [system, Turn(role="user", content=f"{paragraph}\n\n{question}")]
    for t in results[2:]:
        messages.append(Turn(role=t.role, content=t.content))

    target = 3 + 2 * n
    while len(results) < target:
        if results[-1].role == "assistant":
            stage = "user"
            messages_temp = messages + [
                Turn(role="user", content=ultrachat_continue_instruction())]
            call_messages = messages_temp
        else:
            stage = "assistant"
            call_messages = messages
        try:
            reply = client.complete(call_messages, params)
        except ChatClientError as e:
            return Conversation(turns=results, error={
                "stage": stage, "turn_index": len(results), "message": str(e)})
        results.append(_annotate(Turn(role=stage, content=reply), hook))
        messages.append(Turn(role=stage, content=reply))
    return Conversation(turns=results)
