class ValidationError(ValueError):
    """Bad input data, configuration or arguments. The CLI maps this to exit code 1."""


class ChatClientError(RuntimeError):
    """A chat-completion backend failed (transport, HTTP status, malformed reply)."""
