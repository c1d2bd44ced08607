"""Exception hierarchy; every class carries the exit code the CLI reports."""


class EpisynthError(Exception):
    exit_code = 3


class UsageError(EpisynthError):
    """Unknown names, unbound template variables, malformed arguments."""


class ModelError(EpisynthError):
    """Syntax or name-resolution errors in model and formula text.

    Args:
        messages: one message per problem, each already carrying its position
    """

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__('; '.join(self.messages))


class ClassificationError(UsageError):
    pass


class RefusalError(EpisynthError):
    """The request is well-formed but outside what this tool will compute."""
    exit_code = 2


class UnsupportedSchemeError(RefusalError):
    pass
