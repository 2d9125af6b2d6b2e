"""Exception types shared across the package."""

from __future__ import annotations


class ParseError(ValueError):
    """A record file line could not be parsed.

    Carries the offending path and 1-based line number so callers can
    point at the exact record.
    """

    def __init__(self, path: str, line: int, reason: str):
        self.path = str(path)
        self.line = line
        self.reason = reason
        super().__init__(f"{self.path}:{line}: {reason}")


class EmptyStratum(ValueError):
    """A requested sampling stratum has no (or too few) examples."""


class TokenizerMismatch(ValueError):
    """Checkpoints that must share a tokenizer do not."""


class NonFinite(ArithmeticError):
    """A forward pass produced a non-finite value."""


class Diverged(RuntimeError):
    """Training loss or parameters became non-finite."""


class MalformedOutput(RuntimeError):
    """A decoded or supplied output sequence violates the output grammar."""


class EmptySelection(ValueError):
    """The selection stage produced no examples to fine-tune on."""


class LengthMismatch(ValueError):
    """Paired metric inputs have different lengths."""


class ZeroUV(ValueError):
    """Business metrics require at least one unique visitor."""


class MissingArtifact(FileNotFoundError):
    """An upstream pipeline artifact is absent.

    ``name`` is the logical artifact name (e.g. ``"S_selection"``), not a path.
    """

    def __init__(self, name: str, path: str | None = None):
        self.name = name
        self.path = path
        detail = f" (expected at {path})" if path else ""
        super().__init__(f"missing artifact: {name}{detail}")


class ConfigError(ValueError):
    """Pipeline configuration failed validation."""
