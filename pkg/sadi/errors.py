"""
Exception types raised across the toolkit.

Input problems derive from ValueError and run-time aborts from RuntimeError,
so callers that only know the built-ins keep working.
"""

from typing import Optional


class DimensionError(ValueError):
    """Shapes or channel counts do not line up."""


class DomainError(ValueError):
    """Input lies outside the domain where the operation is defined."""


class ContractError(ValueError):
    """A caller broke an operation's precondition (e.g. non-scalar loss)."""


class SceneSpecError(ValueError):
    """Scene or hole specification cannot be realised."""


class ImageFormatError(ValueError):
    """Malformed or truncated image file.

    Parameters
    ----------
    message : str
        What went wrong.
    offset : int
        Byte offset in the file where parsing stopped.
    """

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class TrainingDivergedError(RuntimeError):
    """A loss became non-finite during training."""

    def __init__(self, step: int, phase: str, losses: Optional[dict] = None):
        self.step = step
        self.phase = phase
        self.losses = dict(losses or {})
        detail = ", ".join(f"{k}={v}" for k, v in self.losses.items())
        super().__init__(f"non-finite loss at step {step} ({phase}): {detail}")


class CheckpointError(ValueError):
    """Checkpoint file is malformed or from an unsupported version."""
