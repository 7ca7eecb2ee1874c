"""Exception hierarchy shared by the simulator and the command line runner.

Every error carries the process exit code the CLI reports for it.
"""

from __future__ import annotations


class FracNSError(Exception):
    exit_code = 1
    kind = "error"

    def record(self) -> dict:
        return {"type": self.kind, "exit_code": self.exit_code, "message": str(self)}


class ConfigError(FracNSError, ValueError):
    """Invalid configuration or parameters. Holds every violation found."""

    exit_code = 2
    kind = "config"

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))

    def record(self) -> dict:
        rec = super().record()
        rec["violations"] = self.violations
        return rec


class RangeError(FracNSError, ValueError):
    """A requested time or window does not fit the sampled noise grid."""

    exit_code = 3
    kind = "range"


class BlowUpError(FracNSError, ArithmeticError):
    """Integration produced nonfinite values or crossed the norm guard."""

    exit_code = 4
    kind = "blow-up"

    def __init__(self, step: int, norm: float, message: str | None = None):
        self.step = step
        self.norm = norm
        self.partial = None  # TrajectoryRecord up to the failing step, when available
        super().__init__(message or f"blow-up at step {step} (norm={norm!r})")

    def record(self) -> dict:
        rec = super().record()
        rec["step"] = self.step
        rec["norm"] = self.norm if self.norm == self.norm else None
        return rec


class CheckpointError(FracNSError, IOError):
    exit_code = 5
    kind = "io"


class CheckpointVersionError(CheckpointError):
    kind = "checkpoint-version"


class CheckpointCorruptError(CheckpointError):
    kind = "checkpoint-corrupt"


class CheckpointInvariantError(CheckpointError):
    kind = "checkpoint-invariant"
