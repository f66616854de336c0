"""Structured errors shared by the library and the CLI.

Every error carries a snake_case ``code``, a ``details`` dict with the
offending values, and the process exit code the CLI should use.
"""
from typing import Any, Dict, Optional


class TpfError(Exception):
    exit_code = 1
    error_type = "tpf_error"

    def __init__(self, message: str, code: str = "tpf_error", details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.code = code
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "message": self.message,
            "type": self.error_type,
            "code": self.code,
        }


class UsageError(TpfError):
    exit_code = 2
    error_type = "usage_error"


class NumericError(TpfError):
    exit_code = 3
    error_type = "numeric_error"


class DimensionMismatchError(UsageError):
    def __init__(self, message: str, **details):
        super().__init__(message, "dimension_mismatch", details)


class InvalidMultiIndexError(UsageError):
    def __init__(self, message: str, **details):
        super().__init__(message, "invalid_multi_index", details)


class TrivialSpaceError(UsageError):
    """K < N: the only antisymmetric tensor is zero."""

    def __init__(self, n: int, k: int):
        super().__init__(
            f"K={k} < N={n}: the antisymmetric space is trivial (only the zero tensor exists)",
            "trivial_space",
            {"N": n, "K": k},
        )


class SampleCountError(UsageError):
    def __init__(self, message: str, **details):
        super().__init__(message, "sample_count", details)


class MissingRepresentationError(UsageError):
    def __init__(self, message: str, **details):
        super().__init__(message, "missing_representation", details)


class FormatError(UsageError):
    def __init__(self, message: str, **details):
        super().__init__(message, "format_error", details)


class ConfigError(UsageError):
    def __init__(self, message: str, **details):
        super().__init__(message, "config_error", details)


class OrderLimitError(UsageError):
    def __init__(self, message: str, **details):
        super().__init__(message, "order_limit", details)


class AntisymmetryError(NumericError):
    def __init__(self, violation: float, index: tuple, swapped: tuple):
        super().__init__(
            f"tensor is not antisymmetric: |X{index} + X{swapped}| = {violation:.3e}",
            "not_antisymmetric",
            {"violation": violation, "index": index, "swapped": swapped},
        )
        self.index = index
        self.swapped = swapped


class BoundOverflowError(NumericError):
    def __init__(self, n: int, limit: int):
        super().__init__(
            f"rank bounds are only evaluated up to N={limit}, got N={n}",
            "bound_overflow",
            {"N": n, "limit": limit},
        )


class LinearSolveError(NumericError):
    def __init__(self, message: str, **details):
        super().__init__(message, "linear_solve", details)


class DegenerateNormError(NumericError):
    def __init__(self, norm: float):
        super().__init__(
            f"ansatz norm {norm:.3e} is below 1e-14 (degenerate ansatz)",
            "degenerate_norm",
            {"norm": norm},
        )
        self.norm = norm


class AnnihilatedAnsatzError(NumericError):
    def __init__(self, norm: float):
        super().__init__(
            f"antisymmetrization annihilated the ansatz (norm {norm:.3e}); re-initialize with another seed",
            "annihilated_ansatz",
            {"norm": norm},
        )
        self.norm = norm


class NonFiniteGradientError(NumericError):
    def __init__(self, index: int, value: float):
        super().__init__(
            f"non-finite gradient entry {value} at parameter index {index}",
            "non_finite_gradient",
            {"index": index, "value": value},
        )
        self.index = index


class TrainingDivergedError(NumericError):
    def __init__(self, iteration: int, loss: float, trace: Any):
        super().__init__(
            f"training diverged at iteration {iteration} (loss {loss:.3e})",
            "training_diverged",
            {"iteration": iteration, "loss": loss},
        )
        self.trace = trace


class ImaginaryResidueError(NumericError):
    def __init__(self, name: str, value: complex):
        super().__init__(
            f"{name} has a non-negligible imaginary part: {value}",
            "imaginary_residue",
            {"quantity": name, "real": value.real, "imag": value.imag},
        )
