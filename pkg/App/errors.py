"""
Error kinds raised by the solver toolkit.
Argument and data problems are ValueErrors; failures of a running solve are
RuntimeErrors so callers can tell bad input from numerical trouble.
"""

from typing import Optional


class InvalidArgumentError(ValueError):
    pass


class MalformedMeshError(ValueError):
    """Mesh data that violates the mesh invariants or the text format."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MalformedBoundaryError(MalformedMeshError):
    pass


class PreconditionError(ValueError):
    pass


class InvalidSystemError(ValueError):
    pass


class PointLocationError(ValueError):
    def __init__(self, point):
        super().__init__(f"Point ({point[0]:.6g}, {point[1]:.6g}) is outside the mesh")
        self.point = tuple(point)


class ModalDomainError(ValueError):
    pass


class DegenerateQuadraticError(ValueError):
    """Leading coefficient of the d2 quadratic vanished; `fallback_root` solves the linear remainder."""

    def __init__(self, message: str, fallback_root: complex):
        super().__init__(message)
        self.fallback_root = fallback_root


class MarginalRootError(ValueError):
    pass


class SolverError(RuntimeError):
    stage: Optional[str] = None

    def with_stage(self, stage: str) -> "SolverError":
        self.stage = stage
        self.args = (f"[{stage}] {self.args[0] if self.args else ''}",) + tuple(self.args[1:])
        return self


class IterationLimitError(SolverError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BreakdownError(SolverError):
    pass


class InstabilityError(SolverError):
    def __init__(self, step_index: int, t: float):
        super().__init__(f"Non-finite values at step {step_index} (t={t:.6g})")
        self.step_index = step_index
        self.t = t


class OutputError(OSError):
    """A result file could not be written; carries the offending path."""

    def __init__(self, path: str, cause: Exception):
        super().__init__(f"Cannot write {path}: {cause}")
        self.path = path
