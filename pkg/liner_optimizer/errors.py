from typing import Optional, Sequence


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class MeshInvariantError(ValueError):
    """Raised when a mesh violates one of its structural checks."""

    def __init__(self, check: str, message: str):
        self.check = check
        super().__init__(f"{check}: {message}")


class RankError(ValueError):
    def __init__(self, requested: int, rank: int):
        self.requested = requested
        self.rank = rank
        super().__init__(
            f"Requested {requested} modes but the attainable rank is {rank}"
        )


class SingularSystemError(ArithmeticError):
    def __init__(
        self,
        message: str,
        sample_index: Optional[int] = None,
        condition: Optional[float] = None,
    ):
        self.sample_index = sample_index
        self.condition = condition
        details = []
        if sample_index is not None:
            details.append(f"sample {sample_index}")
        if condition is not None:
            details.append(f"condition estimate {condition:.3e}")
        suffix = f" ({', '.join(details)})" if details else ""
        super().__init__(f"{message}{suffix}")


class ConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int, max_iter: Optional[int] = None):
        self.residual = residual
        self.iterations = iterations
        self.max_iter = max_iter
        budget = f" of {max_iter}" if max_iter is not None else ""
        super().__init__(
            f"GMRES stopped after {iterations}{budget} iterations "
            f"with relative residual {residual:.3e}"
        )


class SampleSolveError(RuntimeError):
    def __init__(self, sample_index: int, cause: Exception, failed: Sequence[int] = ()):
        self.sample_index = sample_index
        self.cause = cause
        self.failed = tuple(failed) or (sample_index,)
        others = ""
        if len(self.failed) > 1:
            others = f" ({len(self.failed)} samples failed: {list(self.failed)})"
        super().__init__(f"Solve failed for sample {sample_index}: {cause}{others}")


class ConfigError(ValueError):
    def __init__(self, message: str, section: Optional[str] = None, key: Optional[str] = None):
        self.section = section
        self.key = key
        where = ".".join(part for part in (section, key) if part)
        super().__init__(f"[{where}] {message}" if where else message)
