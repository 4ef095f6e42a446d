"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class NotPositiveDefinite(ValueError):
    """Cholesky factorization hit a non-positive pivot."""

    def __init__(self, pivot_index, pivot_value):
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value
        super().__init__(
            f"matrix is not positive definite: pivot {pivot_index} = {pivot_value:.3e}"
        )


class ShrinkageFailed(ValueError):
    """Diagonal shrinkage could not restore positive definiteness."""


class OracleDidNotConverge(RuntimeError):
    """Iterative precision-matrix minimizer stopped above its gradient tolerance."""

    def __init__(self, grad_norm, steps):
        self.grad_norm = grad_norm
        self.steps = steps
        super().__init__(
            f"minimizer stopped after {steps} steps with gradient norm {grad_norm:.3e}"
        )


class LabelError(ValueError):
    """A class label lies outside [0, K)."""


class AssignmentError(ValueError):
    """Per-sample class weights violate the one-hot / simplex contract."""


class BatchError(ValueError):
    """A training batch is empty or malformed."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, step, value):
        self.epoch = epoch
        self.step = step
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, step {step}")


class GenError(RuntimeError):
    """Synthetic data generation failed."""


class FormatError(ValueError):
    """A dataset file is malformed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EvalError(ValueError):
    """An evaluation routine received unusable inputs."""


class ConfigError(ValueError):
    """An experiment configuration value is invalid."""
