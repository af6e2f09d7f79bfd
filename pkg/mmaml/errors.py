# Exception hierarchy shared by the library and the command line front end.


class MamlError(Exception):
    """Base class for every error raised on purpose by mmaml."""


class DimensionMismatchError(MamlError, ValueError):
    def __init__(self, expected, got):
        super().__init__(f"dimension mismatch: expected {expected}, got {got}")
        self.expected = expected
        self.got = got


class DivergenceError(MamlError):
    """A non-finite value appeared in an inner path or an outer iterate."""

    def __init__(self, step, where="inner path"):
        super().__init__(f"non-finite value in {where} at step {step}")
        self.step = step
        self.where = where


class StepsizeError(MamlError, ValueError):
    """Inner stepsize violates alpha < (2^(1/2N) - 1)/L."""

    def __init__(self, alpha, alpha_max, N):
        super().__init__(
            f"inner stepsize alpha={alpha!r} must satisfy alpha < (2^(1/2N) - 1)/L = {alpha_max!r} (N={N})"
        )
        self.alpha = alpha
        self.alpha_max = alpha_max
        self.N = N


class FamilyError(MamlError, TypeError):
    """An oracle was called on a task of the wrong case (resampling vs finite-sum)."""


class ConfigError(MamlError):
    """Invalid configuration file, override or sweep grid."""
