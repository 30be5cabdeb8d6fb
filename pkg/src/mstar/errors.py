"""Exception types shared across the package.

The CLI maps these onto its exit-code contract, so each family of failure
gets its own class rather than a bare ``ValueError``.
"""


class MstarError(Exception):
    """Base class for all package errors."""


class GraphError(MstarError, ValueError):
    """Invalid adjacency structure (self-loop, out-of-range unit, ...)."""


class AdjacencyParseError(GraphError):
    """Malformed edge-list text. ``lineno`` is 1-based."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class NotConnectedError(GraphError):
    """The map has more than one connected component."""


class DegenerateCovariateError(MstarError, ValueError):
    """Covariate has zero variance and cannot be standardized."""


class DatasetError(MstarError, ValueError):
    """Malformed or inconsistent dataset."""


class BalanceError(DatasetError):
    """Operation needs every area to carry the same number of rows."""


class SingularDesignError(MstarError, ValueError):
    """Design matrix is not of full column rank."""


class DegeneratePrecisionError(MstarError, ArithmeticError):
    """A closed-form precision came out nonpositive."""


class DivergenceError(MstarError, ArithmeticError):
    """A Markov chain reached a non-finite state."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite chain state at iteration {iteration}")


class ConfigError(MstarError, ValueError):
    """Bad experiment-grid or sampler configuration."""
