"""Exception hierarchy shared by every module."""


class InnospaceError(Exception):
    """Base class for all errors raised by the package."""

    #: short machine-readable tag used by the CLI error payload
    kind = "error"

    def to_dict(self):
        return {"error": self.kind, "message": str(self)}


class HierarchyError(InnospaceError, ValueError):
    """An activity code cannot be placed at the requested aggregation level."""

    kind = "hierarchy"

    def __init__(self, code, message):
        super().__init__(f"code {code!r}: {message}")
        self.code = code


class MatrixError(InnospaceError, ValueError):
    kind = "matrix"


class ParseError(InnospaceError, ValueError):
    """Malformed input file; carries the file path and 1-based line number."""

    kind = "parse"

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line

    def to_dict(self):
        d = super().to_dict()
        d.update(path=self.path, line=self.line)
        return d


class MissingDataError(InnospaceError, LookupError):
    """Requested (layer, year) matrices are not in the store."""

    kind = "missing-data"

    def __init__(self, missing):
        self.missing = sorted(missing)
        listed = ", ".join(f"{layer}:{year}" for layer, year in self.missing)
        super().__init__(f"missing matrices for {listed}")

    def to_dict(self):
        d = super().to_dict()
        d["missing"] = [f"{layer}:{year}" for layer, year in self.missing]
        return d


class DegenerateMatrixError(InnospaceError, ValueError):
    kind = "degenerate"


class ConvergenceError(InnospaceError, RuntimeError):
    """The BiCM solver stopped before reaching the residual tolerance."""

    kind = "convergence"

    def __init__(self, residual, iterations, model=None):
        super().__init__(
            f"BiCM fit did not converge after {iterations} iterations "
            f"(best max degree residual {residual:.3e})"
        )
        self.residual = residual
        self.iterations = iterations
        self.model = model

    def to_dict(self):
        d = super().to_dict()
        d.update(residual=self.residual, iterations=self.iterations)
        return d


class EnsembleSizeError(InnospaceError, ValueError):
    """The null ensemble is too small to resolve the requested threshold."""

    kind = "ensemble-size"


class ConfigError(InnospaceError, ValueError):
    kind = "config"


class UnknownCodeError(InnospaceError, KeyError):
    kind = "unknown-code"

    def __init__(self, code, suggestions=()):
        self.code = code
        self.suggestions = list(suggestions)
        msg = f"unknown activity code {code!r}"
        if self.suggestions:
            msg += f"; did you mean {', '.join(self.suggestions)}?"
        super().__init__(msg)

    def __str__(self):
        return self.args[0]

    def to_dict(self):
        d = super().to_dict()
        d["suggestions"] = self.suggestions
        return d


class PipelineError(InnospaceError, RuntimeError):
    """A pipeline stage failed; wraps the underlying error."""

    kind = "pipeline"

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause

    def to_dict(self):
        d = super().to_dict()
        d["stage"] = self.stage
        if isinstance(self.cause, InnospaceError):
            d["cause"] = self.cause.to_dict()
        else:
            d["cause"] = {"error": type(self.cause).__name__, "message": str(self.cause)}
        return d
