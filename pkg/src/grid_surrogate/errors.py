"""Exception types shared across the toolkit."""


class GridSurrogateError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(GridSurrogateError, ValueError):
    """A physical or model parameter is out of its valid domain."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class TopologyError(GridSurrogateError, ValueError):
    pass


class SolvabilityError(GridSurrogateError, RuntimeError):
    pass


class DivergenceError(GridSurrogateError, RuntimeError):
    def __init__(self, time, channel, message="non-finite state"):
        self.time = time
        self.channel = channel
        super().__init__(f"{message} at t={time:.6g} s in {channel}")


class DatasetFormatError(GridSurrogateError, ValueError):
    def __init__(self, message, row=None):
        self.row = row
        where = f" (row {row})" if row is not None else ""
        super().__init__(message + where)


class ConfigurationError(GridSurrogateError, ValueError):
    pass


class DataError(GridSurrogateError, ValueError):
    pass


class ContractError(GridSurrogateError, ValueError):
    """Shapes or schemas disagree with what a model was built for."""


class TrainingError(GridSurrogateError, RuntimeError):
    pass


class MissingArtifactError(GridSurrogateError, FileNotFoundError):
    """A stage's input (dataset, feature manifest, model) has not been produced yet."""


class StaleArtifactError(GridSurrogateError, ValueError):
    """An artifact was produced under a different configuration."""
