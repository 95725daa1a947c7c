"""Error taxonomy shared by all modules.

Every public operation raises one of these (or a builtin IndexError for bad
indices) so the CLI can map failures onto machine-readable error kinds.
"""


class RobodError(Exception):
    """Base class; carries a stable machine-readable kind."""

    kind = "internal"


class ShapeError(RobodError, ValueError):
    """Operand dimensions are inconsistent."""

    kind = "shape"


class ConfigError(RobodError, ValueError):
    """A configuration value violates its contract."""

    kind = "config"


class StateError(RobodError, RuntimeError):
    """An operation was called in the wrong order (e.g. backward before forward)."""

    kind = "state"


class ParseError(RobodError, ValueError):
    """Input data could not be parsed; message carries row/column coordinates."""

    kind = "parse"


class MetricError(RobodError, ValueError):
    """A metric's preconditions are not met (e.g. single-class AUROC)."""

    kind = "metric"
