"""Exception and warning types.

Every error carries the name of the module that raised it so the CLI can
print a diagnostic that points at the failing stage.
"""


class GatetxError(Exception):
    """Base class for all model errors (CLI exit code 1)."""

    module = "gatetx"
    exit_code = 1


class ConfigError(GatetxError):
    """Invalid user input or configuration (CLI exit code 2)."""

    exit_code = 2


# chip_model
class InvalidGeometry(ConfigError):
    module = "chip"


class InvalidTopology(ConfigError):
    module = "chip"


# hydraulics
class SingularNetwork(GatetxError):
    module = "hydraulics"


class ZeroFlow(GatetxError):
    module = "hydraulics"


class InvalidPressure(ConfigError):
    module = "hydraulics"


# gating
class OverlappingPulses(ConfigError):
    module = "gating"


class EmptySequence(ConfigError):
    module = "gating"


class InvalidSchedule(ConfigError):
    module = "gating"


# transport
class UnderResolved(GatetxError):
    module = "transport"


class InvalidParams(ConfigError):
    module = "transport"


# signal analysis
class ParseError(ConfigError):
    module = "analysis"

    def __init__(self, message, line=None, path=None, module=None):
        self.line = line
        self.path = path
        if module is not None:
            self.module = module
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class InvalidTrace(ConfigError):
    module = "analysis"


class DegenerateFit(GatetxError):
    module = "analysis"


# calibration
class DegenerateTargets(ConfigError):
    module = "calibration"


class NotConverged(GatetxError):
    module = "calibration"

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class EmptyWindow(UserWarning):
    """Trace horizon ends before the first possible arrival."""


class DegenerateTrain(UserWarning):
    """Train metrics requested for a trace without any detected pulse."""


class LaminarRegimeWarning(UserWarning):
    """Reynolds number outside the laminar range the dispersion closure assumes."""
