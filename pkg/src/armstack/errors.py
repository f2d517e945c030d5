"""Exception types shared across the control stack."""


class ArmstackError(Exception):
    """Base class for all package-specific failures."""


class DimensionError(ArmstackError):
    """An input vector or matrix has the wrong shape for its contract."""


class DegenerateGradientError(ArmstackError):
    """A distance gradient is undefined (control point on top of the obstacle)."""


class OverConstrainedError(ArmstackError):
    """Permanent equality tasks demand more rows than the arm has joints."""


class CombinatorialLimitError(ArmstackError):
    """More set-based tasks are active than the solution tree is allowed to hold."""


class HardLimitBreachError(ArmstackError):
    """A set-based task value left the physical band; the run must stop."""


class GraspFailureError(ArmstackError):
    """Tool was not close enough to the grasp pose when attach was requested."""


class UnknownObjectError(ArmstackError):
    """Lookup of an object id that the world does not contain."""


class WireFormatError(ArmstackError):
    """A datagram does not match the command grammar."""


class InvalidSelectionError(ArmstackError):
    """An icon that is not available on the current console layer."""


class ConfigError(ArmstackError):
    """A configuration file failed to parse or validate.

    Carries the offending path and, when known, the line number so the CLI
    can point at the exact spot.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + where)
