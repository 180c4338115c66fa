"""Exception hierarchy shared by all loopfdi subsystems."""


class LoopFdiError(Exception):
    """Base class for all loopfdi errors."""


class ParseError(LoopFdiError):
    """A configuration / scenario document could not be parsed."""


class ValidationError(LoopFdiError):
    """A parsed document violates a structural constraint; names the offending id."""

    def __init__(self, message: str, offending_id: str | None = None):
        super().__init__(message)
        self.offending_id = offending_id


class ConfigError(LoopFdiError):
    """A runtime configuration value is unusable (bad duration, port, path...)."""


class UnknownResidual(LoopFdiError):
    pass


class UnknownFault(LoopFdiError):
    pass


class UnknownSensor(LoopFdiError):
    pass


class UnknownFaultId(UnknownFault):
    """A scenario references a fault id missing from the graph."""


class MissingInput(LoopFdiError):
    """A batch lacks samples for a sensor required by a virtual-sensor solution."""

    def __init__(self, sensor_id: str):
        super().__init__(f"batch is missing required sensor {sensor_id!r}")
        self.sensor_id = sensor_id


class DegenerateLMTD(LoopFdiError):
    """LMTD undefined: a terminal temperature difference is non-positive."""


class NoConvergence(LoopFdiError):
    """The steady-state solve exhausted its iteration budget."""


class DivisionByZeroFlow(LoopFdiError):
    """A virtual-sensor solution divides by a zero flow."""


class InsufficientTraining(LoopFdiError):
    """Fewer fault-free batches than the calibration minimum."""


class OutOfOrderSample(LoopFdiError):
    """A sample arrived with a timestamp earlier than the buffer's last one."""


class EmptyBuffer(LoopFdiError):
    """Metrics requested from a buffer with no closed batch."""


class TooFewSamples(LoopFdiError):
    """Spectral metrics need at least 8 samples per batch."""


class BinMismatch(LoopFdiError):
    """KL divergence between distributions with different bin counts."""


class ContextOverflow(LoopFdiError):
    """The background block alone exceeds the token budget."""


class NoDiagnosisAvailable(LoopFdiError):
    """fault_query called before any diagnosis report exists."""


class InsufficientData(LoopFdiError):
    """Sensor-data query needs at least two closed batches."""


class EndpointError(LoopFdiError):
    """The chat-completion endpoint failed after the retry policy."""


class BindError(LoopFdiError):
    """The service port is unavailable."""


class CorruptLog(LoopFdiError):
    """A run-log line failed to parse; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str = ""):
        super().__init__(message or f"corrupt run log at line {line_number}")
        self.line_number = line_number
