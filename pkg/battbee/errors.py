"""
Custom exception classes
"""


class BattBeeError(Exception):
    """Base class for all package errors"""

    pass


class ParameterError(BattBeeError):
    """Invalid model parameter set"""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class OcvDomainError(BattBeeError):
    """OCV evaluated outside [0, 1]"""

    def __init__(self, v_s: float):
        self.v_s = v_s
        super().__init__(f"V_s={v_s!r} outside OCV domain [0, 1]")


class ScenarioError(BattBeeError):
    """Scenario fails validation"""

    pass


class IntegrationError(BattBeeError):
    """Non-finite derivative during time integration"""

    def __init__(self, term: str, t: float = float("nan")):
        self.term = term
        self.t = t
        super().__init__(f"non-finite {term} at t={t!r} s")


class TrajectoryError(BattBeeError):
    """Trajectory unsuitable for the requested check"""

    pass


class KineticsError(BattBeeError):
    """Non-finite Butler-Volmer argument"""

    def __init__(self, electrode: str):
        self.electrode = electrode
        super().__init__(f"non-finite overpotential argument in {electrode} electrode")


class CoverageError(BattBeeError):
    """OCV data does not span enough of the SoC range"""

    def __init__(self, coverage: float, required: float):
        self.coverage = coverage
        super().__init__(
            f"SoC coverage {coverage:.3f} below required {required:.3f}"
        )


class ResolutionError(BattBeeError):
    """PWL tolerance cannot be met with the segment limit"""

    pass


class PreconditionError(BattBeeError):
    """Operation called without its required precondition"""

    pass


class SynthesisError(BattBeeError):
    """Observer gain synthesis failed (pair not detectable)"""

    pass


class ConditioningError(BattBeeError):
    """Lyapunov system singular or closed loop not Hurwitz"""

    pass


class MeasurementError(BattBeeError):
    """Non-finite telemetry sample"""

    pass


class SegmentError(BattBeeError):
    """Linear observer step called outside its segment"""

    def __init__(self, expected: int, v_s: float):
        self.expected = expected
        self.v_s = v_s
        super().__init__(f"V_s estimate {v_s!r} lies outside segment {expected}")


class ConfigError(BattBeeError):
    """Scenario file parse or validation failure"""

    def __init__(self, message: str, lineno: int = 0):
        self.lineno = lineno
        prefix = f"line {lineno}: " if lineno else ""
        super().__init__(prefix + message)


class TelemetryError(BattBeeError):
    """Telemetry or data set CSV is malformed"""

    def __init__(self, message: str, column: str = ""):
        self.column = column
        super().__init__(message)
