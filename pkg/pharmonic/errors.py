class LabError(ValueError):
    """Base error carrying a stable code used in reports and exit-code mapping"""

    code = "lab-error"

    def __init__(self, message: str = ""):
        super().__init__(f"{self.code}: {message}" if message else self.code)


class ScaleUnderresolved(LabError):
    code = "scale-underresolved"


class DomainExit(LabError):
    code = "blowup-out-of-domain"


class ProjectionUndefined(LabError):
    code = "projection-undefined"


class NodeOutOfRange(LabError):
    code = "node-out-of-range"


class TestFieldNotCompact(LabError):
    __test__ = False
    code = "test-field-not-compact"


class Divergence(LabError):
    code = "divergence"


class LatticeMismatch(LabError):
    code = "lattice-mismatch"


class NotInSigma(LabError):
    code = "not-in-sigma"


class DegenerateFit(LabError):
    code = "degenerate-fit"


class ConfigError(LabError):
    code = "config-invalid"


class InvariantViolation(LabError):
    code = "invariant-violation"
