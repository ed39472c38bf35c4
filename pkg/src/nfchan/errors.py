"""Exception types raised across the package."""


class NfchanError(Exception):
    """Base class for all package errors."""

    #: short machine-readable tag used by the CLI error line
    kind = "error"


class InvalidGeometry(NfchanError):
    """Malformed geometric input (bad room, zero-length wall, point outside, ...)."""

    kind = "invalid-geometry"


class SingularGeometry(NfchanError):
    """Geometry that makes a quantity undefined (e.g. image point on top of the RX reference)."""

    kind = "singular-geometry"


class EmptyChannel(NfchanError):
    """A channel/measurement operation received no paths, tones or measurements."""

    kind = "empty-channel"


class DegenerateTriangulation(NfchanError):
    """Bearing set cannot fix a point (fewer than two bearings, or all parallel)."""

    kind = "degenerate-triangulation"


class InconsistentAnchor(NfchanError):
    """Absolute delay recovery produced a non-physical (non-positive) time of flight."""

    kind = "inconsistent-anchor"


class DatasetFormatError(NfchanError):
    """Binary dataset violates the NFCM container format."""

    kind = "dataset-format"


class ScenarioError(NfchanError):
    """Scenario text is syntactically or semantically invalid.

    Carries the 1-based line number the problem was detected on (0 when the
    problem is not tied to a specific line, e.g. a missing section).
    """

    kind = "scenario"

    def __init__(self, message, line=0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line
