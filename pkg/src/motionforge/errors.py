"""Exception hierarchy; the CLI maps these onto its exit codes."""


class MotionForgeError(Exception):
    """Base class for library errors."""


class UserInputError(MotionForgeError):
    """Invalid caller-supplied data (bad spec, out-of-range parameter). Exit 2."""


class BoundsError(UserInputError):
    """Coordinate outside the field/frame bounds."""


class ShapeMismatchError(UserInputError):
    """Operands do not agree in shape."""


class FormatError(UserInputError):
    """Malformed serialized payload (.flo, PPM, JSON spec, checkpoint)."""


class StateError(MotionForgeError):
    """Incompatible or missing persistent state (checkpoint mismatch). Exit 4."""
