"""Exception hierarchy.

Two families matter for the CLI exit codes: configuration problems
(exit code 1) and numerical assertions that failed at run time
(exit code 2).
"""


class TorsigError(Exception):
    """Base class for all package errors."""


class ConfigInvalid(TorsigError):
    """A run configuration failed validation.

    ``pointer`` is a JSON-pointer-style path to the offending field.
    """

    def __init__(self, pointer, message):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}")


class NumericalAssertion(TorsigError):
    """A runtime numerical identity or guard failed."""


class AmbientMismatch(TorsigError):
    pass


class TruncationOverflow(TorsigError):
    pass


class ZeroLambda(TorsigError):
    pass


class OddDimension(TorsigError):
    pass


class EvenDimension(TorsigError):
    pass


class UnsupportedDimension(TorsigError):
    pass


class NonConstantFlux(TorsigError):
    pass


class FluxNotClosed(NumericalAssertion):
    pass


class AdjointMismatch(NumericalAssertion):
    pass


class AmbiguousKernel(NumericalAssertion):
    pass


class DegenerateForm(NumericalAssertion):
    pass


class TauNotPreserving(NumericalAssertion):
    pass


class TrackingAmbiguity(NumericalAssertion):
    pass


class SymmetryNotDetected(TorsigError):
    """Raised internally when the mode-pairing eta method does not apply."""


class TailTooLarge(NumericalAssertion):
    def __init__(self, message, required_radius=None):
        self.required_radius = required_radius
        super().__init__(message)


class IllConditionedFit(NumericalAssertion):
    pass


class ConstancyViolated(NumericalAssertion):
    pass


class IdentityViolated(NumericalAssertion):
    pass
