"""Exception hierarchy shared by every foliage module."""


class FoliageError(Exception):
    """Base class for all library errors."""


class DivisionByZero(FoliageError, ZeroDivisionError):
    pass


class DomainError(FoliageError, ValueError):
    """A value or point lies outside the locus where an operation is defined."""


class UnboundCoordinate(FoliageError, IndexError):
    pass


class ParseError(FoliageError, ValueError):
    pass


class EmptyDomain(FoliageError):
    """A composition or restriction has no interior."""


class ChartMismatch(FoliageError, ValueError):
    pass


class SingularJacobian(FoliageError, ValueError):
    pass


class ZeroCovector(FoliageError, ValueError):
    pass


class OrbitOverflow(FoliageError):
    """Breadth-first enumeration exceeded its frontier cap."""


class WordNotFound(FoliageError):
    pass


class ParameterOutOfRange(FoliageError, ValueError):
    pass


class InvalidGenerator(FoliageError, ValueError):
    pass


class UnknownClosure(FoliageError):
    """The germ group closure could not be classified, so it cannot be averaged."""


class OutOfReach(FoliageError):
    pass


class TransportUnavailable(FoliageError):
    """No translation generators exist in the chart where transport was requested."""


class CoverageGap(FoliageError):
    def __init__(self, uncovered):
        self.uncovered = list(uncovered)
        super().__init__(f"{len(self.uncovered)} probe point(s) not covered: {self.uncovered[:5]}")
