"""Exception hierarchy shared by all modules."""


class ConfDiskError(Exception):
    """Base class for all package errors."""


class NonOrthogonalRotation(ConfDiskError, ValueError):
    pass


class NonPositiveDilation(ConfDiskError, ValueError):
    pass


class PoleAtPoint(ConfDiskError, ArithmeticError):
    pass


class DimensionMismatch(ConfDiskError, ValueError):
    pass


class NotApplicable(ConfDiskError, ValueError):
    pass


class BoundaryTouching(ConfDiskError, ValueError):
    pass


class OutsideBigCell(ConfDiskError, ArithmeticError):
    pass


class NotInS(ConfDiskError, ValueError):
    pass


class OutsideDomain(ConfDiskError, ValueError):
    pass


class NotHarmonic(ConfDiskError, ValueError):
    pass


class RankDeficiency(ConfDiskError, ArithmeticError):
    pass


class OutsideDisk(ConfDiskError, ValueError):
    pass


class GeometricOverlap(ConfDiskError, ValueError):
    pass


class ParticleOverflow(ConfDiskError, ValueError):
    pass


class NonStrictConfig(ConfDiskError, ValueError):
    pass


class NoFreePoint(ConfDiskError, RuntimeError):
    pass


class OddArityZero(ConfDiskError):
    """Signals an odd number of insertions; callers treat the value as 0."""


class UnsupportedDimension(ConfDiskError, ValueError):
    pass
