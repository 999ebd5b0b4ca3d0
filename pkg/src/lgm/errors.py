"""Exception types raised across the package."""


class LGMError(Exception):
    """Base class for all errors raised by lgm."""


class DatasetError(LGMError):
    pass


class MissingValue(DatasetError):
    def __init__(self, row, column):
        self.row = row
        self.column = column
        super().__init__(f"missing value at row {row}, column {column!r}")


class UnknownRegion(DatasetError):
    def __init__(self, row, region):
        self.row = row
        self.region = region
        super().__init__(f"row {row}: region {region!r} is not in the graph")


class NonPositiveTime(DatasetError):
    def __init__(self, row=None, value=None):
        self.row = row
        self.value = value
        where = f"row {row}: " if row is not None else ""
        super().__init__(f"{where}survival time must be > 0, got {value!r}")


class NoEvents(DatasetError):
    def __init__(self):
        super().__init__("weibull family needs at least one observed event")


class EmptyDataset(DatasetError):
    def __init__(self):
        super().__init__("dataset has no rows")


class BadValue(DatasetError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: cannot use value {value!r}")


class GraphError(LGMError):
    pass


class AsymmetricEdge(GraphError):
    def __init__(self, a, b):
        self.pair = (a, b)
        super().__init__(f"edge {a} -> {b} has no reverse edge {b} -> {a}")


class DuplicateRegion(GraphError):
    def __init__(self, region, line=None):
        self.region = region
        self.line = line
        super().__init__(f"line {line}: region {region!r} declared twice")


class BadIndex(GraphError):
    def __init__(self, msg):
        super().__init__(msg)


class PhiOutOfRange(GraphError):
    def __init__(self, phi):
        super().__init__(f"phi must lie in [0, 1], got {phi!r}")


class NonPositiveShape(LGMError):
    def __init__(self, alpha):
        super().__init__(f"weibull shape must be > 0, got {alpha!r}")


class QuadratureFailure(LGMError):
    pass


class NonConvergence(LGMError):
    pass


class SingularPrecision(LGMError):
    pass


class ModeSearchFailure(LGMError):
    pass


class GridExplosion(LGMError):
    pass


class EmptyGrid(LGMError):
    pass


class InsufficientDraws(LGMError):
    pass


class GuardRailExceeded(LGMError):
    pass


class DegenerateProposal(LGMError):
    pass


class BadConfig(LGMError):
    pass


class UnknownCovariate(LGMError):
    pass


class MissingFitArtifact(LGMError):
    pass
