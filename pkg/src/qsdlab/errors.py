"""Exception hierarchy shared by all qsdlab modules."""


class QsdLabError(Exception):
    """Base class for every error raised by this package."""


# --- kernel validation ----------------------------------------------------

class ValidationError(QsdLabError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NegativeEntry(ValidationError):
    pass


class RowSumExceedsOne(ValidationError):
    pass


# --- cyclic structure -----------------------------------------------------

class NotStronglyConnected(QsdLabError):
    pass


class NoSurvivingTransition(QsdLabError):
    pass


class InvalidPartition(QsdLabError):
    pass


class IndexOutOfRange(QsdLabError):
    pass


# --- spectral engine ------------------------------------------------------

class ZeroKernel(QsdLabError):
    pass


class PeripheralMultiplicity(QsdLabError):
    """A second eigenvalue sits on the leading modulus: no mixing rate exists."""


class AlphaIsOne(QsdLabError):
    pass


class OracleFailure(QsdLabError):
    pass


class InconsistentCertificate(QsdLabError):
    pass


# --- QSD calculus ---------------------------------------------------------

class ThetaZero(QsdLabError):
    pass


class NotAQSD(QsdLabError):
    pass


class ZeroMassOnA0(QsdLabError):
    pass


class DegenerateWeight(QsdLabError):
    pass


# --- quasi-limits ---------------------------------------------------------

class NotInBV(QsdLabError):
    pass


class Extinct(QsdLabError):
    pass


class EtaOrthogonal(QsdLabError):
    pass


class NoValidTheta2(QsdLabError):
    pass


class KTooSmall(QsdLabError):
    pass


# --- Q-process ------------------------------------------------------------

class EmptyDomain(QsdLabError):
    pass


class UnderflowEta(QsdLabError):
    pass


# --- Monte Carlo ----------------------------------------------------------

class NoSurvivors(QsdLabError):
    pass


# --- CLI / IO -------------------------------------------------------------

class ParseError(QsdLabError):
    pass


class UnknownCommand(QsdLabError):
    pass
