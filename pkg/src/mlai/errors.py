"""Exception hierarchy shared by every mlai module."""


class MlaiError(Exception):
    """Base class for all errors raised by mlai."""


# imaging
class MalformedHeader(MlaiError, ValueError):
    pass


class LengthMismatch(MlaiError, ValueError):
    pass


class EmptyIntersection(MlaiError, ValueError):
    pass


# features
class TooShort(MlaiError, ValueError):
    pass


class DegenerateFeature(MlaiError, ValueError):
    pass


class DimensionMismatch(MlaiError, ValueError):
    pass


class ZeroVector(MlaiError, ValueError):
    pass


# detection
class OutOfCell(MlaiError, ValueError):
    pass


class UnknownSensor(MlaiError, KeyError):
    pass


# tracking
class TargetLost(MlaiError):
    pass


# reid
class ConfigMismatch(MlaiError, ValueError):
    pass


class EmptyGallery(MlaiError, ValueError):
    pass


# protocol
class PayloadTooLarge(MlaiError, ValueError):
    pass


class NeedMoreBytes(MlaiError):
    pass


class CorruptFrame(MlaiError, ValueError):
    pass


class NoSamples(MlaiError, ValueError):
    pass


class TransportClosed(MlaiError, ConnectionError):
    pass


# sim
class CoincidentPoints(MlaiError, ValueError):
    pass


class ScenarioInvalid(MlaiError, ValueError):
    pass


class Deadlock(MlaiError, RuntimeError):
    pass
