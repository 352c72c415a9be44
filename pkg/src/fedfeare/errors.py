"""Exception hierarchy shared by every fedfeare module."""


class FedFeareError(Exception):
    """Base class for all errors raised by this package."""


class InvalidDataError(FedFeareError, ValueError):
    """Malformed dataset: ragged columns, bad labels, duplicate ids, non-finite values."""


class MissingLabelsError(InvalidDataError):
    pass


class LabelDomainError(InvalidDataError):
    pass


class InvalidRuleError(FedFeareError, ValueError):
    """A rule references an unknown feature or is structurally invalid."""


class OpaqueConditionError(InvalidRuleError):
    """A rule holding an opaque (remote) split was evaluated on plaintext data."""


class SchemaError(FedFeareError, ValueError):
    """Serialized rule set or spec does not match the expected schema."""


class GenerationError(FedFeareError, ValueError):
    pass


# -- cryptography -----------------------------------------------------------

class KeygenError(FedFeareError, ValueError):
    pass


class PlaintextRangeError(FedFeareError, ValueError):
    pass


class WrongKeyError(FedFeareError, ValueError):
    pass


# -- protocol / transport ---------------------------------------------------

class ProtocolError(FedFeareError):
    """A peer sent a message that violates the protocol."""


class AlignmentError(ProtocolError):
    """Instance ids of the parties do not line up."""


class ProtocolIntegrityError(ProtocolError):
    """A decrypted or unmasked quantity is impossible (e.g. count > subset size)."""


class StaleModelError(ProtocolError):
    """A rule refers to an opaque split the passive party has no record of."""


class TransportError(FedFeareError):
    pass


class ClosedChannelError(TransportError):
    pass


class FrameError(TransportError, ValueError):
    """Malformed wire frame."""


class VersionError(FrameError):
    pass
