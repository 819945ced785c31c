"""Exception hierarchy shared across the protocol modules."""

from __future__ import annotations


class ProtocolError(Exception):
    """Base class for every error raised by agenttrust."""


# crypto
class NonCanonicalizable(ProtocolError, ValueError):
    pass


class MalformedKey(ProtocolError, ValueError):
    pass


# identity
class NotFound(ProtocolError, LookupError):
    pass


class UnknownKey(ProtocolError, LookupError):
    pass


class UnauthorizedRotation(ProtocolError):
    pass


# credentials
class ZeroTtl(ProtocolError, ValueError):
    pass


class KeyNotActive(ProtocolError):
    pass


class InvalidCredentialType(ProtocolError, ValueError):
    pass


class NotIssuer(ProtocolError):
    pass


class AlreadyRevoked(ProtocolError):
    pass


class UnknownCredential(ProtocolError, LookupError):
    pass


class RevocationUnavailable(ProtocolError):
    """The revocation source could not be consulted."""


# authorization envelopes
class MalformedPattern(ProtocolError, ValueError):
    pass


class CurrencyMismatch(ProtocolError, ValueError):
    pass


class DelegationError(ProtocolError):
    """Base for every rejection of a delegated envelope or chain."""

    code = "DelegationError"


class ScopeExceedsParent(DelegationError):
    code = "ScopeExceedsParent"


class DepthExhausted(DelegationError):
    code = "DepthExhausted"


class ParentForbidsDelegation(DelegationError):
    code = "ParentForbidsDelegation"


class ChainTooDeep(DelegationError):
    code = "ChainTooDeep"


class BrokenLink(DelegationError):
    code = "BrokenLink"


class InvalidEnvelope(DelegationError):
    code = "InvalidEnvelope"

    def __init__(self, message: str, violations=()):
        super().__init__(message)
        self.violations = list(violations)


# interaction proofs
class SelfInteraction(ProtocolError, ValueError):
    pass


class WrongResponder(ProtocolError):
    pass


class InvalidInitiatorSignature(ProtocolError):
    pass


class IncompleteRecord(ProtocolError, ValueError):
    pass


class NotInBatch(ProtocolError, LookupError):
    pass


class BackendUnavailable(ProtocolError):
    pass


class InvalidRecord(ProtocolError, ValueError):
    """A submitted record failed signature or structure checks."""


# trust engine
class UnknownAgent(ProtocolError, LookupError):
    pass


class UnknownPrincipal(ProtocolError, LookupError):
    pass


class PrincipalMismatch(ProtocolError):
    pass


class InvalidEndorsement(ProtocolError, ValueError):
    pass


class BothEmpty(ProtocolError, ValueError):
    pass


# registry
class DuplicateDid(ProtocolError):
    pass


class BadProofOfControl(ProtocolError):
    pass


class BadEventSignature(ProtocolError):
    pass


class CorruptLog(ProtocolError):
    pass


# interop
class MissingFacetSource(ProtocolError):
    pass


class OutOfRange(ProtocolError, ValueError):
    pass


class MalformedEvent(ProtocolError, ValueError):
    pass
