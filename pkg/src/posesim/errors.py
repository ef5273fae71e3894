"""Exception hierarchy shared by all simulator modules."""


class PoseError(Exception):
    """Base class for simulator errors."""


class EncodingError(PoseError):
    pass


# crypto
class CryptoError(PoseError):
    pass


class UnknownSigner(CryptoError):
    pass


class WrongKey(CryptoError):
    pass


class TamperedCiphertext(CryptoError):
    pass


# chain
class ChainError(PoseError):
    pass


class TimestampRegression(ChainError):
    pass


class OutOfRange(ChainError):
    pass


class NotFinal(ChainError):
    pass


# manager
class ManagerError(PoseError):
    """Raised by the manager for a rejected call; ``reason`` names the guard."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


# sync / enclave
class SyncError(PoseError):
    reason = "SyncError"


class BrokenChain(SyncError):
    reason = "BrokenChain"


class IncompleteTxData(SyncError):
    reason = "IncompleteTxData"


class ForkTooDeep(SyncError):
    reason = "ForkTooDeep"


class StaleHeaders(SyncError):
    reason = "StaleHeaders"


class RateViolation(SyncError):
    reason = "RateViolation"


# contracts
class ContractError(PoseError):
    pass


class UnknownCode(ContractError):
    pass


class BudgetExceeded(ContractError):
    pass


class InvalidMove(ContractError):
    pass


# harness / analysis
class ConfigInvalid(PoseError):
    pass


class ContractCrashed(PoseError):
    pass


class DomainError(PoseError, ValueError):
    pass


class MalformedTrace(PoseError):
    pass
