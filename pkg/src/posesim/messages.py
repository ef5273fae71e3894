"""Message kinds and the manager call envelope."""

from __future__ import annotations

from dataclasses import dataclass

from . import encoding

EXECUTE = "EXECUTE"
UPDATE = "UPDATE"
CONFIRM = "CONFIRM"
OK = "OK"
BAD = "BAD"
CREATE = "CREATE"
INIT = "INIT"
FAIL = "FAIL"
DEPOSIT = "DEPOSIT"
WITHDRAW = "WITHDRAW"
REGISTER = "REGISTER"
QUOTE = "QUOTE"
EVIDENCE = "EVIDENCE"


@dataclass(frozen=True)
class ManagerCall:
    method: str
    args: tuple = ()

    def __encode__(self):
        return b"M", (self.method, self.args)


encoding.register(b"M", lambda method, args: ManagerCall(method, tuple(args)))


@dataclass(frozen=True)
class Bad:
    """Enclave refusal with the guard that triggered it."""

    cause: str

    def __bool__(self):
        return False


def parse(msg, kind: str, arity: int):
    """Payload of a signed message if it has the expected kind and arity, else None."""
    payload = getattr(msg, "payload", None)
    if not isinstance(payload, tuple) or len(payload) != arity or payload[0] != kind:
        return None
    # every kind except the attestation messages addresses a contract id
    if arity > 1 and kind not in (REGISTER, QUOTE) and not isinstance(payload[1], int):
        return None
    return payload
