"""Simulated cryptographic primitives.

Hashing is real (SHA-256).  Signatures are HMAC tags keyed by a per-party
secret held in a :class:`KeyRing`; encryption is a SHA-256 keystream with an
authentication tag.  Neither is meant to be secure against anything but the
simulated adversaries, which only ever receive messages and ciphertext bytes.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
from dataclasses import dataclass, field

from . import encoding
from .encoding import encode
from .errors import TamperedCiphertext, UnknownSigner, WrongKey

HASH_NAME = "sha256"
DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)


def hash_bytes(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def hash_value(value) -> bytes:
    """Digest of the canonical encoding of ``value``."""
    return hash_bytes(encode(value))


class Kind(enum.IntEnum):
    USER = 1
    OPERATOR = 2
    ENCLAVE = 3
    MANAGER = 4
    VENDOR = 5


@dataclass(frozen=True, order=True)
class PartyId:
    kind: Kind
    ident: bytes
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if len(self.ident) != DIGEST_SIZE:
            raise ValueError("party ident must be 32 bytes")

    def __encode__(self):
        return b"P", (int(self.kind), self.ident)

    def __repr__(self):
        return f"{self.kind.name.lower()}:{self.label or self.ident[:4].hex()}"

    @property
    def short(self) -> str:
        return self.label or self.ident[:4].hex()


def _party_from_fields(kind, ident):
    return PartyId(Kind(kind), ident)


encoding.register(b"P", _party_from_fields)


@dataclass(frozen=True)
class Signed:
    """A payload tuple signed by ``signer``; ``payload[0]`` is the message kind."""

    payload: tuple
    signer: PartyId
    tag: bytes

    @property
    def kind(self) -> str:
        return self.payload[0]

    def __getitem__(self, i):
        return self.payload[i]

    def __encode__(self):
        return b"G", (self.payload, self.signer, self.tag)

    def digest(self) -> bytes:
        return hash_value(self)


encoding.register(b"G", lambda payload, signer, tag: Signed(tuple(payload), signer, tag))


@dataclass(frozen=True)
class Ciphertext:
    key_id: bytes
    nonce: bytes
    body: bytes
    mac: bytes

    def __encode__(self):
        return b"C", (self.key_id, self.nonce, self.body, self.mac)


encoding.register(b"C", Ciphertext)


@dataclass(frozen=True)
class SymmetricKey:
    key_id: bytes
    secret: bytes = field(repr=False)

    def __encode__(self):
        return b"K", (self.key_id, self.secret)


encoding.register(b"K", SymmetricKey)


@dataclass(frozen=True)
class PublicKey:
    """Encryption key of a party.

    The sealing secret is carried so the stand-in scheme can produce a
    keystream; it is never serialized and never compared.
    """

    owner: PartyId
    key_id: bytes
    _seal: bytes = field(repr=False, compare=False, default=b"")

    def __encode__(self):
        return b"Q", (self.owner, self.key_id)


@dataclass(frozen=True)
class PrivateKey:
    owner: PartyId
    key_id: bytes
    secret: bytes = field(repr=False)

    @property
    def public(self) -> PublicKey:
        return PublicKey(self.owner, self.key_id, self.secret)


def derive_key(label: bytes, *parts) -> SymmetricKey:
    secret = hash_value((b"symkey", label, *parts))
    return SymmetricKey(hash_bytes(b"keyid" + secret), secret)


def _keystream(secret: bytes, nonce: bytes, length: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < length:
        out += hashlib.sha256(secret + nonce + counter.to_bytes(8, "big")).digest()
        counter += 1
    return bytes(out[:length])


def _key_material(key) -> tuple[bytes, bytes]:
    if isinstance(key, SymmetricKey):
        return key.key_id, key.secret
    if isinstance(key, PrivateKey):
        return key.key_id, key.secret
    if isinstance(key, PublicKey):
        return key.key_id, key._seal
    raise TypeError(f"not a key: {type(key).__name__}")


def encrypt(key, plaintext: bytes, nonce: bytes | None = None) -> Ciphertext:
    """Encrypt under a symmetric key or a recipient's public key."""
    key_id, secret = _key_material(key)
    if nonce is None:
        nonce = hash_bytes(b"nonce" + key_id + plaintext)[:16]
    body = bytes(a ^ b for a, b in zip(plaintext, _keystream(secret, nonce, len(plaintext))))
    mac = hmac.new(secret, nonce + body, hashlib.sha256).digest()
    return Ciphertext(key_id, nonce, body, mac)


def decrypt(key, ct: Ciphertext) -> bytes:
    """Decrypt with a symmetric or private key; errors on wrong key or tampering."""
    if isinstance(key, PublicKey):
        raise WrongKey("cannot decrypt with a public key")
    key_id, secret = _key_material(key)
    if key_id != ct.key_id:
        raise WrongKey("ciphertext was produced for a different key")
    mac = hmac.new(secret, ct.nonce + ct.body, hashlib.sha256).digest()
    if not hmac.compare_digest(mac, ct.mac):
        raise TamperedCiphertext("authentication tag mismatch")
    return bytes(a ^ b for a, b in zip(ct.body, _keystream(secret, ct.nonce, len(ct.body))))


class KeyRing:
    """Per-scenario key table: signing secrets and encryption keys by party."""

    def __init__(self, seed: bytes = b""):
        self._seed = seed
        self._sign: dict[bytes, bytes] = {}
        self._enc: dict[bytes, PrivateKey] = {}
        self._parties: dict[bytes, PartyId] = {}

    def new_party(self, kind: Kind, label: str) -> PartyId:
        ident = hash_value((b"party", self._seed, int(kind), label))
        if ident in self._parties:
            raise ValueError(f"duplicate party {label!r}")
        pid = PartyId(kind, ident, label)
        self._parties[ident] = pid
        self._sign[ident] = hash_value((b"sign", self._seed, ident))
        enc_secret = hash_value((b"enc", self._seed, ident))
        self._enc[ident] = PrivateKey(pid, hash_bytes(b"pk" + ident), enc_secret)
        return pid

    def party(self, ident: bytes) -> PartyId:
        return self._parties[ident]

    def __contains__(self, pid: PartyId) -> bool:
        return pid.ident in self._sign

    def public_key(self, pid: PartyId) -> PublicKey:
        return self._enc[pid.ident].public

    def private_key(self, pid: PartyId) -> PrivateKey:
        """Handle for the owning party only (enclaves, users)."""
        return self._enc[pid.ident]

    def _tag(self, secret: bytes, payload: tuple, signer: PartyId) -> bytes:
        return hmac.new(secret, encode((payload, signer)), hashlib.sha256).digest()

    def sign(self, signer: PartyId, *payload) -> Signed:
        secret = self._sign.get(signer.ident)
        if secret is None:
            raise UnknownSigner(repr(signer))
        payload = tuple(payload)
        return Signed(payload, signer, self._tag(secret, payload, signer))

    def verify(self, msg) -> bool:
        if not isinstance(msg, Signed):
            return False
        secret = self._sign.get(msg.signer.ident)
        if secret is None:
            return False
        try:
            expected = self._tag(secret, msg.payload, msg.signer)
        except Exception:
            return False
        return hmac.compare_digest(expected, msg.tag)

    def signer_for(self, pid: PartyId) -> "Signer":
        if pid not in self:
            raise UnknownSigner(repr(pid))
        return Signer(self, pid)


class Signer:
    """Signing capability bound to one party."""

    def __init__(self, ring: KeyRing, pid: PartyId):
        self._ring = ring
        self.party = pid

    def __call__(self, *payload) -> Signed:
        return self._ring.sign(self.party, *payload)


def message_hash(msg: Signed) -> bytes:
    """Request hash ``H(m)`` over the full signed message."""
    return hash_value(msg)
