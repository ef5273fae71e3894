"""Canonical, length-prefixed binary encoding.

Every value is written as ``tag (1 byte) || length (4 bytes, big endian) ||
body``.  Containers encode their children in order, so two structurally equal
values always produce the same bytes.  Dicts are encoded as key-sorted pairs.

Objects that want a canonical form implement ``__encode__`` returning a tuple
``(tag, fields)`` where ``tag`` is a single byte registered with
:func:`register` and ``fields`` is a tuple of encodable values.
"""

from __future__ import annotations

import struct

from .errors import EncodingError

_LEN = struct.Struct(">I")

_T_NONE = b"N"
_T_TRUE = b"T"
_T_FALSE = b"F"
_T_INT = b"I"
_T_BYTES = b"B"
_T_STR = b"S"
_T_LIST = b"L"
_T_DICT = b"D"

_RESERVED = {_T_NONE, _T_TRUE, _T_FALSE, _T_INT, _T_BYTES, _T_STR, _T_LIST, _T_DICT}
_DECODERS: dict[bytes, object] = {}


def register(tag: bytes, factory) -> None:
    """Register ``factory(*fields)`` as the decoder for objects tagged ``tag``."""
    if len(tag) != 1 or tag in _RESERVED:
        raise ValueError(f"invalid object tag {tag!r}")
    existing = _DECODERS.get(tag)
    if existing is not None and existing is not factory:
        raise ValueError(f"tag {tag!r} already registered")
    _DECODERS[tag] = factory


def _frame(tag: bytes, body: bytes) -> bytes:
    return tag + _LEN.pack(len(body)) + body


def _int_body(value: int) -> bytes:
    length = (value.bit_length() + 8) // 8
    return value.to_bytes(length, "big", signed=True)


def encode(value) -> bytes:
    if value is None:
        return _frame(_T_NONE, b"")
    if value is True:
        return _frame(_T_TRUE, b"")
    if value is False:
        return _frame(_T_FALSE, b"")
    if isinstance(value, int):
        return _frame(_T_INT, _int_body(value))
    if isinstance(value, (bytes, bytearray, memoryview)):
        return _frame(_T_BYTES, bytes(value))
    if isinstance(value, str):
        return _frame(_T_STR, value.encode("utf-8"))
    if isinstance(value, (list, tuple)):
        return _frame(_T_LIST, b"".join(encode(v) for v in value))
    if isinstance(value, (set, frozenset)):
        parts = sorted(encode(v) for v in value)
        return _frame(_T_LIST, b"".join(parts))
    if isinstance(value, dict):
        pairs = sorted((encode(k), encode(v)) for k, v in value.items())
        return _frame(_T_DICT, b"".join(k + v for k, v in pairs))
    hook = getattr(value, "__encode__", None)
    if hook is not None:
        tag, fields = hook()
        return _frame(tag, b"".join(encode(f) for f in fields))
    raise EncodingError(f"cannot encode {type(value).__name__}")


def _read(buf: bytes, pos: int):
    if pos + 5 > len(buf):
        raise EncodingError("truncated frame header")
    tag = buf[pos:pos + 1]
    (length,) = _LEN.unpack_from(buf, pos + 1)
    start = pos + 5
    end = start + length
    if end > len(buf):
        raise EncodingError("truncated frame body")
    body = buf[start:end]
    if tag == _T_NONE:
        return None, end
    if tag == _T_TRUE:
        return True, end
    if tag == _T_FALSE:
        return False, end
    if tag == _T_INT:
        return int.from_bytes(body, "big", signed=True), end
    if tag == _T_BYTES:
        return bytes(body), end
    if tag == _T_STR:
        return body.decode("utf-8"), end
    items = []
    p = 0
    while p < len(body):
        item, p = _read(body, p)
        items.append(item)
    if tag == _T_LIST:
        return tuple(items), end
    if tag == _T_DICT:
        if len(items) % 2:
            raise EncodingError("odd number of dict items")
        return {items[i]: items[i + 1] for i in range(0, len(items), 2)}, end
    factory = _DECODERS.get(tag)
    if factory is None:
        raise EncodingError(f"unknown tag {tag!r}")
    return factory(*items), end


def decode(buf: bytes):
    """Inverse of :func:`encode`.  Lists come back as tuples."""
    value, end = _read(bytes(buf), 0)
    if end != len(buf):
        raise EncodingError("trailing bytes after value")
    return value
