"""Binary message framing shared by both transports.

Every frame is: one version byte (0x01), a 4-byte big-endian length
covering the tag and payload, the 1-byte tag, then the payload.
Payload scalars are little-endian 64-bit floats; vectors carry a
64-bit little-endian count first.  Broadcast messages are acknowledged
by echoing the tag with an empty payload.

Per-tag payloads:
  BETA_BCAST   coordinator -> worker: coefficient vector; ack back.
  DENSITY_REQ  coordinator -> worker: bandwidth (one float).
  DENSITY_RESP worker -> coordinator: density (float) + row count (u64).
  SUMMARY_REQ  coordinator -> worker: aggregated density at zero (one
               float); doubles as the broadcast of that value.
  SUMMARY_RESP worker -> coordinator: serialized shard summary.
  SHUTDOWN     coordinator -> worker: empty; ack back, then the worker
               exits.
"""

import enum
import struct

import numpy as np

VERSION = 0x01

_LEN = struct.Struct(">I")
_F64 = struct.Struct("<d")
_F64_U64 = struct.Struct("<dQ")
_U64 = struct.Struct("<Q")

# refuse to allocate for obviously corrupt lengths (128 MB cap)
_MAX_FRAME = 1 << 27


class Tag(enum.IntEnum):
    BETA_BCAST = 1
    DENSITY_REQ = 2
    DENSITY_RESP = 3
    SUMMARY_REQ = 4
    SUMMARY_RESP = 5
    SHUTDOWN = 6


def encode_frame(tag, payload=b""):
    body_len = 1 + len(payload)
    if body_len > _MAX_FRAME:
        raise ValueError(f"frame of {body_len} bytes exceeds the cap")
    return bytes([VERSION]) + _LEN.pack(body_len) + bytes([tag]) + payload


def split_frame(data):
    """Decode one complete frame held in memory."""
    if len(data) < 6:
        raise ValueError("frame shorter than the fixed header")
    if data[0] != VERSION:
        raise ValueError(f"unsupported protocol version {data[0]}")
    (body_len,) = _LEN.unpack(data[1:5])
    if body_len != len(data) - 5:
        raise ValueError("frame length field disagrees with the buffer")
    return Tag(data[5]), data[6:]


def recv_frame(sock):
    """Read one frame from a socket; respects the socket's timeout."""
    header = _recv_exact(sock, 5)
    if header[0] != VERSION:
        raise ValueError(f"unsupported protocol version {header[0]}")
    (body_len,) = _LEN.unpack(header[1:5])
    if not 1 <= body_len <= _MAX_FRAME:
        raise ValueError(f"implausible frame length {body_len}")
    body = _recv_exact(sock, body_len)
    return Tag(body[0]), body[1:]


def _recv_exact(sock, nbytes):
    chunks = []
    remaining = nbytes
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionError("peer closed the connection")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def pack_vector(vec):
    vec = np.ascontiguousarray(vec, dtype="<f8")
    return _U64.pack(vec.shape[0]) + vec.tobytes()


def unpack_vector(payload):
    if len(payload) < 8:
        raise ValueError("vector payload truncated")
    (count,) = _U64.unpack(payload[:8])
    if len(payload) != 8 + 8 * count:
        raise ValueError("vector payload length disagrees with its count")
    return np.frombuffer(payload[8:], dtype="<f8").copy()


def pack_f64(value):
    return _F64.pack(value)


def unpack_f64(payload):
    if len(payload) != 8:
        raise ValueError("expected exactly one float in the payload")
    return _F64.unpack(payload)[0]


def pack_density(density, count):
    return _F64_U64.pack(density, count)


def unpack_density(payload):
    if len(payload) != _F64_U64.size:
        raise ValueError("density payload must be one float and one count")
    return _F64_U64.unpack(payload)
