"""Constant-bitrate container for codec frames.

Layout (all multi-byte fields big-endian)::

    offset  size  field
    0       4     magic  b"PHXC"
    4       1     version (1)
    5       1     rate_mode (0: 1 code/frame, 1 kbps; 1: 6 codes/frame, 6 kbps)
    6       4     sample_rate (24000)
    10      4     frame_count
    14      ...   payload

The payload concatenates 12-bit codes, MSB first, frame by frame and
codebook by codebook within a frame, with zero bits padding the final byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    EncodeError,
    NonZeroPaddingError,
    TruncatedStreamError,
    UnsupportedRateModeError,
    UnsupportedVersionError,
)

MAGIC = b"PHXC"
VERSION = 1
HEADER = struct.Struct(">4sBBII")
HEADER_SIZE = HEADER.size
BITS = 12
HOP = 288
RATE_MODES = {0: 1, 1: 6}
_SHIFTS = np.arange(BITS - 1, -1, -1, dtype=np.uint16)


def depth_for_mode(rate_mode: int) -> int:
    try:
        return RATE_MODES[rate_mode]
    except KeyError:
        raise UnsupportedRateModeError(f"unknown rate_mode {rate_mode}") from None


def mode_for_depth(depth: int) -> int:
    for mode, d in RATE_MODES.items():
        if d == depth:
            return mode
    raise EncodeError(f"no rate mode carries {depth} codes per frame")


@dataclass(frozen=True)
class BitstreamHeader:
    rate_mode: int
    frame_count: int
    sample_rate: int = 24000
    version: int = VERSION

    @property
    def depth(self) -> int:
        return depth_for_mode(self.rate_mode)

    @property
    def payload_bits(self) -> int:
        return self.frame_count * self.depth * BITS

    def to_bytes(self) -> bytes:
        return HEADER.pack(MAGIC, self.version, self.rate_mode, self.sample_rate, self.frame_count)


@dataclass(frozen=True)
class EncodedStream:
    header: BitstreamHeader
    codes: np.ndarray  # [frame_count, depth], int

    def to_bytes(self) -> bytes:
        return pack(self.codes, self.header.rate_mode, self.header.sample_rate)

    @classmethod
    def from_bytes(cls, data: bytes) -> "EncodedStream":
        codes, header = unpack(data)
        return cls(header, codes)


def pack(codes, rate_mode: int, sample_rate: int = 24000) -> bytes:
    """Serialize ``codes[frames, depth]`` into header + packed payload."""
    if rate_mode not in RATE_MODES:
        raise EncodeError(f"unknown rate_mode {rate_mode}")
    depth = RATE_MODES[rate_mode]
    arr = np.asarray(codes)
    if arr.size == 0:
        arr = arr.reshape(0, depth)
    if arr.ndim != 2 or arr.shape[1] != depth:
        raise EncodeError(f"rate_mode {rate_mode} needs {depth} codes per frame, got shape {arr.shape}")
    if arr.dtype.kind not in "iu":
        raise EncodeError("codes must be integers")
    if arr.size and (arr.min() < 0 or arr.max() >= 1 << BITS):
        raise EncodeError(f"code outside [0, {1 << BITS})")
    bits = ((arr.astype(np.uint16).reshape(-1, 1) >> _SHIFTS) & 1).astype(np.uint8)
    payload = np.packbits(bits.reshape(-1)).tobytes()
    header = BitstreamHeader(rate_mode, arr.shape[0], sample_rate)
    return header.to_bytes() + payload


def read_header(data: bytes) -> BitstreamHeader:
    if len(data) < HEADER_SIZE:
        raise TruncatedStreamError(f"stream of {len(data)} bytes is shorter than the header")
    magic, version, mode, sr, frames = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    depth_for_mode(mode)
    return BitstreamHeader(mode, frames, sr, version)


def unpack(data: bytes):
    """Inverse of :func:`pack`: returns ``(codes[frames, depth], header)``."""
    header = read_header(data)
    nbits = header.payload_bits
    expected = -(-nbits // 8)
    payload = np.frombuffer(data, dtype=np.uint8, offset=HEADER_SIZE)
    if payload.size != expected:
        raise TruncatedStreamError(f"payload is {payload.size} bytes, header implies {expected}")
    bits = np.unpackbits(payload)
    if bits[nbits:].any():
        raise NonZeroPaddingError("non-zero padding bits at end of stream")
    groups = bits[:nbits].reshape(-1, BITS).astype(np.int64)
    values = groups @ (1 << _SHIFTS.astype(np.int64))
    return values.reshape(header.frame_count, header.depth), header


def measured_bitrate(stream, include_header: bool = False) -> float:
    """Payload bits per second of audio; optionally amortizing the header."""
    header = stream.header if isinstance(stream, EncodedStream) else read_header(stream)
    if header.frame_count <= 0:
        raise ValueError("bitrate undefined for an empty stream")
    bits = header.payload_bits + (HEADER_SIZE * 8 if include_header else 0)
    # Integer numerator and denominator: exact whenever the true rate is representable.
    return bits * header.sample_rate / (header.frame_count * HOP)
