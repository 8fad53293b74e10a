"""Low-level helpers and error types shared by the binary file formats
(feature cache and model checkpoint). All multi-byte fields are
little-endian."""

from __future__ import annotations

import os
import struct
import tempfile

__all__ = [
    "BinaryFormatError",
    "BadMagicError",
    "BadVersionError",
    "TruncatedPayloadError",
    "Reader",
    "atomic_write",
]


class BinaryFormatError(ValueError):
    """Base for malformed binary payloads."""


class BadMagicError(BinaryFormatError):
    """The payload does not start with the expected magic bytes."""


class BadVersionError(BinaryFormatError):
    """The payload declares an unsupported format version."""


class TruncatedPayloadError(BinaryFormatError):
    """The payload ends before the declared content."""


class Reader:
    """Sequential reader over a bytes buffer that raises
    TruncatedPayloadError instead of returning short reads."""

    def __init__(self, buf: bytes, what: str):
        self.buf = buf
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedPayloadError(
                f"{self.what}: needed {n} bytes at offset {self.pos}, have {len(self.buf) - self.pos}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def expect_magic(self, magic: bytes) -> None:
        got = self.take(len(magic))
        if got != magic:
            raise BadMagicError(f"{self.what}: bad magic {got!r}, expected {magic!r}")

    def expect_version(self, version: int) -> None:
        got = self.u16()
        if got != version:
            raise BadVersionError(f"{self.what}: unsupported version {got}, expected {version}")

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise BinaryFormatError(f"{self.what}: {len(self.buf) - self.pos} trailing bytes")


def atomic_write(path, data: bytes) -> None:
    """Write bytes to a temp file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
