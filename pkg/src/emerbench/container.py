"""Binary signal container and CSV fallback reader.

Layout (little-endian)::

    offset  size  field
    0       4     magic  b"EMRC"
    4       2     version (uint16) = 1
    6       2     dtype tag (uint16); 1 = float32
    8       4     channel count (uint32)
    12      8     sample count (uint64)
    20      8     sample rate in Hz (float64)
    28      ...   payload: channels * samples float32, channel-major

A file whose size differs from ``28 + 4 * channels * samples`` is rejected.
"""
import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, ContainerError, IoFailure, NonFiniteSample, TruncatedPayload

MAGIC = b"EMRC"
VERSION = 1
DTYPE_F32 = 1
_HEADER = struct.Struct("<4sHHIQd")
HEADER_SIZE = _HEADER.size


@dataclass(frozen=True)
class ContainerHeader:
    channels: int
    samples: int
    sample_rate: float
    version: int = VERSION
    dtype_tag: int = DTYPE_F32

    @property
    def payload_bytes(self) -> int:
        return self.channels * self.samples * 4


def _first_nonfinite(arr):
    bad = np.argwhere(~np.isfinite(arr))
    return tuple(int(i) for i in bad[0])


def write_container(path, data, sample_rate) -> ContainerHeader:
    data = np.asarray(data)
    if data.ndim == 1:
        data = data[None, :]
    if data.ndim != 2:
        raise ContainerError(f"container payload must be 2-D, got shape {data.shape}")
    payload = np.ascontiguousarray(data, dtype="<f4")
    if not np.isfinite(payload).all():
        raise NonFiniteSample(f"refusing to write non-finite sample at {_first_nonfinite(payload)}")
    if not sample_rate > 0:
        raise ContainerError(f"sample rate must be positive, got {sample_rate}")
    header = ContainerHeader(payload.shape[0], payload.shape[1], float(sample_rate))
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, DTYPE_F32, header.channels, header.samples, header.sample_rate))
            fh.write(payload.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write container {path}: {exc}") from exc
    return header


def _parse_header(raw, path) -> ContainerHeader:
    if len(raw) < HEADER_SIZE:
        if raw[: len(MAGIC)] != MAGIC[: len(raw)]:
            raise BadMagic(f"{path}: not a signal container")
        raise TruncatedPayload(f"{path}: header truncated ({len(raw)} of {HEADER_SIZE} bytes)")
    magic, version, tag, channels, samples, rate = _HEADER.unpack(raw[:HEADER_SIZE])
    if magic != MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    if tag != DTYPE_F32:
        raise ContainerError(f"{path}: unsupported dtype tag {tag}")
    return ContainerHeader(channels, samples, rate, version, tag)


def read_header(path) -> ContainerHeader:
    with open(path, "rb") as fh:
        return _parse_header(fh.read(HEADER_SIZE), path)


def read_container(path):
    """Return ``(array, header)``; the array is float32 with shape (channels, samples)."""
    raw = Path(path).read_bytes()
    header = _parse_header(raw, path)
    got = len(raw) - HEADER_SIZE
    if got < header.payload_bytes:
        raise TruncatedPayload(f"{path}: payload has {got} bytes, header promises {header.payload_bytes}")
    if got > header.payload_bytes:
        raise ContainerError(f"{path}: {got - header.payload_bytes} trailing bytes after payload")
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE).reshape(header.channels, header.samples)
    if not np.isfinite(data).all():
        raise NonFiniteSample(f"{path}: non-finite sample at (channel, sample) {_first_nonfinite(data)}")
    return data.astype(np.float32), header


def read_csv_signal(path):
    """CSV fallback: header row of channel names, one column per channel.

    Returns ``(array, channel_names)`` with the array shaped (channels, samples).
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ContainerError(f"{path}: empty CSV")
    names = [n.strip() for n in rows[0]]
    body = [r for r in rows[1:] if r]
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=np.float64).reshape(len(body), len(names))
    except ValueError as exc:
        raise ContainerError(f"{path}: malformed CSV signal ({exc})") from exc
    if not np.isfinite(data).all():
        raise NonFiniteSample(f"{path}: non-finite sample at (row, column) {_first_nonfinite(data)}")
    return data.T.copy(), names


def load_signal(path):
    """Read either format; returns a float64 (channels, samples) array."""
    if str(path).lower().endswith(".csv"):
        return read_csv_signal(path)[0]
    return read_container(path)[0].astype(np.float64)


def signal_shape(path):
    """(channels, samples, sample_rate-or-None) without loading the payload."""
    if str(path).lower().endswith(".csv"):
        data, _ = read_csv_signal(path)
        return data.shape[0], data.shape[1], None
    h = read_header(path)
    return h.channels, h.samples, h.sample_rate
