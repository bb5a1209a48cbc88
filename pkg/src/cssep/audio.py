"""Sample-domain primitives: buffers, WAV file I/O, gain, and mixing.

Audio is held internally as float64 so long overlap-add accumulations do
not pick up rounding noise. Files are written as 32-bit float PCM, so a
write/read round trip is exact for any buffer whose values are float32
representable. 16-bit integer PCM is readable (normalized by 32768).
"""

import struct
from dataclasses import dataclass

import numpy as np


class WavError(Exception):
    """Base class for WAV parsing and encoding failures."""


class UnsupportedEncodingError(WavError):
    """The file is a structurally valid WAV we do not decode."""


class MalformedWavError(WavError):
    """The file is not a structurally valid WAV."""


@dataclass(frozen=True)
class AudioBuffer:
    """Immutable multi-channel sample block.

    samples has shape (channels, n) and dtype float64. Nominal range is
    [-1, 1] but values outside it are legal: nothing in the pipeline
    clips, and evaluation is scale-invariant.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ValueError(f"samples must be 1-D or (channels, n), got shape {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        if not (isinstance(self.sample_rate, (int, np.integer)) and self.sample_rate > 0):
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_seconds(self) -> float:
        return self.num_samples / self.sample_rate

    @property
    def mono(self) -> np.ndarray:
        """The single channel of a mono buffer."""
        if self.channels != 1:
            raise ValueError(f"expected mono buffer, got {self.channels} channels")
        return self.samples[0]


# WAV format tags we decode.
_TAG_PCM = 1
_TAG_FLOAT = 3


def read_wav(path) -> AudioBuffer:
    """Read a PCM WAV file (16-bit int or 32-bit float, little-endian).

    Integer samples are normalized by 32768. Raises FileNotFoundError,
    UnsupportedEncodingError, or MalformedWavError; the three failure
    modes are distinct by design.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise MalformedWavError(f"{path}: too short to be a WAV file ({len(data)} bytes)")
    if data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWavError(f"{path}: missing RIFF/WAVE signature")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + chunk_size]
        if len(body) < chunk_size:
            raise MalformedWavError(f"{path}: truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise MalformedWavError(f"{path}: fmt chunk too small ({chunk_size} bytes)")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            payload = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None:
        raise MalformedWavError(f"{path}: no fmt chunk")
    if payload is None:
        raise MalformedWavError(f"{path}: no data chunk")

    tag, channels, sample_rate, _byte_rate, block_align, bits = fmt
    if channels < 1:
        raise MalformedWavError(f"{path}: channel count {channels}")
    if sample_rate < 1:
        raise MalformedWavError(f"{path}: sample rate {sample_rate}")
    if tag == _TAG_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == _TAG_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedEncodingError(f"{path}: format tag {tag} at {bits} bits is not supported")

    frame_bytes = channels * dtype.itemsize
    if block_align not in (0, frame_bytes):
        raise MalformedWavError(f"{path}: block align {block_align} inconsistent with format")
    if len(payload) % frame_bytes != 0:
        raise MalformedWavError(f"{path}: data size {len(payload)} not a whole number of frames")

    flat = np.frombuffer(payload, dtype=dtype).astype(np.float64) * scale
    samples = flat.reshape(-1, channels).T  # de-interleave
    return AudioBuffer(samples, int(sample_rate))


def write_wav(buffer: AudioBuffer, path) -> None:
    """Write a buffer as 32-bit float PCM WAV; read_wav inverts it exactly."""
    interleaved = np.ascontiguousarray(buffer.samples.T, dtype="<f4").tobytes()
    fmt_body = struct.pack(
        "<HHIIHH",
        _TAG_FLOAT,
        buffer.channels,
        buffer.sample_rate,
        buffer.sample_rate * buffer.channels * 4,
        buffer.channels * 4,
        32,
    )
    fact_body = struct.pack("<I", buffer.num_samples)
    chunks = b"".join([
        b"WAVE",
        b"fmt ", struct.pack("<I", len(fmt_body)), fmt_body,
        b"fact", struct.pack("<I", len(fact_body)), fact_body,
        b"data", struct.pack("<I", len(interleaved)), interleaved,
    ])
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(chunks)) + chunks)


def db_to_linear(db: float) -> float:
    """Convert decibels to a linear amplitude factor 10^(db/20)."""
    factor = 10.0 ** (float(db) / 20.0)
    if not np.isfinite(factor) or factor <= 0.0:
        raise ValueError(f"gain {db} dB has no finite positive linear factor")
    return factor


def apply_gain(buffer: AudioBuffer, gain_db: float) -> AudioBuffer:
    return AudioBuffer(buffer.samples * db_to_linear(gain_db), buffer.sample_rate)


def mix(sources) -> AudioBuffer:
    """Sum mono sources at per-source sample offsets.

    sources is a sequence of (AudioBuffer, offset) pairs. The output is
    mono with length max(offset + length); regions covered by no source
    are zero. No clipping is applied.
    """
    sources = list(sources)
    if not sources:
        raise ValueError("mix requires at least one source")
    rates = {buf.sample_rate for buf, _ in sources}
    if len(rates) != 1:
        raise ValueError(f"mixed sample rates {sorted(rates)}")
    for buf, offset in sources:
        if buf.channels != 1:
            raise ValueError("mix takes mono sources")
        if offset < 0:
            raise ValueError(f"negative offset {offset}")
    total = max(offset + buf.num_samples for buf, offset in sources)
    out = np.zeros(total, dtype=np.float64)
    for buf, offset in sources:
        out[offset:offset + buf.num_samples] += buf.mono
    return AudioBuffer(out, sources[0][0].sample_rate)
