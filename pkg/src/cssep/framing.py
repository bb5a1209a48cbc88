"""Split a stream into I = ceil(T/H) overlapped frames of length W, hop H.

Frame i starts at i*H - (W - H), so its final H samples are exactly the
stream segment [i*H, (i+1)*H). That alignment puts the newest segment at
the right edge of the newest frame, which is what lets the scheduler
emit segment i as soon as frame i has been processed. Samples outside
[0, T) are zero: the stream is padded with W - H zeros on the left, and
the last frame is right-padded.
"""

from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer


@dataclass(frozen=True)
class FramingConfig:
    """Window and hop sizes in samples.

    W must be an integer multiple of H so that every interior segment of
    length H lies in exactly W/H consecutive frames.
    """

    window: int
    hop: int

    def __post_init__(self):
        if not (0 < self.hop <= self.window):
            raise ValueError(f"need 0 < hop <= window, got hop={self.hop} window={self.window}")
        if self.window % self.hop != 0:
            raise ValueError(f"window {self.window} is not a multiple of hop {self.hop}")

    @property
    def overlap(self) -> int:
        """Samples shared by consecutive frames, W - H."""
        return self.window - self.hop

    @property
    def frames_per_segment(self) -> int:
        """Number of consecutive frames containing any interior segment, W/H."""
        return self.window // self.hop


@dataclass(frozen=True)
class Frame:
    """One length-W excerpt. start may be negative under left padding."""

    index: int
    start: int
    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"frame samples must be 1-D, got shape {arr.shape}")
        object.__setattr__(self, "samples", arr)


def frame_count(total_samples: int, config: FramingConfig) -> int:
    """ceil(T/H): frames needed to cover a T-sample stream."""
    if total_samples <= 0:
        raise ValueError(f"stream must be non-empty, got T={total_samples}")
    return -(-total_samples // config.hop)


def extract_padded(signal: np.ndarray, start: int, length: int) -> np.ndarray:
    """Copy signal[start:start+length], zero-filling outside [0, len(signal))."""
    out = np.zeros(length, dtype=np.float64)
    lo = max(start, 0)
    hi = min(start + length, len(signal))
    if lo < hi:
        out[lo - start:hi - start] = signal[lo:hi]
    return out


def frame_start(index: int, config: FramingConfig) -> int:
    return index * config.hop - config.overlap


def frames_iter(stream: AudioBuffer, config: FramingConfig):
    """Lazily yield the frames of a mono stream (see frames)."""
    if stream.channels != 1:
        raise ValueError(f"framing requires mono input, got {stream.channels} channels")
    signal = stream.mono
    for i in range(frame_count(stream.num_samples, config)):
        start = frame_start(i, config)
        yield Frame(i, start, extract_padded(signal, start, config.window))


def frames(stream: AudioBuffer, config: FramingConfig) -> list:
    """All frames of a mono stream, eagerly."""
    return list(frames_iter(stream, config))


class StreamFramer:
    """Incremental framing; output is bit-identical to frames().

    Frame i is emitted as soon as sample (i+1)*H - 1 arrives. finish()
    flushes the zero-padded tail frames once the stream ends.
    """

    def __init__(self, config: FramingConfig):
        self.config = config
        self._buf = np.zeros(0, dtype=np.float64)
        self._base = 0       # absolute position of _buf[0]
        self._received = 0
        self._next = 0       # next frame index to emit
        self._finished = False

    def push(self, chunk) -> list:
        if self._finished:
            raise ValueError("push after finish")
        chunk = np.asarray(chunk, dtype=np.float64).reshape(-1)
        if chunk.size:
            self._buf = np.concatenate([self._buf, chunk])
            self._received += chunk.size
        cfg = self.config
        out = []
        while self._received >= (self._next + 1) * cfg.hop:
            out.append(self._take(self._next))
            self._next += 1
        self._trim()
        return out

    def finish(self) -> list:
        if self._finished:
            raise ValueError("finish called twice")
        self._finished = True
        if self._received == 0:
            raise ValueError("stream must be non-empty")
        total = frame_count(self._received, self.config)
        out = [self._take(i) for i in range(self._next, total)]
        self._next = total
        self._buf = np.zeros(0, dtype=np.float64)
        return out

    def _take(self, index: int) -> Frame:
        start = frame_start(index, self.config)
        # Positions before _base were trimmed but are only ever left padding
        # or already-emitted history outside this frame.
        rel = start - self._base
        out = np.zeros(self.config.window, dtype=np.float64)
        lo = max(rel, 0)
        hi = min(rel + self.config.window, self._buf.size)
        if lo < hi:
            out[lo - rel:hi - rel] = self._buf[lo:hi]
        return Frame(index, start, out)

    def _trim(self):
        # Keep only samples that the next frame can still reach.
        keep_from = frame_start(self._next, self.config)
        drop = max(0, min(keep_from - self._base, self._buf.size))
        if drop:
            self._buf = self._buf[drop:].copy()
            self._base += drop
