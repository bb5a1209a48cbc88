"""Offline-to-online conversion: early segment emission and accounting.

Offline, a length-H segment is not final until all W/H frames covering
it have been processed, so the algorithmic latency equals the window
length. Online, segment k is emitted as soon as its n_seg earliest
covering frames are committed, i.e. right after frame k + n_seg - 1,
which is right after input sample (k + n_seg) * H arrives. That cuts
the minimum latency to n_seg * H / sr at the price of combining fewer
estimates per sample. n_seg = W/H reproduces the offline output bit
for bit; n_seg = 1 uses only the right-edge position of the newest
frame, the least reliable estimate.

Also here: the linear per-window compute/memory cost model used to
annotate sweeps.
"""

from dataclasses import dataclass

import numpy as np

from .framing import FramingConfig, frame_count
from .separators import SeparatedFrame
from .stitching import periodic_hann, segment_overlap_add


def _check_n_seg(n_seg: int, config: FramingConfig):
    if not (1 <= n_seg <= config.frames_per_segment):
        raise ValueError(
            f"n_seg must be in [1, {config.frames_per_segment}] for W={config.window} "
            f"H={config.hop}, got {n_seg}")


def min_latency(config: FramingConfig, n_seg: int, sample_rate: int) -> float:
    """Algorithmic minimum latency n_seg * H / sr, in seconds."""
    _check_n_seg(n_seg, config)
    return n_seg * config.hop / sample_rate


@dataclass(frozen=True)
class StreamSchedule:
    """Latency accounting for one pipeline configuration.

    n_seg of None means offline operation: every segment waits for all
    of its covering frames, and the algorithmic latency is the window
    length itself.
    """

    window_seconds: float
    hop_seconds: float
    n_seg: int = None
    processing_seconds: float = 0.0

    def __post_init__(self):
        if self.processing_seconds < 0:
            raise ValueError("processing time cannot be negative")
        if self.hop_seconds <= 0 or self.window_seconds < self.hop_seconds:
            raise ValueError(f"bad window/hop {self.window_seconds}/{self.hop_seconds}")
        ratio = self.window_seconds / self.hop_seconds
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError(
                f"window {self.window_seconds} s is not a multiple of hop {self.hop_seconds} s")
        if self.n_seg is not None:
            if not 1 <= self.n_seg <= round(ratio):
                raise ValueError(f"n_seg {self.n_seg} outside [1, {round(ratio)}]")

    @property
    def algorithmic_latency(self) -> float:
        if self.n_seg is None:
            return self.window_seconds
        return self.n_seg * self.hop_seconds


def total_latency(schedule: StreamSchedule) -> float:
    """Algorithmic latency plus per-frame processing time, in seconds."""
    return schedule.algorithmic_latency + schedule.processing_seconds


@dataclass(frozen=True)
class CostModel:
    """Linear compute/memory growth in window length.

    Defaults are least-squares calibrations against the measured
    reference separator footprint; memory is fitted with the intercept
    clamped at zero since a negative standing allocation is meaningless.
    """

    flops_per_window_second: float = 25.4e9
    memory_base_bytes: float = 0.0
    memory_bytes_per_window_second: float = 53.77e9 / 134.0

    def __post_init__(self):
        if min(self.flops_per_window_second, self.memory_base_bytes,
               self.memory_bytes_per_window_second) < 0:
            raise ValueError("cost coefficients must be nonnegative")


def predict_cost(window_seconds: float, model: CostModel = CostModel()):
    """(FLOPs per hop, peak memory bytes) for a given window length."""
    if window_seconds <= 0:
        raise ValueError(f"window must be positive, got {window_seconds}")
    flops = model.flops_per_window_second * window_seconds
    memory = model.memory_base_bytes + model.memory_bytes_per_window_second * window_seconds
    return flops, memory


@dataclass(frozen=True)
class SegmentEmission:
    """One emitted segment: samples plus its availability timestamp.

    available_samples is the number of input samples that had to arrive
    before this segment could be emitted: (k + n_seg) * H, capped at the
    stream length for the tail segments flushed at end of stream.
    """

    segment_index: int
    start_sample: int
    samples: np.ndarray
    available_samples: int

    @property
    def end_sample(self) -> int:
        return self.start_sample + self.samples.shape[1]


class SegmentEmitter:
    """Emit segments from the n_seg earliest covering frames.

    Aligned frames are fed in index order; segment k comes out
    immediately after frame k + n_seg - 1. Emitted samples are never
    revised. With n_seg = W/H the concatenated emissions are
    bit-identical to the offline stitcher output.
    """

    def __init__(self, config: FramingConfig, n_seg: int, total_samples: int,
                 channels: int = 2):
        _check_n_seg(n_seg, config)
        self.config = config
        self.n_seg = n_seg
        self.total_samples = total_samples
        self.channels = channels
        self.segments = frame_count(total_samples, config)
        self._window = periodic_hann(config.window)
        self._frames = {}
        self._next_frame = 0
        self._emitted = 0

    def feed(self, frame: SeparatedFrame) -> list:
        if frame.index != self._next_frame:
            raise ValueError(f"expected frame {self._next_frame}, got {frame.index}")
        if frame.index >= self.segments:
            raise ValueError(f"frame {frame.index} beyond a {self.total_samples}-sample stream")
        self._frames[frame.index] = np.asarray(frame.channels, dtype=np.float64)
        self._next_frame += 1
        due = frame.index - self.n_seg + 1
        return self._emit_through(due)

    def finish(self) -> list:
        if self._next_frame != self.segments:
            raise ValueError(f"fed {self._next_frame} frames, expected {self.segments}")
        return self._emit_through(self.segments - 1)

    def _emit_through(self, last_segment: int) -> list:
        out = []
        while self._emitted <= min(last_segment, self.segments - 1):
            k = self._emitted
            samples = segment_overlap_add(self._frames.__getitem__, self.channels, k,
                                          self.n_seg, self.config, self.total_samples,
                                          self._window)
            available = min((k + self.n_seg) * self.config.hop, self.total_samples)
            out.append(SegmentEmission(k, k * self.config.hop, samples, available))
            self._frames.pop(k, None)
            self._emitted += 1
        return out

