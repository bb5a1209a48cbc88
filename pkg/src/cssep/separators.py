"""Frame-level separator contract and deterministic reference separators.

A separator maps one length-W mixture frame to C estimate channels of
length W. The real work is meant to be done by a learned model behind
the external process adapter (see wire.py); the separators here are the
deterministic stand-ins used for pipeline validation: identity, ground
truth lookup, a seeded channel shuffler, and an ideal-ratio-mask
separator that applies oracle magnitude masks in the STFT domain.
"""

from dataclasses import dataclass

import numpy as np

from .framing import Frame, extract_padded


@dataclass(frozen=True)
class SeparatedFrame:
    """C estimate channels for one frame; channels has shape (C, W)."""

    index: int
    start: int
    channels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.channels, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"channels must be (C, W), got shape {arr.shape}")
        object.__setattr__(self, "channels", arr)

    @property
    def channel_count(self) -> int:
        return self.channels.shape[0]

    @property
    def window(self) -> int:
        return self.channels.shape[1]


class IdentitySeparator:
    """Every output channel is the mixture frame itself."""

    def __init__(self, channels: int = 2):
        self.channels = channels

    def separate(self, frame: Frame) -> SeparatedFrame:
        stacked = np.tile(frame.samples, (self.channels, 1))
        return SeparatedFrame(frame.index, frame.start, stacked)


def _slice_sources(sources: np.ndarray, frame: Frame) -> np.ndarray:
    width = len(frame.samples)
    return np.stack([extract_padded(src, frame.start, width) for src in sources])


class OracleSourceSeparator:
    """Return the ground-truth sources over the frame's sample range.

    Channel order is the fixed global order of the attached sources;
    wrap in ShuffleSeparator to emulate a separator whose per-frame
    channel assignment is arbitrary.
    """

    def __init__(self, sources: np.ndarray):
        sources = np.asarray(sources, dtype=np.float64)
        if sources.ndim != 2:
            raise ValueError(f"sources must be (C, T), got shape {sources.shape}")
        self.sources = sources
        self.channels = sources.shape[0]

    def separate(self, frame: Frame) -> SeparatedFrame:
        return SeparatedFrame(frame.index, frame.start, _slice_sources(self.sources, frame))


class ShuffleSeparator:
    """Permute the inner separator's channels with a per-frame seeded draw.

    The permutation for frame i depends only on (seed, i), so a run is
    reproducible regardless of the order frames are presented in.
    """

    def __init__(self, inner, seed: int):
        self.inner = inner
        self.seed = seed
        self.channels = inner.channels

    def permutation(self, frame_index: int) -> np.ndarray:
        rng = np.random.default_rng([self.seed, frame_index])
        return rng.permutation(self.channels)

    def separate(self, frame: Frame) -> SeparatedFrame:
        out = self.inner.separate(frame)
        return SeparatedFrame(out.index, out.start, out.channels[self.permutation(frame.index)])


@dataclass(frozen=True)
class StftConfig:
    """Analysis window and hop for the ratio-mask separator.

    The sine window sin(pi*(n+0.5)/N) is strictly positive and its
    squares sum to 1 at 50% overlap, giving perfect reconstruction for
    windows placed strictly inside the frame. Defaults are 40 ms / 20 ms
    at 8 kHz; they divide every whole-second frame length.
    """

    window: int = 320
    hop: int = 160

    def __post_init__(self):
        if not (0 < self.hop <= self.window):
            raise ValueError(f"need 0 < hop <= window, got {self}")
        if self.window % self.hop != 0:
            raise ValueError(f"stft window {self.window} not a multiple of hop {self.hop}")

    def sine_window(self) -> np.ndarray:
        n = np.arange(self.window)
        return np.sin(np.pi * (n + 0.5) / self.window)


def _stft(signal: np.ndarray, cfg: StftConfig, window: np.ndarray) -> np.ndarray:
    starts = np.arange(0, len(signal) - cfg.window + 1, cfg.hop)
    segs = np.lib.stride_tricks.sliding_window_view(signal, cfg.window)[starts]
    return np.fft.rfft(segs * window, axis=1)


def _istft(spec: np.ndarray, cfg: StftConfig, window: np.ndarray, length: int) -> np.ndarray:
    segs = np.fft.irfft(spec, n=cfg.window, axis=1)
    num = np.zeros(length, dtype=np.float64)
    den = np.zeros(length, dtype=np.float64)
    pos = 0
    for seg in segs:
        num[pos:pos + cfg.window] += window * seg
        den[pos:pos + cfg.window] += window * window
        pos += cfg.hop
    # Sine window is strictly positive, so den never vanishes. Near the
    # frame edges den is tiny and the division amplifies any mask-induced
    # leakage: frame edges are genuinely the least reliable samples.
    return num / den


class IdealRatioMaskSeparator:
    """Oracle magnitude masks applied to the mixture spectrogram.

    mask_c = |S_c| / (sum_k |S_k| + eps) from the ground-truth source
    spectra; the masked mixture is inverse-transformed with the same
    window. Output channels follow the fixed source order.
    """

    EPS = 1e-8

    def __init__(self, sources: np.ndarray, stft: StftConfig = StftConfig()):
        sources = np.asarray(sources, dtype=np.float64)
        if sources.ndim != 2:
            raise ValueError(f"sources must be (C, T), got shape {sources.shape}")
        self.sources = sources
        self.channels = sources.shape[0]
        self.stft = stft

    def masks(self, frame: Frame) -> np.ndarray:
        """(C, n_windows, n_bins) mask array for one frame."""
        width = len(frame.samples)
        if width % self.stft.window or width % self.stft.hop:
            raise ValueError(
                f"stft {self.stft.window}/{self.stft.hop} does not divide frame length {width}")
        window = self.stft.sine_window()
        mags = np.stack([
            np.abs(_stft(extract_padded(src, frame.start, width), self.stft, window))
            for src in self.sources
        ])
        return mags / (mags.sum(axis=0) + self.EPS)

    def separate(self, frame: Frame) -> SeparatedFrame:
        window = self.stft.sine_window()
        mix_spec = _stft(frame.samples, self.stft, window)
        masks = self.masks(frame)
        width = len(frame.samples)
        out = np.stack([_istft(mask * mix_spec, self.stft, window, width) for mask in masks])
        return SeparatedFrame(frame.index, frame.start, out)
