"""Channel-permutation alignment of consecutive frames and overlap-add.

A separator gives no guarantee that a speaker stays on the same output
channel from frame to frame, so consecutive frames are aligned by
maximizing a similarity over all C! channel permutations before
resynthesis. Two modes: cross_correlation compares the frames' shared
overlap region; oracle scores each frame's channels directly against
the ground-truth sources (an upper bound for stitching quality).

Resynthesis is overlap-add with a periodic Hann window, normalized per
sample by the sum of window values that actually contributed. That
normalization makes reconstruction exact at stream edges and for any
integer W/H, where plain constant-overlap-add does not hold.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .framing import FramingConfig, frame_count
from .metrics import si_sdr
from .separators import SeparatedFrame

TIE_EPS = 1e-12

# Oracle alignment clips per-channel SI-SDR into [-1e3, 1e3] so exact
# matches (+inf) cannot mask the other channel's score in the sum.
_ORACLE_CLIP_DB = 1e3


def periodic_hann(length: int) -> np.ndarray:
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


def ncc(a, b) -> float:
    """Zero-lag normalized cross-correlation; 0 when either input is silent."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b)) / (na * nb)


def similarity(tail, head, permutation) -> float:
    """Sum over channels of ncc(tail_c, head_perm[c])."""
    tail = np.asarray(tail, dtype=np.float64)
    head = np.asarray(head, dtype=np.float64)
    return sum(ncc(tail[c], head[permutation[c]]) for c in range(tail.shape[0]))


@dataclass(frozen=True)
class PermutationDecision:
    """Chosen permutation for one frame, with all candidate scores."""

    index: int
    permutation: tuple
    scores: dict
    tie: bool


@dataclass(frozen=True)
class StitchConfig:
    framing: FramingConfig
    mode: str = "cross_correlation"
    sources: np.ndarray = None  # ground truth (C, T), oracle mode only

    def __post_init__(self):
        if self.mode not in ("cross_correlation", "oracle"):
            raise ValueError(f"unknown stitch mode {self.mode!r}")
        if self.mode == "oracle" and self.sources is None:
            raise ValueError("oracle mode requires ground-truth sources")

    def window(self) -> np.ndarray:
        return periodic_hann(self.framing.window)


def _decide(index: int, scores: dict) -> PermutationDecision:
    best = max(scores.values())
    tied = sorted(p for p, s in scores.items() if best - s <= TIE_EPS)
    identity = tuple(range(len(tied[0])))
    chosen = identity if identity in tied else tied[0]
    return PermutationDecision(index, chosen, scores, tie=len(tied) > 1)


def _truth_scores(frame: SeparatedFrame, sources: np.ndarray) -> dict:
    """Per-permutation score of a frame's channels against ground truth.

    Summed SI-SDR over channels, clipped; truth channels silent in this
    frame's range are skipped (SI-SDR is undefined there).
    """
    from .framing import extract_padded

    channels = frame.channel_count
    truth = np.stack([extract_padded(src, frame.start, frame.window) for src in sources])
    active = [c for c in range(channels) if np.any(truth[c])]
    scores = {}
    for perm in itertools.permutations(range(channels)):
        total = 0.0
        for c in active:
            estimate = frame.channels[perm[c]]
            if not np.any(estimate):
                # si_sdr scores a silent estimate +inf (zero error term),
                # which would tie the genuine match and break recovery;
                # for alignment a silent estimate of active truth is the
                # worst possible assignment.
                total -= _ORACLE_CLIP_DB
                continue
            val = si_sdr(truth[c], estimate)
            total += min(max(val, -_ORACLE_CLIP_DB), _ORACLE_CLIP_DB)
        scores[perm] = total
    return scores


def align(prev: SeparatedFrame, next_frame: SeparatedFrame, config: StitchConfig) -> PermutationDecision:
    """Pick the permutation mapping next_frame's channels into prev's order."""
    if next_frame.index != prev.index + 1:
        raise ValueError(f"frames not consecutive: {prev.index} then {next_frame.index}")
    overlap = config.framing.overlap
    if overlap <= 0:
        raise ValueError("alignment needs overlapping frames (W > H)")
    if config.mode == "oracle":
        scores = _truth_scores(next_frame, config.sources)
    else:
        tail = prev.channels[:, config.framing.hop:]
        head = next_frame.channels[:, :overlap]
        scores = {perm: similarity(tail, head, perm)
                  for perm in itertools.permutations(range(prev.channel_count))}
    return _decide(next_frame.index, scores)


def segment_overlap_add(get_channels, channel_count: int, segment: int, n_seg: int,
                        config: FramingConfig, total_samples, window: np.ndarray) -> np.ndarray:
    """Windowed combination of one length-H segment from its n_seg
    earliest covering frames.

    get_channels(i) returns frame i's aligned (C, W) array. Samples are
    normalized by the sum of contributing window values; where that sum
    is exactly zero (only possible when a sample is covered solely at
    window position 0, i.e. W == H) the plain mean of the contributing
    frames is used instead. total_samples of None means the stream end
    is not known yet and the segment is interior (full length H).
    """
    hop, width = config.hop, config.window
    start = segment * hop
    if total_samples is None:
        end = start + hop
        last = segment + n_seg
    else:
        end = min(start + hop, total_samples)
        last = min(segment + n_seg, frame_count(total_samples, config))
    length = end - start
    num = np.zeros((channel_count, length), dtype=np.float64)
    den = np.zeros(length, dtype=np.float64)
    raw_sum = np.zeros((channel_count, length), dtype=np.float64)
    for i in range(segment, last):
        # The segment sits at offset W - (i - segment + 1) * H in frame i:
        # at the right edge of its first covering frame, at the left edge
        # of its last.
        off = width - (i - segment + 1) * hop
        w = window[off:off + length]
        part = get_channels(i)[:, off:off + length]
        num += w * part
        den += w
        raw_sum += part
    zero = den == 0.0
    if zero.any():
        out = np.empty_like(num)
        keep = ~zero
        out[:, keep] = num[:, keep] / den[keep]
        out[:, zero] = raw_sum[:, zero] / (last - segment)
        return out
    return num / den


def overlap_add(aligned_frames, total_samples: int, config) -> np.ndarray:
    """Resynthesize (C, total_samples) output from aligned frames.

    config may be a StitchConfig or a bare FramingConfig. Frames must be
    the full index-ordered sequence for a total_samples-long stream.
    """
    framing = config.framing if isinstance(config, StitchConfig) else config
    frames = list(aligned_frames)
    if not frames:
        raise ValueError("no frames to overlap-add")
    expected = frame_count(total_samples, framing)
    if len(frames) != expected:
        raise ValueError(f"got {len(frames)} frames, stream of {total_samples} needs {expected}")
    for pos, frame in enumerate(frames):
        if frame.index != pos:
            raise ValueError(f"frame at position {pos} has index {frame.index}")
    window = periodic_hann(framing.window)
    channels = frames[0].channel_count
    fps = framing.frames_per_segment
    parts = [
        segment_overlap_add(lambda i: frames[i].channels, channels, k, fps,
                            framing, total_samples, window)
        for k in range(expected)
    ]
    return np.concatenate(parts, axis=1)


class PermutationTracker:
    """Running composition of per-frame alignment decisions.

    Frames go in raw and come out with channels in the stream's global
    order. In cross_correlation mode the global order is anchored on
    frame 0 as delivered and every later frame is aligned to its
    already-aligned predecessor, so one wrong decision flips every
    subsequent assignment. In oracle mode every frame (frame 0 included)
    is scored directly against the ground truth. When W == H there is
    no overlap to compare, so every frame keeps its delivered order
    (tie).
    """

    def __init__(self, config: StitchConfig):
        self.config = config
        self.decisions = []
        self._prev = None

    def align(self, frame: SeparatedFrame) -> SeparatedFrame:
        expected = 0 if self._prev is None else self._prev.index + 1
        if frame.index != expected:
            raise ValueError(f"expected frame {expected}, got {frame.index}")
        identity = tuple(range(frame.channel_count))
        if self.config.mode == "oracle":
            decision = _decide(frame.index, _truth_scores(frame, self.config.sources))
        elif self.config.framing.overlap == 0 or self._prev is None:
            decision = PermutationDecision(frame.index, identity,
                                           {identity: 0.0}, tie=frame.index > 0)
        else:
            decision = align(self._prev, frame, self.config)
        aligned = SeparatedFrame(frame.index, frame.start,
                                 frame.channels[list(decision.permutation)])
        self.decisions.append(decision)
        self._prev = aligned
        return aligned


class StreamStitcher:
    """Incremental alignment and resynthesis, bit-identical to offline.

    Frames are fed in index order; feed() returns newly finalized
    samples as a (C, m) array and finish(total_samples) flushes the
    rest.
    """

    def __init__(self, config: StitchConfig):
        self.config = config
        self._window = config.window()
        self._tracker = PermutationTracker(config)
        self._aligned = {}
        self._channels = 0
        self._count = 0
        self._emitted_segments = 0

    @property
    def decisions(self):
        return self._tracker.decisions

    def feed(self, frame: SeparatedFrame) -> np.ndarray:
        aligned = self._tracker.align(frame)
        self._aligned[frame.index] = aligned.channels
        self._channels = aligned.channel_count
        self._count += 1

        # Segment j - W/H is complete once frame j - 1 arrived, and frame
        # j's existence proves the stream extends past that segment's end,
        # so emitting it now is safe without knowing T.
        due = self._count - 1 - self.config.framing.frames_per_segment
        return self._emit_through(due, None)

    def finish(self, total_samples: int) -> np.ndarray:
        if self._count == 0:
            if total_samples:
                raise ValueError(f"no frames fed for a {total_samples}-sample stream")
            return np.zeros((0, 0), dtype=np.float64)
        framing = self.config.framing
        if self._count != frame_count(total_samples, framing):
            raise ValueError(
                f"fed {self._count} frames, stream of {total_samples} needs "
                f"{frame_count(total_samples, framing)}")
        return self._emit_through(frame_count(total_samples, framing) - 1, total_samples)

    def _emit_through(self, last_segment: int, total_samples) -> np.ndarray:
        framing = self.config.framing
        channels = self._channels
        parts = []
        while self._emitted_segments <= last_segment:
            k = self._emitted_segments
            parts.append(segment_overlap_add(self._aligned.__getitem__, channels, k,
                                             framing.frames_per_segment, framing,
                                             total_samples, self._window))
            self._aligned.pop(k, None)  # frames before the next segment are spent
            self._emitted_segments += 1
        if not parts:
            return np.zeros((channels, 0), dtype=np.float64)
        return np.concatenate(parts, axis=1)
