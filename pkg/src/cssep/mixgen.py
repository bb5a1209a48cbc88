"""Synthetic two-speaker conversations with controlled overlap ratio.

Conversations alternate utterances between two speakers. For a 0%
overlap target every utterance starts 50 ms after the previous one
ends; for positive targets each utterance is pulled left over the tail
of the previous one by the amount that drives the running overlap ratio
to the target (clamped so no utterance ever overlaps its own speaker).
Drawing continues until the conversation is at least 15 s long and the
realized ratio is inside tolerance. A 100% target is built from
cross-speaker pairs cut to equal length and placed back to back, which
makes the realized ratio exactly 1.

Utterances are deterministic speech-like signals (seeded pitch-modulated
harmonic series plus band-limited noise bursts, both under a syllabic
amplitude envelope), standing in for real recordings so everything here
is reproducible byte for byte from (pools, spec).
"""

from dataclasses import dataclass, replace

import numpy as np

from .audio import AudioBuffer, db_to_linear


class InfeasibleTargetError(ValueError):
    """The utterance pool ran out before the target ratio was reached."""

    def __init__(self, message, realized):
        super().__init__(message)
        self.realized = realized


@dataclass(frozen=True)
class MixtureSpec:
    """Generation parameters for one conversation."""

    target_overlap: float
    seed: int
    sample_rate: int = 8000
    min_length_seconds: float = 15.0
    pause_seconds: float = 0.050
    gain_db_range: tuple = (-33.0, -25.0)
    # Per-conversation stopping tolerance; tighter than the +/-2 point
    # guarantee so realized ratios sit comfortably inside it.
    ratio_tolerance: float = 0.015

    def __post_init__(self):
        if not 0.0 <= self.target_overlap <= 1.0:
            raise ValueError(f"overlap target {self.target_overlap} outside [0, 1]")
        if self.gain_db_range[0] > self.gain_db_range[1]:
            raise ValueError(f"bad gain range {self.gain_db_range}")
        if self.min_length_seconds <= 0 or self.pause_seconds < 0:
            raise ValueError("bad length/pause settings")


@dataclass(frozen=True)
class UtteranceDraw:
    length_samples: int
    seed: int


@dataclass(frozen=True)
class UtterancePool:
    """Pre-drawn utterance descriptors for one speaker."""

    speaker: int
    draws: tuple

    @classmethod
    def draw(cls, speaker: int, rng, count: int, sample_rate: int = 8000,
             duration_range=(2.0, 5.0)):
        lo = int(round(duration_range[0] * sample_rate))
        hi = int(round(duration_range[1] * sample_rate))
        lengths = rng.integers(lo, hi + 1, size=count)
        seeds = rng.integers(0, 2 ** 63, size=count)
        return cls(speaker, tuple(UtteranceDraw(int(n), int(s))
                                  for n, s in zip(lengths, seeds)))


@dataclass(frozen=True)
class UtteranceRecord:
    speaker: int
    onset_sample: int
    length_samples: int
    gain_db: float
    seed: int


@dataclass(frozen=True)
class ConversationManifest:
    id: str
    sample_rate: int
    duration_samples: int
    target_overlap: float
    realized_overlap: float
    utterances: tuple

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "sr": self.sample_rate,
            "duration_samples": self.duration_samples,
            "target_overlap": self.target_overlap,
            "realized_overlap": self.realized_overlap,
            "utterances": [
                {"speaker": u.speaker, "onset_sample": u.onset_sample,
                 "length_samples": u.length_samples, "gain_db": u.gain_db,
                 "seed": u.seed}
                for u in self.utterances
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict):
        utts = tuple(UtteranceRecord(u["speaker"], u["onset_sample"], u["length_samples"],
                                     u["gain_db"], u["seed"])
                     for u in doc["utterances"])
        return cls(doc["id"], doc["sr"], doc["duration_samples"], doc["target_overlap"],
                   doc["realized_overlap"], utts)


@dataclass(frozen=True)
class Conversation:
    mixture: AudioBuffer
    sources: np.ndarray   # (2, T) clean per-speaker streams
    manifest: ConversationManifest


def synth_utterance(duration_seconds: float, seed, sample_rate: int = 8000) -> AudioBuffer:
    """Deterministic speech-like signal of the requested duration.

    A pitch-modulated harmonic series and a band of noise bursts, both
    amplitude-modulated at a syllabic rate around 4 Hz. Not speech, but
    broadband, nonstationary, and mutually near-orthogonal across seeds,
    which is all the pipeline math cares about.
    """
    if not 0.5 <= duration_seconds <= 10.0:
        raise ValueError(f"utterance duration {duration_seconds} s outside [0.5, 10]")
    rng = np.random.default_rng(seed)
    n = int(round(duration_seconds * sample_rate))
    t = np.arange(n) / sample_rate

    f0 = rng.uniform(85.0, 255.0)
    drift = 1.0 + 0.06 * np.sin(2.0 * np.pi * rng.uniform(0.3, 1.2) * t + rng.uniform(0, 2 * np.pi))
    phase = 2.0 * np.pi * np.cumsum(f0 * drift) / sample_rate
    harmonics = min(int(3400.0 / f0), 16)
    rolloff = rng.uniform(0.8, 1.4)
    voiced = np.zeros(n)
    for k in range(1, harmonics + 1):
        voiced += k ** -rolloff * np.sin(k * phase + rng.uniform(0, 2 * np.pi))

    syllable_rate = rng.uniform(3.0, 5.0)
    env = 0.15 + 0.85 * (0.5 + 0.5 * np.sin(2.0 * np.pi * syllable_rate * t
                                            + rng.uniform(0, 2 * np.pi))) ** rng.uniform(1.0, 2.0)

    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spec[(freqs < 1500.0) | (freqs > 3800.0)] = 0.0
    noise = np.fft.irfft(spec, n=n)
    noise *= rng.uniform(0.15, 0.35) * (np.std(voiced) / max(np.std(noise), 1e-30))
    burst = (0.5 + 0.5 * np.sin(2.0 * np.pi * syllable_rate * t
                                + rng.uniform(0, 2 * np.pi))) ** 2

    x = env * voiced + burst * noise
    x *= 0.9 / np.max(np.abs(x))
    # The interval-vs-activity-mask overlap identity needs every sample of
    # an utterance to be strictly nonzero.
    x[x == 0.0] = 1e-12
    return AudioBuffer(x, sample_rate)


def _take(pool: UtterancePool, cursor: list, realized: float):
    if cursor[0] >= len(pool.draws):
        raise InfeasibleTargetError(
            f"utterance pool for speaker {pool.speaker} exhausted; realized overlap "
            f"{realized:.4f}", realized)
    draw = pool.draws[cursor[0]]
    cursor[0] += 1
    return draw


def _place_sparse(pools, spec: MixtureSpec) -> list:
    rng = np.random.default_rng([spec.seed, 0])
    pause = int(round(spec.pause_seconds * spec.sample_rate))
    min_len = int(round(spec.min_length_seconds * spec.sample_rate))
    target = spec.target_overlap
    cursors = [[0], [0]]
    records = []
    end = 0          # current conversation end
    overlapped = 0   # total overlapped samples so far
    prev_len = prev_shift = 0
    turn = 0
    while True:
        ratio = overlapped / end if end else 0.0
        draw = _take(pools[turn % 2], cursors[turn % 2], ratio)
        length = draw.length_samples
        gain = float(rng.uniform(*spec.gain_db_range))
        if turn == 0 or target == 0.0:
            shift = 0
        else:
            # Exact solve of (overlapped + s) / (end + length - s) = target,
            # clamped so the new utterance stays off its own speaker's turf
            # (at most the solo tail of the previous utterance).
            wanted = (target * (end + length) - overlapped) / (1.0 + target)
            shift = int(min(max(wanted, 0.0), min(length, prev_len - prev_shift)))
        onset = 0 if turn == 0 else (end + pause if shift == 0 else end - shift)
        records.append(UtteranceRecord(pools[turn % 2].speaker, onset, length, gain, draw.seed))
        overlapped += shift
        end = onset + length
        prev_len, prev_shift = length, shift
        turn += 1
        if end >= min_len and abs(overlapped / end - target) <= spec.ratio_tolerance:
            return records


def _place_paired(pools, spec: MixtureSpec) -> list:
    rng = np.random.default_rng([spec.seed, 0])
    min_len = int(round(spec.min_length_seconds * spec.sample_rate))
    cursors = [[0], [0]]
    records = []
    end = 0
    while end < min_len:
        a = _take(pools[0], cursors[0], 1.0)
        b = _take(pools[1], cursors[1], 1.0)
        length = min(a.length_samples, b.length_samples)  # cut the pair to equal length
        for pool, draw in ((pools[0], a), (pools[1], b)):
            gain = float(rng.uniform(*spec.gain_db_range))
            records.append(UtteranceRecord(pool.speaker, end, length, gain, draw.seed))
        end += length
    return records


def render_manifest(manifest: ConversationManifest) -> "Conversation":
    """Synthesize the waveforms a manifest describes, byte-reproducibly."""
    sr = manifest.sample_rate
    sources = np.zeros((2, manifest.duration_samples), dtype=np.float64)
    for rec in manifest.utterances:
        utt = synth_utterance(rec.length_samples / sr, rec.seed, sr).mono
        sources[rec.speaker, rec.onset_sample:rec.onset_sample + rec.length_samples] += \
            db_to_linear(rec.gain_db) * utt
    mixture = AudioBuffer(sources[0] + sources[1], sr)
    return Conversation(mixture=mixture, sources=sources, manifest=manifest)


def build_conversation(pools, spec: MixtureSpec, conversation_id: str = "conv") -> Conversation:
    """Generate one conversation from two speakers' pools.

    The mixture is the exact float64 sum of the two clean streams. The
    manifest alone is enough to regenerate all three signals.
    """
    if len(pools) != 2 or pools[0].speaker == pools[1].speaker:
        raise ValueError("need pools for two distinct speakers")
    if spec.target_overlap == 1.0:
        records = _place_paired(pools, spec)
    else:
        records = _place_sparse(pools, spec)
    duration = max(r.onset_sample + r.length_samples for r in records)
    manifest = ConversationManifest(
        id=conversation_id, sample_rate=spec.sample_rate, duration_samples=duration,
        target_overlap=spec.target_overlap, realized_overlap=0.0, utterances=tuple(records))
    manifest = replace(manifest, realized_overlap=overlap_ratio(manifest))
    return render_manifest(manifest)


def build_overlapped_pair(pools, spec: MixtureSpec, min_overlap: float = 0.8,
                          conversation_id: str = "pair") -> Conversation:
    """One fully-overlapped utterance pair with an overlap-ratio floor.

    Both utterances start at sample 0; if their lengths alone would put
    the ratio under the floor, the longer one is cut just enough to meet
    it. target_overlap in the manifest records the realized ratio.
    """
    if not 0.0 < min_overlap <= 1.0:
        raise ValueError(f"overlap floor {min_overlap} outside (0, 1]")
    rng = np.random.default_rng([spec.seed, 0])
    a, b = pools[0].draws[0], pools[1].draws[0]
    lengths = [a.length_samples, b.length_samples]
    longer = int(lengths[1] > lengths[0])
    cap = int(lengths[1 - longer] / min_overlap)
    lengths[longer] = min(lengths[longer], cap)
    records = []
    for pool, draw, length in ((pools[0], a, lengths[0]), (pools[1], b, lengths[1])):
        gain = float(rng.uniform(*spec.gain_db_range))
        records.append(UtteranceRecord(pool.speaker, 0, length, gain, draw.seed))
    duration = max(lengths)
    manifest = ConversationManifest(
        id=conversation_id, sample_rate=spec.sample_rate, duration_samples=duration,
        target_overlap=min(lengths) / duration, realized_overlap=min(lengths) / duration,
        utterances=tuple(records))
    return render_manifest(manifest)


def _speaker_intervals(manifest: ConversationManifest, speaker: int) -> list:
    spans = sorted((u.onset_sample, u.onset_sample + u.length_samples)
                   for u in manifest.utterances if u.speaker == speaker)
    merged = []
    for lo, hi in spans:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return merged


def overlap_ratio(manifest: ConversationManifest) -> float:
    """Fraction of the conversation during which both speakers are active."""
    speakers = sorted({u.speaker for u in manifest.utterances})
    if len(speakers) < 2:
        return 0.0
    first = _speaker_intervals(manifest, speakers[0])
    second = _speaker_intervals(manifest, speakers[1])
    both = 0
    i = j = 0
    while i < len(first) and j < len(second):
        lo = max(first[i][0], second[j][0])
        hi = min(first[i][1], second[j][1])
        if lo < hi:
            both += hi - lo
        if first[i][1] <= second[j][1]:
            i += 1
        else:
            j += 1
    return both / manifest.duration_samples


def activity_overlap_ratio(sources: np.ndarray) -> float:
    """Overlap ratio measured from the clean streams' activity masks."""
    active = np.abs(np.asarray(sources)) > 0.0
    return float(np.count_nonzero(active[0] & active[1]) / sources.shape[1])
