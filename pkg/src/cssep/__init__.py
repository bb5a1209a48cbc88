"""Streaming continuous speech separation toolkit.

Turns any frame-level source separator into an online, fixed-latency
two-channel stream separator: overlapped framing, channel-permutation
stitching, windowed overlap-add resynthesis, and a segment emission
scheduler with explicit latency and compute accounting. Ships synthetic
conversation generation and SI-SDR evaluation so the window/hop/latency
trade-off can be studied end to end without external data.
"""

from .audio import AudioBuffer, read_wav, write_wav, apply_gain, mix, db_to_linear
from .framing import FramingConfig, Frame, frame_count, frames, frames_iter, StreamFramer
from .separators import (
    SeparatedFrame,
    IdentitySeparator,
    OracleSourceSeparator,
    ShuffleSeparator,
    IdealRatioMaskSeparator,
    StftConfig,
)
from .stitching import StitchConfig, PermutationDecision, ncc, similarity, align, overlap_add, StreamStitcher
from .scheduling import StreamSchedule, CostModel, min_latency, total_latency, predict_cost, SegmentEmitter
from .metrics import si_sdr, pit_si_sdr, si_sdr_improvement, aggregate, SISDRResult, EvalReport
from .mixgen import MixtureSpec, UtterancePool, ConversationManifest, synth_utterance, build_conversation, overlap_ratio

__version__ = "0.1.0"
