"""Learned frame separator behind the CSS1 wire protocol.

The package is deliberately standalone: it talks to the host pipeline
only through stdin/stdout bytes, so it shares no code with it. The
model is a small masking network (encoder, dual-path masker, decoder)
sized for desk-scale experiments, not production separation quality.
"""

from .model import MaskNet, ModelConfig
from .protocol import serve

__all__ = ["MaskNet", "ModelConfig", "serve"]
