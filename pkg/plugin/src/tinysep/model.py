"""Masking separator: encoder, chunked dual-path masker, decoder.

The layout follows the usual learned-masking recipe: a strided Conv1d
maps the waveform into a latent sequence, a masker built from
intra-chunk and inter-chunk recurrences produces one sigmoid mask per
output channel, and a transposed convolution turns each masked latent
back into a waveform. Everything is sized to train on a CPU in well
under a minute.
"""

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn


@dataclass(frozen=True)
class ModelConfig:
    sample_rate: int = 8000
    window: int = 2048
    channels: int = 2
    latent_dim: int = 64
    hidden: int = 32
    chunk: int = 32
    blocks: int = 2
    kernel: int = 16
    stride: int = 8

    def __post_init__(self):
        if self.window % self.stride != 0:
            raise ValueError("window must be a multiple of the encoder stride")
        if self.kernel != 2 * self.stride:
            raise ValueError("kernel must be twice the stride")


class DualPathBlock(nn.Module):
    """One pass of within-chunk then across-chunk recurrence."""

    def __init__(self, dim: int, hidden: int, chunk: int):
        super().__init__()
        self.chunk = chunk
        self.intra = nn.LSTM(dim, hidden, batch_first=True, bidirectional=True)
        self.intra_proj = nn.Linear(2 * hidden, dim)
        self.intra_norm = nn.LayerNorm(dim)
        self.inter = nn.LSTM(dim, hidden, batch_first=True)
        self.inter_proj = nn.Linear(hidden, dim)
        self.inter_norm = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (batch, steps, dim), steps divisible by chunk
        b, n, d = x.shape
        s = n // self.chunk
        y = x.reshape(b * s, self.chunk, d)
        out, _ = self.intra(y)
        y = self.intra_norm(y + self.intra_proj(out))
        y = y.reshape(b, s, self.chunk, d).transpose(1, 2).reshape(b * self.chunk, s, d)
        out, _ = self.inter(y)
        y = self.inter_norm(y + self.inter_proj(out))
        return y.reshape(b, self.chunk, s, d).transpose(1, 2).reshape(b, n, d)


class MaskNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c = config
        pad = c.kernel // 4
        self.encoder = nn.Conv1d(1, c.latent_dim, c.kernel, stride=c.stride, padding=pad)
        self.masker = nn.Sequential(
            *[DualPathBlock(c.latent_dim, c.hidden, c.chunk) for _ in range(c.blocks)])
        self.mask_head = nn.Linear(c.latent_dim, c.channels * c.latent_dim)
        self.decoder = nn.ConvTranspose1d(
            c.latent_dim, 1, c.kernel, stride=c.stride, padding=pad)

    def forward(self, mixture: torch.Tensor) -> torch.Tensor:
        # mixture: (batch, window) -> (batch, channels, window)
        c = self.config
        latent = torch.relu(self.encoder(mixture.unsqueeze(1)))
        b, d, n = latent.shape
        x = latent.transpose(1, 2)
        short = (-n) % c.chunk
        if short:
            x = torch.nn.functional.pad(x, (0, 0, 0, short))
        x = self.masker(x)[:, :n]
        masks = torch.sigmoid(self.mask_head(x))
        masks = masks.reshape(b, n, c.channels, d).permute(0, 2, 3, 1)
        masked = masks * latent.unsqueeze(1)
        decoded = self.decoder(masked.reshape(b * c.channels, d, n))
        return decoded.reshape(b, c.channels, mixture.shape[-1])


def build_model(config: ModelConfig, seed: int = 0) -> MaskNet:
    torch.manual_seed(seed)
    return MaskNet(config)


def save_checkpoint(model: MaskNet, path) -> None:
    torch.save({"config": asdict(model.config),
                "state_dict": model.state_dict()}, path)


def load_checkpoint(path) -> MaskNet:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = MaskNet(ModelConfig(**payload["config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
