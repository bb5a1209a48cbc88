import struct
import subprocess
import sys

import numpy as np
import pytest
import torch

from tinysep.model import ModelConfig, save_checkpoint
from tinysep.train import train

torch.set_num_threads(2)

MAGIC = b"CSS1"
TRAIN_SEED = 0


@pytest.fixture(scope="session")
def model_config():
    return ModelConfig()


@pytest.fixture(scope="session")
def trained_model(model_config):
    return train(model_config, steps=300, batch=16, seed=TRAIN_SEED)


@pytest.fixture(scope="session")
def checkpoint(trained_model, tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "tones.pt"
    save_checkpoint(trained_model, path)
    return path


class Child:
    """Raw-bytes driver for a served plugin subprocess."""

    def __init__(self, *args):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "tinysep", "serve", *args],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL)

    def send(self, data: bytes):
        self.proc.stdin.write(data)
        self.proc.stdin.flush()

    def recv(self, count: int) -> bytes:
        data = self.proc.stdout.read(count)
        assert data is not None
        return data

    def handshake(self, sample_rate: int, window: int, channels: int) -> bytes:
        self.send(MAGIC + struct.pack("<III", sample_rate, window, channels))
        return self.recv(4)

    def request(self, index: int, samples: np.ndarray) -> tuple[int, np.ndarray]:
        window = len(samples)
        self.send(struct.pack("<I", index)
                  + np.asarray(samples, dtype="<f4").tobytes())
        head = self.recv(4)
        (got_index,) = struct.unpack("<I", head)
        payload = self.recv(4 * 2 * window)
        flat = np.frombuffer(payload, dtype="<f4")
        return got_index, flat.reshape(2, window)

    def shutdown(self, timeout: float = 30.0) -> int:
        self.send(b"\xff\xff\xff\xff")
        self.proc.stdin.close()
        return self.proc.wait(timeout=timeout)

    def wait(self, timeout: float = 30.0) -> int:
        try:
            return self.proc.wait(timeout=timeout)
        finally:
            self.proc.stdin.close()
            self.proc.stdout.close()

    def kill(self):
        if self.proc.poll() is None:
            self.proc.kill()
            self.proc.wait()


@pytest.fixture
def spawn():
    children = []

    def _spawn(*args):
        c = Child(*args)
        children.append(c)
        return c

    yield _spawn
    for c in children:
        c.kill()
