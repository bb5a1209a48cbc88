"""Child-process separator adapter and its wire protocol.

The learned separator lives behind a process boundary so this package
carries no ML dependency. The protocol is bit-exact and little-endian:

    handshake request   "CSS1" | u32 sample_rate | u32 W | u32 C
    handshake response  "CSS1"
    frame request       u32 frame_index | W x f32 samples
    frame response      u32 frame_index | (C*W) x f32 samples, channel-major
    shutdown            u32 0xFFFFFFFF, no payload

Transport is the child's stdin/stdout. Frames are serialized one at a
time in index order over a single child; run several children if you
want parallelism.
"""

import os
import selectors
import struct
import subprocess
import time

import numpy as np

from .framing import Frame
from .separators import SeparatedFrame

MAGIC = b"CSS1"
SHUTDOWN_INDEX = 0xFFFFFFFF


class SeparatorError(Exception):
    """Base class for external separator failures."""


class WireProtocolError(SeparatorError):
    """The child answered, but not in protocol."""


class SeparatorProcessError(SeparatorError):
    """The child exited or its pipe closed mid-exchange."""


class SeparatorTimeout(SeparatorError):
    """The child did not answer within the configured deadline."""


def handshake_request(sample_rate: int, window: int, channels: int) -> bytes:
    return MAGIC + struct.pack("<III", sample_rate, window, channels)


def parse_handshake_request(data: bytes):
    if len(data) != 16 or data[:4] != MAGIC:
        raise WireProtocolError(f"bad handshake request {data!r}")
    return struct.unpack("<III", data[4:])


def frame_request(index: int, samples) -> bytes:
    return struct.pack("<I", index) + np.asarray(samples, dtype="<f4").tobytes()


def shutdown_request() -> bytes:
    return struct.pack("<I", SHUTDOWN_INDEX)


def frame_response(index: int, channels) -> bytes:
    return struct.pack("<I", index) + np.ascontiguousarray(channels, dtype="<f4").tobytes()


def parse_frame_response(data: bytes, expected_index: int, channels: int, window: int) -> np.ndarray:
    want = 4 + 4 * channels * window
    if len(data) != want:
        raise WireProtocolError(f"frame response is {len(data)} bytes, expected {want}")
    (index,) = struct.unpack_from("<I", data, 0)
    if index != expected_index:
        raise WireProtocolError(f"frame response index {index}, expected {expected_index}")
    flat = np.frombuffer(data, dtype="<f4", offset=4).astype(np.float64)
    return flat.reshape(channels, window)


class ExternalSeparator:
    """Drive one child process through the wire protocol.

    Usable as a context manager. separate() raises WireProtocolError,
    SeparatorProcessError, or SeparatorTimeout; the three are distinct
    so callers can tell a misbehaving model from a dead or hung one.
    """

    def __init__(self, command, sample_rate: int, window: int, channels: int = 2,
                 timeout: float = 30.0):
        self.command = list(command)
        self.sample_rate = sample_rate
        self.window = window
        self.channels = channels
        self.timeout = timeout
        self.returncode = None
        self._proc = None

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.close()

    def start(self):
        if self._proc is not None:
            raise SeparatorError("already started")
        self._proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        self._send(handshake_request(self.sample_rate, self.window, self.channels))
        reply = self._recv(len(MAGIC))
        if reply != MAGIC:
            raise WireProtocolError(f"bad handshake response {reply!r}")

    def separate(self, frame: Frame) -> SeparatedFrame:
        if self._proc is None:
            raise SeparatorError("not started")
        self._send(frame_request(frame.index, frame.samples))
        data = self._recv(4 + 4 * self.channels * self.window)
        estimates = parse_frame_response(data, frame.index, self.channels, self.window)
        return SeparatedFrame(frame.index, frame.start, estimates)

    def close(self):
        if self._proc is None:
            return
        proc, self._proc = self._proc, None
        try:
            if proc.poll() is None:
                proc.stdin.write(shutdown_request())
                proc.stdin.close()
                proc.wait(timeout=self.timeout)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()
        self.returncode = proc.returncode

    def _send(self, data: bytes):
        try:
            self._proc.stdin.write(data)
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise SeparatorProcessError(f"child pipe closed while sending: {exc}") from exc

    def _recv(self, count: int) -> bytes:
        # Deadline read over the raw fd; a blocking file read could hang
        # forever on a stuck child.
        fd = self._proc.stdout.fileno()
        sel = selectors.DefaultSelector()
        sel.register(fd, selectors.EVENT_READ)
        deadline = time.monotonic() + self.timeout
        parts, got = [], 0
        try:
            while got < count:
                remaining = deadline - time.monotonic()
                if remaining <= 0 or not sel.select(remaining):
                    raise SeparatorTimeout(
                        f"no response within {self.timeout} s ({got}/{count} bytes)")
                chunk = os.read(fd, count - got)
                if not chunk:
                    try:
                        code = self._proc.wait(timeout=1.0)
                    except subprocess.TimeoutExpired:
                        code = None
                    raise SeparatorProcessError(
                        f"child closed its stdout after {got}/{count} bytes (exit {code})")
                parts.append(chunk)
                got += len(chunk)
        finally:
            sel.close()
        return b"".join(parts)
