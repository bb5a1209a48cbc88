"""Server side of the CSS1 frame-separation wire protocol.

All integers are little-endian u32, samples are little-endian f32:

    handshake request   "CSS1" | sample_rate | window | channels
    handshake response  "CSS1"
    frame request       frame_index | window samples
    frame response      frame_index | channels * window samples
    shutdown            frame_index 0xFFFFFFFF, no payload

The server validates the handshake against its own configuration and
exits nonzero without answering on any mismatch; the host treats a
silent death as a protocol failure, which is the intent.
"""

import struct
import sys

import numpy as np

MAGIC = b"CSS1"
SHUTDOWN_INDEX = 0xFFFFFFFF

EXIT_OK = 0
EXIT_HANDSHAKE = 2
EXIT_TRANSPORT = 3


class TransportClosed(Exception):
    pass


def read_exact(stream, count: int) -> bytes:
    parts = []
    got = 0
    while got < count:
        chunk = stream.read(count - got)
        if not chunk:
            raise TransportClosed(f"peer closed after {got}/{count} bytes")
        parts.append(chunk)
        got += len(chunk)
    return b"".join(parts)


def serve(separate, sample_rate: int, window: int, channels: int,
          stdin=None, stdout=None) -> int:
    """Answer frame requests until shutdown. Returns the exit code.

    separate: callable mapping a float32 array of `window` samples to
    a (channels, window) float32 array.
    """
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    try:
        head = read_exact(stdin, 16)
    except TransportClosed:
        return EXIT_TRANSPORT
    got = head[:4], struct.unpack("<III", head[4:])
    if got != (MAGIC, (sample_rate, window, channels)):
        print(f"handshake mismatch: got {got}, serving "
              f"({sample_rate}, {window}, {channels})", file=sys.stderr)
        return EXIT_HANDSHAKE
    stdout.write(MAGIC)
    stdout.flush()
    while True:
        try:
            (index,) = struct.unpack("<I", read_exact(stdin, 4))
            if index == SHUTDOWN_INDEX:
                return EXIT_OK
            payload = read_exact(stdin, 4 * window)
        except TransportClosed:
            return EXIT_TRANSPORT
        samples = np.frombuffer(payload, dtype="<f4")
        out = np.ascontiguousarray(separate(samples), dtype="<f4")
        if out.shape != (channels, window):
            raise ValueError(f"separator returned shape {out.shape}, "
                             f"expected {(channels, window)}")
        stdout.write(struct.pack("<I", index) + out.tobytes())
        stdout.flush()
