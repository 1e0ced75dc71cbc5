"""Pluggable channel between sender and receiver.

The default is a bit-exact identity link; transmission noise is left to
dedicated channel coding outside this artifact. The optional impairments let
robustness experiments exercise every decoder error path: bit_flip corrupts
individual bits of the whole frame (header included), erasure drops the frame
entirely. Both are driven by an explicit seed so runs replay exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CHANNEL_KINDS = ("ideal", "bit_flip", "erasure")


@dataclass(frozen=True)
class ChannelConfig:
    kind: str = "ideal"
    flip_probability: float = 0.0
    erasure_probability: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError(f"flip_probability {self.flip_probability} not in [0, 1]")
        if not 0.0 <= self.erasure_probability <= 1.0:
            raise ValueError(
                f"erasure_probability {self.erasure_probability} not in [0, 1]"
            )


def transmit(frame_bytes: bytes, cfg: ChannelConfig) -> bytes | None:
    """Push frame bytes through the channel; None means the frame was dropped.

    Corruption is never reported here -- the receiver's frame decoder is the
    detection layer.
    """
    if cfg.kind == "ideal":
        return frame_bytes
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    if cfg.kind == "erasure":
        return None if rng.random() < cfg.erasure_probability else frame_bytes
    # bit_flip: each bit flips independently with flip_probability
    bits = np.unpackbits(np.frombuffer(frame_bytes, dtype=np.uint8))
    flips = rng.random(bits.size) < cfg.flip_probability
    return np.packbits(bits ^ flips).tobytes()
