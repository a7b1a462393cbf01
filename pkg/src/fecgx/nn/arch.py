"""Generator and discriminator architectures for the 1D translation model.

The generator is an encoder / residual-stack / decoder: three downsampling
convolutions (4 -> 16 -> 32 -> 64 channels), ``n_blocks`` residual blocks at
64 channels, then mirrored transposed-convolution upsampling back to the
target channel count. Every convolution is followed by batch norm, a
pointwise dense stage and ReLU; the output head is tanh remapped onto
[0, 1] to match min-max normalized targets.

The discriminator is a patch classifier: a stack of kernel-4 convolutions
with leaky ReLU whose output is a map of per-patch real/fake scores.
"""

from __future__ import annotations

import numpy as np

from . import engine
from .layers import (BatchNorm1d, Conv1d, ConvTranspose1d, Dense, Dropout,
                     LeakyReLU, Module, ReflectionPad1d, ReLU, Sequential,
                     Tanh)

__all__ = ["ResnetBlock", "Generator", "PatchDiscriminator",
           "build_generator", "build_discriminator"]

RESNET_CHANNELS = 64
DROPOUT_RATE = 0.5
DISC_CHANNELS = (16, 32, 64)
LEAKY_SLOPE = 0.2


class ResnetBlock(Module):
    """Residual unit: two (reflection pad, conv k=3, batch norm) stages with
    a dense + dropout stage between them, skip-added to the block input."""

    def __init__(self, channels, dropout_rate=DROPOUT_RATE, rng=None,
                 drop_rng=None, dtype=np.float32):
        super().__init__()
        self.body = Sequential(
            ReflectionPad1d(1),
            Conv1d(channels, channels, 3, rng=rng, dtype=dtype),
            BatchNorm1d(channels, dtype=dtype),
            ReLU(),
            Dense(channels, rng=rng, dtype=dtype),
            Dropout(dropout_rate, rng=drop_rng),
            ReflectionPad1d(1),
            Conv1d(channels, channels, 3, rng=rng, dtype=dtype),
            BatchNorm1d(channels, dtype=dtype),
        )

    def forward(self, x):
        return engine.add(x, self.body(x))


class Generator(Module):
    def __init__(self, in_channels, out_channels, n_blocks=13, seed=0,
                 dtype=np.float32):
        super().__init__()
        self.config = {"kind": "generator", "in_channels": in_channels,
                       "out_channels": out_channels, "n_blocks": n_blocks}
        ss = np.random.SeedSequence(seed)
        init_ss, drop_ss = ss.spawn(2)
        rng = np.random.default_rng(init_ss)
        drop_rng = np.random.default_rng(drop_ss)
        c = RESNET_CHANNELS
        self.down = Sequential(
            ReflectionPad1d(3),
            Conv1d(in_channels, 16, 7, rng=rng, dtype=dtype),
            BatchNorm1d(16, dtype=dtype), Dense(16, rng=rng, dtype=dtype), ReLU(),
            Conv1d(16, 32, 3, stride=2, padding=1, rng=rng, dtype=dtype),
            BatchNorm1d(32, dtype=dtype), Dense(32, rng=rng, dtype=dtype), ReLU(),
            Conv1d(32, c, 3, stride=2, padding=1, rng=rng, dtype=dtype),
            BatchNorm1d(c, dtype=dtype), Dense(c, rng=rng, dtype=dtype), ReLU(),
        )
        self.blocks = Sequential(*[
            ResnetBlock(c, rng=rng, drop_rng=drop_rng, dtype=dtype)
            for _ in range(n_blocks)
        ])
        self.up = Sequential(
            ConvTranspose1d(c, 32, 3, stride=2, padding=1, output_padding=1,
                            rng=rng, dtype=dtype),
            BatchNorm1d(32, dtype=dtype), Dense(32, rng=rng, dtype=dtype), ReLU(),
            ConvTranspose1d(32, 16, 3, stride=2, padding=1, output_padding=1,
                            rng=rng, dtype=dtype),
            BatchNorm1d(16, dtype=dtype), Dense(16, rng=rng, dtype=dtype), ReLU(),
            ReflectionPad1d(3),
            Conv1d(16, out_channels, 7, rng=rng, dtype=dtype),
            Tanh(),
        )

    def forward(self, x):
        y = self.up(self.blocks(self.down(x)))
        # tanh spans (-1, 1) while targets are min-max normalized to [0, 1]
        return engine.mul(engine.add(y, 1.0), 0.5)


class PatchDiscriminator(Module):
    """Kernel-4 convolution stack emitting one real/fake score per patch."""

    def __init__(self, in_channels, seed=0, dtype=np.float32):
        super().__init__()
        self.config = {"kind": "discriminator", "in_channels": in_channels}
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        c1, c2, c3 = DISC_CHANNELS
        self.net = Sequential(
            Conv1d(in_channels, c1, 4, stride=2, padding=1, rng=rng, dtype=dtype),
            LeakyReLU(LEAKY_SLOPE),
            Dense(c1, rng=rng, dtype=dtype),
            Conv1d(c1, c2, 4, stride=2, padding=1, rng=rng, dtype=dtype),
            BatchNorm1d(c2, dtype=dtype),
            LeakyReLU(LEAKY_SLOPE),
            Dense(c2, rng=rng, dtype=dtype),
            Conv1d(c2, c3, 4, stride=2, padding=1, rng=rng, dtype=dtype),
            BatchNorm1d(c3, dtype=dtype),
            LeakyReLU(LEAKY_SLOPE),
            Dense(c3, rng=rng, dtype=dtype),
            Conv1d(c3, c3, 4, stride=1, padding=1, rng=rng, dtype=dtype),
            BatchNorm1d(c3, dtype=dtype),
            LeakyReLU(LEAKY_SLOPE),
            Dense(c3, rng=rng, dtype=dtype),
            LeakyReLU(LEAKY_SLOPE),
            Conv1d(c3, 1, 4, stride=1, padding=1, rng=rng, dtype=dtype),
        )

    def forward(self, x):
        return self.net(x)

    def scalar(self, x):
        """Mean over patch scores: the D(.) used by every loss formula."""
        return engine.mean(self.forward(x), axis=(1, 2))


def build_generator(in_channels=4, out_channels=1, n_blocks=13, seed=0,
                    dtype=np.float32) -> Generator:
    return Generator(in_channels, out_channels, n_blocks=n_blocks, seed=seed,
                     dtype=dtype)


def build_discriminator(in_channels=1, seed=0, dtype=np.float32) -> PatchDiscriminator:
    return PatchDiscriminator(in_channels, seed=seed, dtype=dtype)
