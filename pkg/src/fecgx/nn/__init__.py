"""Differentiable-tensor engine, 1D layers, optimizer, and checkpoint I/O."""

from .engine import (Tensor, absolute, add, batchnorm1d, conv1d,
                     conv_transpose1d, div, dropout, leaky_relu, matmul,
                     mean, mul, neg, power_spectrum, reflection_pad1d, relu,
                     sqrt, square, sub, tanh, tensor_sum)
from .layers import (BatchNorm1d, Conv1d, ConvTranspose1d, Dense, Dropout,
                     LeakyReLU, Module, Parameter, ReflectionPad1d, ReLU,
                     Sequential, Tanh, count_params)
from .optim import Adam
from .arch import (Generator, PatchDiscriminator, ResnetBlock,
                   build_discriminator, build_generator)
from .checkpoint import (CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                         load_checkpoint, save_checkpoint)
