"""1D layers assembled from the autodiff engine primitives."""

from __future__ import annotations

import numpy as np

from . import engine
from .engine import Tensor

__all__ = [
    "Parameter", "Module", "Sequential", "Conv1d", "ConvTranspose1d",
    "Dense", "BatchNorm1d", "ReflectionPad1d", "Dropout", "ReLU",
    "LeakyReLU", "Tanh", "count_params",
]

WEIGHT_SIGMA = 0.02  # zero-mean Gaussian init, the GAN convention


class Parameter(Tensor):
    def __init__(self, data, name=None):
        super().__init__(np.asarray(data), requires_grad=True, name=name)


class Module:
    """Base class: parameter/buffer discovery and train/eval switching.

    Parameters and buffers are reported in declaration order, which is also
    the checkpoint serialization order.
    """

    def __init__(self):
        self.training = True

    def forward(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)

    def _children(self):
        for name, val in vars(self).items():
            if isinstance(val, Module):
                yield name, val
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Parameter]:
        out = []
        for val in vars(self).values():
            if isinstance(val, Parameter):
                out.append(val)
        for _, child in self._children():
            out.extend(child.parameters())
        return out

    def buffers(self) -> list[np.ndarray]:
        out = list(getattr(self, "_buffers", []))
        for _, child in self._children():
            out.extend(child.buffers())
        return out

    def train(self):
        self.training = True
        for _, child in self._children():
            child.train()
        return self

    def eval(self):
        self.training = False
        for _, child in self._children():
            child.eval()
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class Conv1d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1,
                 padding=0, padding_mode="zero", rng=None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.stride = stride
        self.padding = padding
        self.padding_mode = padding_mode
        self.weight = Parameter(
            rng.normal(0.0, WEIGHT_SIGMA,
                       (out_channels, in_channels, kernel_size)).astype(dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype))

    def forward(self, x):
        return engine.conv1d(x, self.weight, self.bias, stride=self.stride,
                             pad=self.padding, pad_mode=self.padding_mode)


class ConvTranspose1d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1,
                 padding=0, output_padding=0, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.stride = stride
        self.padding = padding
        self.output_padding = output_padding
        self.weight = Parameter(
            rng.normal(0.0, WEIGHT_SIGMA,
                       (in_channels, out_channels, kernel_size)).astype(dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype))

    def forward(self, x):
        return engine.conv_transpose1d(
            x, self.weight, self.bias, stride=self.stride, pad=self.padding,
            output_padding=self.output_padding)


def Dense(channels, rng=None, dtype=np.float32):
    """Per-channel pointwise (k=1) convolution, the 1D reading of a dense stage."""
    return Conv1d(channels, channels, 1, rng=rng, dtype=dtype)


class BatchNorm1d(Module):
    def __init__(self, channels, momentum=0.1, eps=1e-5, dtype=np.float32):
        super().__init__()
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._buffers = [self.running_mean, self.running_var]
        self.momentum = momentum
        self.eps = eps

    def forward(self, x):
        return engine.batchnorm1d(x, self.gamma, self.beta, self.running_mean,
                                  self.running_var, self.training,
                                  momentum=self.momentum, eps=self.eps)


class ReflectionPad1d(Module):
    def __init__(self, pad):
        super().__init__()
        self.pad = pad

    def forward(self, x):
        return engine.reflection_pad1d(x, self.pad)


class Dropout(Module):
    """Seeded dropout; the generator owning the model seeds this."""

    def __init__(self, rate=0.5, rng=None):
        super().__init__()
        self.rate = rate
        self.rng = rng or np.random.default_rng()

    def forward(self, x):
        return engine.dropout(x, self.rate, self.rng, self.training)


class ReLU(Module):
    def forward(self, x):
        return engine.relu(x)


class LeakyReLU(Module):
    def __init__(self, slope=0.2):
        super().__init__()
        self.slope = slope

    def forward(self, x):
        return engine.leaky_relu(x, self.slope)


class Tanh(Module):
    def forward(self, x):
        return engine.tanh(x)


def count_params(model: Module) -> int:
    """Total number of trainable parameter elements."""
    return sum(p.data.size for p in model.parameters())
