"""Minimal reverse-mode autodiff over dense numpy arrays.

Only the operations the 1D generator/discriminator stack and its losses need
are implemented; this is not a general tensor library. Convolutions run as
im2col matrix products so the heavy lifting stays inside BLAS.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor", "no_grad",
    "add", "sub", "mul", "div", "neg", "square", "sqrt", "absolute",
    "matmul", "tensor_sum", "mean", "relu", "leaky_relu", "tanh",
    "conv1d", "conv_transpose1d", "batchnorm1d", "reflection_pad1d",
    "dropout", "power_spectrum",
]

_GRAD_ENABLED = [True]


class no_grad:
    """Context manager suppressing graph construction (cheap inference)."""

    def __enter__(self):
        _GRAD_ENABLED.append(False)
        return self

    def __exit__(self, *exc):
        _GRAD_ENABLED.pop()
        return False


class Tensor:
    """Dense n-d value with optional gradient tracking.

    ``grad`` accumulates across backward passes until explicitly cleared;
    calling backward twice without zeroing doubles the gradients.
    """

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents", "name")

    def __init__(self, data, requires_grad=False, _parents=(), name=None):
        self.data = np.asarray(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._backward = None
        self._parents = _parents
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Populate ``grad`` on every reachable tensor with requires_grad."""
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar loss")
        # Iterative DFS: training graphs are deep enough to blow the
        # interpreter's recursion limit.
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for t in reversed(topo):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            if t.requires_grad:
                t._accumulate(g)
            if t._backward is None:
                continue
            for parent, pg in t._backward(g):
                if not (parent.requires_grad or parent._backward is not None
                        or parent._parents):
                    continue
                if id(parent) in grads:
                    grads[id(parent)] += pg
                else:
                    grads[id(parent)] = pg

    # Sugar for losses written as expressions.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _wrap(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x))


def _tracked(*tensors) -> bool:
    return any(t.requires_grad or t._parents or t._backward is not None
               for t in tensors)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED[-1] and _tracked(*parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: ((a, _unbroadcast(g, a.data.shape)),
                            (b, _unbroadcast(g, b.data.shape))))


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: ((a, _unbroadcast(g, a.data.shape)),
                            (b, _unbroadcast(-g, b.data.shape))))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: ((a, _unbroadcast(g * b.data, a.data.shape)),
                            (b, _unbroadcast(g * a.data, b.data.shape))))


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _make(a.data / b.data, (a, b),
                 lambda g: ((a, _unbroadcast(g / b.data, a.data.shape)),
                            (b, _unbroadcast(-g * a.data / (b.data * b.data),
                                             b.data.shape))))


def neg(a) -> Tensor:
    a = _wrap(a)
    return _make(-a.data, (a,), lambda g: ((a, -g),))


def square(a) -> Tensor:
    a = _wrap(a)
    return _make(a.data * a.data, (a,), lambda g: ((a, 2.0 * a.data * g),))


def sqrt(a) -> Tensor:
    a = _wrap(a)
    root = np.sqrt(a.data)
    return _make(root, (a,), lambda g: ((a, g * (0.5 / root)),))


def absolute(a) -> Tensor:
    a = _wrap(a)
    # subgradient 0 at the kink
    return _make(np.abs(a.data), (a,), lambda g: ((a, g * np.sign(a.data)),))


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return ((a, _unbroadcast(ga, a.data.shape)),
                (b, _unbroadcast(gb, b.data.shape)))

    return _make(a.data @ b.data, (a, b), backward)


def tensor_sum(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)

    def backward(g):
        if axis is None:
            return ((a, np.broadcast_to(g, a.data.shape).copy()),)
        gx = g if keepdims else np.expand_dims(g, axis)
        return ((a, np.broadcast_to(gx, a.data.shape).copy()),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.data.shape[ax] for ax in axis]))
    else:
        count = a.data.shape[axis]
    return tensor_sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def relu(a) -> Tensor:
    a = _wrap(a)
    out = np.maximum(a.data, 0)
    return _make(out, (a,), lambda g: ((a, g * (a.data > 0)),))


def leaky_relu(a, slope=0.2) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0
    scale = np.where(mask, 1.0, slope).astype(a.data.dtype, copy=False)
    return _make(a.data * scale, (a,), lambda g: ((a, g * scale),))


def tanh(a) -> Tensor:
    a = _wrap(a)
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: ((a, g * (1.0 - y * y)),))


# ---------------------------------------------------------------------------
# Convolution machinery (im2col / col2im adjoint pair)

def _unfold(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    """(B, C, L) -> (B, C*k, L') patch matrix; L' = (L - k)//stride + 1."""
    x = np.ascontiguousarray(x)
    b, c, l = x.shape
    lp = (l - k) // stride + 1
    sb, sc, sl = x.strides
    cols = np.lib.stride_tricks.as_strided(
        x, shape=(b, c, k, lp), strides=(sb, sc, sl, sl * stride))
    return np.ascontiguousarray(cols).reshape(b, c * k, lp)


def _fold(cols: np.ndarray, c: int, k: int, stride: int, l_out: int) -> np.ndarray:
    """Adjoint of :func:`_unfold`: scatter-add patches back to (B, C, l_out)."""
    b = cols.shape[0]
    lp = cols.shape[2]
    cols = cols.reshape(b, c, k, lp)
    out = np.zeros((b, c, l_out), dtype=cols.dtype)
    for j in range(k):
        out[:, :, j:j + stride * lp:stride] += cols[:, :, j, :]
    return out


def _pad_input(x: np.ndarray, pad: int, mode: str) -> np.ndarray:
    if pad == 0:
        return x
    if mode == "zero":
        return np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    return np.pad(x, ((0, 0), (0, 0), (pad, pad)), mode="reflect")


def _unpad_grad(g: np.ndarray, pad: int, mode: str) -> np.ndarray:
    if pad == 0:
        return g
    if mode == "zero":
        return g[:, :, pad:-pad]
    out = g[:, :, pad:-pad].copy()
    out[:, :, 1:pad + 1] += g[:, :, pad - 1::-1]
    out[:, :, -pad - 1:-1] += g[:, :, :-pad - 1:-1]
    return out


def conv1d(x, weight, bias=None, stride=1, pad=0, pad_mode="zero") -> Tensor:
    """Cross-correlation along the last axis.

    ``x`` is (B, Cin, L), ``weight`` is (Cout, Cin, k), ``bias`` (Cout,).
    Output length is (L + 2*pad - k)//stride + 1.
    """
    x, weight = _wrap(x), _wrap(weight)
    b_t = _wrap(bias) if bias is not None else None
    cout, cin, k = weight.data.shape
    if x.data.ndim != 3 or x.data.shape[1] != cin:
        raise ValueError(f"conv1d input {x.data.shape} does not match weight {weight.data.shape}")
    pointwise = k == 1 and stride == 1 and pad == 0
    if pointwise:
        cols = x.data  # no patch extraction needed for a 1x1 kernel
        xp_len = x.data.shape[2]
    else:
        xp = _pad_input(x.data, pad, pad_mode)
        if xp.shape[2] < k:
            raise ValueError("input shorter than kernel after padding")
        cols = _unfold(xp, k, stride)
        xp_len = xp.shape[2]
    w2 = weight.data.reshape(cout, cin * k)
    out = np.matmul(w2, cols)
    if b_t is not None:
        out += b_t.data[:, None]

    def backward(g):
        grads = []
        # batched GEMM beats tensordot here (no internal transpose copies)
        gw = np.matmul(g, cols.swapaxes(1, 2)).sum(axis=0).reshape(cout, cin, k)
        grads.append((weight, gw))
        gcols = np.matmul(w2.T, g)
        if pointwise:
            grads.append((x, gcols))
        else:
            gxp = _fold(gcols, cin, k, stride, xp_len)
            grads.append((x, _unpad_grad(gxp, pad, pad_mode)))
        if b_t is not None:
            grads.append((b_t, g.sum(axis=(0, 2))))
        return grads

    parents = (x, weight) if b_t is None else (x, weight, b_t)
    return _make(out, parents, backward)


def conv_transpose1d(x, weight, bias=None, stride=1, pad=0,
                     output_padding=0) -> Tensor:
    """Adjoint of :func:`conv1d` with the same (k, stride, pad) spec.

    ``x`` is (B, Cin, L), ``weight`` is (Cin, Cout, k). Output length is
    (L-1)*stride - 2*pad + k + output_padding.
    """
    x, weight = _wrap(x), _wrap(weight)
    b_t = _wrap(bias) if bias is not None else None
    cin, cout, k = weight.data.shape
    if x.data.ndim != 3 or x.data.shape[1] != cin:
        raise ValueError(f"conv_transpose1d input {x.data.shape} does not match weight {weight.data.shape}")
    if output_padding >= stride and not (output_padding == 0 and stride == 1):
        raise ValueError("output_padding must be smaller than stride")
    b, _, l = x.data.shape
    l_full = (l - 1) * stride + k
    l_out = l_full - 2 * pad + output_padding
    if l_out < 1:
        raise ValueError("output length would be empty")
    w2 = weight.data.reshape(cin, cout * k)
    cols = np.matmul(np.swapaxes(w2, 0, 1), x.data)  # (B, cout*k, L)
    full = _fold(cols, cout, k, stride, l_full)
    out = full[:, :, pad:l_full - pad]
    if output_padding:
        out = np.pad(out, ((0, 0), (0, 0), (0, output_padding)))
    if b_t is not None:
        out = out + b_t.data[:, None]

    def backward(g):
        gfull = np.zeros((b, cout, l_full), dtype=g.dtype)
        stop = l_out - output_padding
        gfull[:, :, pad:pad + stop] = g[:, :, :stop]
        gcols = _unfold(gfull, k, stride)
        grads = [(x, np.matmul(w2, gcols)),
                 (weight, np.tensordot(x.data, gcols, axes=([0, 2], [0, 2]))
                  .reshape(cin, cout, k))]
        if b_t is not None:
            grads.append((b_t, g.sum(axis=(0, 2))))
        return grads

    parents = (x, weight) if b_t is None else (x, weight, b_t)
    return _make(out, parents, backward)


def reflection_pad1d(x, pad: int) -> Tensor:
    x = _wrap(x)
    out = _pad_input(x.data, pad, "reflection")
    return _make(out, (x,), lambda g: ((x, _unpad_grad(g, pad, "reflection")),))


def batchnorm1d(x, gamma, beta, running_mean, running_var, training,
                momentum=0.1, eps=1e-5) -> Tensor:
    """Per-channel standardization over (batch, length), then affine.

    Train mode normalizes by batch statistics and updates the running
    buffers in place by exponential moving average; eval mode uses the
    running buffers. ``running_mean``/``running_var`` are plain arrays, not
    tracked tensors.
    """
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    b, c, l = x.data.shape
    if training:
        if b < 2:
            raise ValueError("batch norm in train mode needs a batch of at least 2")
        mu = x.data.mean(axis=(0, 2))
        xc = x.data - mu[None, :, None]
        var = np.einsum("bcl,bcl->c", xc, xc) / (b * l)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv[None, :, None]
    else:
        mu = running_mean
        var = running_var
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu[None, :, None]) * inv[None, :, None]
    out = gamma.data[None, :, None] * xhat + beta.data[None, :, None]

    def backward(g):
        ggamma = np.einsum("bcl,bcl->c", g, xhat)
        gbeta = g.sum(axis=(0, 2))
        if training:
            n = b * l
            coef = gamma.data * inv
            gx = g - (gbeta / n)[None, :, None]
            gx -= xhat * ((ggamma / n)[None, :, None])
            gx *= coef[None, :, None]
        else:
            gx = g * (gamma.data * inv)[None, :, None]
        return ((x, gx), (gamma, ggamma), (beta, gbeta))

    return _make(out, (x, gamma, beta), backward)


def dropout(x, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity in eval mode."""
    x = _wrap(x)
    if not training or rate <= 0.0:
        return x
    keep = 1.0 - rate
    u = rng.random(x.data.shape, dtype=np.float32)
    mask = (u < keep).astype(x.data.dtype)
    mask /= keep
    return _make(x.data * mask, (x,), lambda g: ((x, g * mask),))


def power_spectrum(x) -> Tensor:
    """Differentiable one-sided periodogram over the last axis.

    Matches :func:`fecgx.signals.psd` bin for bin: normalized so the bin sum
    equals the mean power of the input.
    """
    x = _wrap(x)
    n = x.data.shape[-1]
    spec = np.fft.rfft(x.data, axis=-1)
    scale = np.full(n // 2 + 1, 2.0 / (n * n))
    scale[0] = 1.0 / (n * n)
    if n % 2 == 0:
        scale[-1] = 1.0 / (n * n)
    p = (spec.real**2 + spec.imag**2) * scale

    def backward(g):
        # d|X_k|^2/dx_n = 2*Re(conj(X_k) e^{-2pi i k n / N}); assemble the sum
        # over one-sided bins with a full-length FFT.
        a = (2.0 * scale * g) * np.conj(spec)
        padded = np.zeros(x.data.shape[:-1] + (n,), dtype=complex)
        padded[..., : n // 2 + 1] = a
        gx = np.fft.fft(padded, axis=-1).real.astype(x.data.dtype, copy=False)
        return ((x, gx),)

    return _make(p, (x,), backward)
