"""Layer primitives: (transposed) convolution, batch norm, activations, concat.

Convolutions are lowered to matrix products through :mod:`densegan.kernels`
(im2col/col2im). All functions are differentiable through the active tape.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .tensor import Tensor, concat, make_op

LEAKY_SLOPE = 0.2
BN_EPS = 1e-5
BN_MOMENTUM = 0.1
INIT_STD = 0.02


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv_transpose_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size - 1) * stride - 2 * padding + kernel


@dataclass
class ConvParams:
    """Weights and geometry of a square-kernel (transposed) convolution.

    ``weight`` is ``[out, in, k, k]`` for a forward convolution and
    ``[in, out, k, k]`` when ``transposed`` is set.
    """

    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    padding: int
    weight: Tensor
    bias: Tensor | None = None
    transposed: bool = False

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "kernel", "stride"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.padding < 0:
            raise ValueError("padding must be non-negative")
        if self.transposed:
            expected = (self.in_channels, self.out_channels, self.kernel, self.kernel)
        else:
            expected = (self.out_channels, self.in_channels, self.kernel, self.kernel)
        if self.weight.shape != expected:
            raise ValueError(f"weight shape {self.weight.shape} != expected {expected}")
        if self.bias is not None and self.bias.shape != (self.out_channels,):
            raise ValueError("bias must have shape [out_channels]")

    @classmethod
    def init(cls, in_channels, out_channels, kernel, stride, padding, rng,
             transposed=False, bias=False, std=INIT_STD):
        shape = (in_channels, out_channels, kernel, kernel) if transposed else (out_channels, in_channels, kernel, kernel)
        w = Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)
        b = Tensor(np.zeros(out_channels), requires_grad=True) if bias else None
        return cls(in_channels, out_channels, kernel, stride, padding, w, b, transposed)

    def parameters(self) -> list[Tensor]:
        return [self.weight] + ([self.bias] if self.bias is not None else [])


@dataclass
class BatchNormState:
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = BN_EPS
    momentum: float = BN_MOMENTUM
    mode: str = "train"

    @classmethod
    def init(cls, channels: int, rng, std=INIT_STD) -> "BatchNormState":
        return cls(
            gamma=Tensor(rng.normal(1.0, std, size=channels), requires_grad=True),
            beta=Tensor(np.zeros(channels), requires_grad=True),
            running_mean=np.zeros(channels),
            running_var=np.ones(channels),
        )

    def parameters(self) -> list[Tensor]:
        return [self.gamma, self.beta]


def _check_nchw(x: Tensor, channels: int) -> None:
    if x.ndim != 4:
        raise ValueError(f"expected NCHW tensor, got shape {x.shape}")
    if x.shape[1] != channels:
        raise ValueError(f"channel mismatch: input has {x.shape[1]}, layer expects {channels}")


def _add_bias(out: Tensor, bias: Tensor | None) -> Tensor:
    if bias is None:
        return out
    return out + bias.reshape(1, -1, 1, 1)


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """Cross-correlation of ``x`` [N,C,H,W] with ``p.weight`` [C',C,k,k]."""
    if p.transposed:
        raise ValueError("conv2d called with transposed parameters")
    _check_nchw(x, p.in_channels)
    n, c, h, w = x.shape
    k, s, pad = p.kernel, p.stride, p.padding
    oh, ow = conv_output_size(h, k, s, pad), conv_output_size(w, k, s, pad)
    if h + 2 * pad < k or w + 2 * pad < k or oh < 1 or ow < 1:
        raise ValueError(f"non-positive output size for input {h}x{w} with k={k}, s={s}, p={pad}")

    cols = kernels.im2col(x.data, k, s, pad)
    wmat = p.weight.data.reshape(p.out_channels, -1)
    out = np.matmul(wmat, cols).reshape(n, p.out_channels, oh, ow)

    def bwd(g):
        g2 = g.reshape(n, p.out_channels, oh * ow)
        dw = np.tensordot(g2, cols, axes=([0, 2], [0, 2])).reshape(p.weight.shape)
        dx = kernels.col2im(np.matmul(wmat.T, g2), c, h, w, k, s, pad) if x.requires_grad else None
        return dx, dw

    return _add_bias(make_op("conv2d", out, (x, p.weight), bwd), p.bias)


def conv_transpose2d(x: Tensor, p: ConvParams) -> Tensor:
    """Transposed convolution; the linear adjoint of :func:`conv2d` with the same weights."""
    if not p.transposed:
        raise ValueError("conv_transpose2d called with forward-conv parameters")
    _check_nchw(x, p.in_channels)
    n, c, h, w = x.shape
    k, s, pad = p.kernel, p.stride, p.padding
    oh, ow = conv_transpose_output_size(h, k, s, pad), conv_transpose_output_size(w, k, s, pad)
    if oh < 1 or ow < 1:
        raise ValueError(f"non-positive output size for input {h}x{w} with k={k}, s={s}, p={pad}")

    wmat = p.weight.data.reshape(p.in_channels, -1)
    xflat = x.data.reshape(n, c, h * w)
    out = kernels.col2im(np.matmul(wmat.T, xflat), p.out_channels, oh, ow, k, s, pad)

    def bwd(g):
        gcols = kernels.im2col(g, k, s, pad)
        dw = np.tensordot(xflat, gcols, axes=([0, 2], [0, 2])).reshape(p.weight.shape)
        dx = np.matmul(wmat, gcols).reshape(x.shape) if x.requires_grad else None
        return dx, dw

    return _add_bias(make_op("conv_transpose2d", out, (x, p.weight), bwd), p.bias)


def batch_norm(x: Tensor, s: BatchNormState) -> Tensor:
    """Per-channel normalization of NCHW input (or NC for fully connected use).

    Train mode normalizes with batch statistics and folds them into the
    running estimates; eval mode uses the running estimates.
    """
    if x.ndim not in (2, 4):
        raise ValueError(f"batch_norm expects NC or NCHW input, got {x.shape}")
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    bshape = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
    count = x.size // x.shape[1]
    gamma = s.gamma.data.reshape(bshape)
    beta = s.beta.data.reshape(bshape)

    if s.mode == "train":
        if count < 2:
            raise ValueError("insufficient batch statistics")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        inv = 1.0 / np.sqrt(var + s.eps)
        xhat = (x.data - mu.reshape(bshape)) * inv.reshape(bshape)
        s.running_mean = (1 - s.momentum) * s.running_mean + s.momentum * mu
        s.running_var = (1 - s.momentum) * s.running_var + s.momentum * var * count / (count - 1)

        def bwd(g):
            dgamma = (g * xhat).sum(axis=axes)
            dbeta = g.sum(axis=axes)
            dxhat = g * gamma
            dx = (inv.reshape(bshape) / count) * (
                count * dxhat
                - dxhat.sum(axis=axes).reshape(bshape)
                - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape)
            )
            return dx, dgamma, dbeta

    elif s.mode == "eval":
        inv = 1.0 / np.sqrt(s.running_var + s.eps)
        xhat = (x.data - s.running_mean.reshape(bshape)) * inv.reshape(bshape)

        def bwd(g):
            return g * gamma * inv.reshape(bshape), (g * xhat).sum(axis=axes), g.sum(axis=axes)

    else:
        raise ValueError(f"unknown batch-norm mode {s.mode!r}")

    return make_op("batch_norm", xhat * gamma + beta, (x, s.gamma, s.beta), bwd)


class kink_margin:
    """Track the smallest ``|input|`` seen by relu-family ops inside the block.

    Gradient checks use it to reject probe points whose finite-difference
    stencil would straddle a kink.
    """

    _active: list["kink_margin"] = []

    def __init__(self):
        self.value = np.inf

    def __enter__(self):
        kink_margin._active.append(self)
        return self

    def __exit__(self, *exc):
        kink_margin._active.remove(self)

    @classmethod
    def observe(cls, x: np.ndarray) -> None:
        if cls._active and x.size:
            m = float(np.min(np.abs(x)))
            for probe in cls._active:
                probe.value = min(probe.value, m)


def relu(x: Tensor) -> Tensor:
    kink_margin.observe(x.data)
    mask = x.data > 0
    return make_op("relu", x.data * mask, (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    kink_margin.observe(x.data)
    scale = np.where(x.data > 0, 1.0, slope)
    return make_op("leaky_relu", x.data * scale, (x,), lambda g: (g * scale,))


def concat_channels(xs: list[Tensor]) -> Tensor:
    if not xs:
        raise ValueError("concat_channels needs at least one input")
    ref = xs[0].shape
    for t in xs:
        if t.ndim != 4 or t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise ValueError("dense block shape mismatch")
    if len(xs) == 1:
        return xs[0]
    return concat(xs, axis=1)


@dataclass
class LinearParams:
    weight: Tensor  # [in, out]
    bias: Tensor = field(default=None)

    @classmethod
    def init(cls, in_features: int, out_features: int, rng) -> "LinearParams":
        # uniform fan-in scaling; keeps the toy MLPs well conditioned
        bound = 1.0 / np.sqrt(in_features)
        return cls(
            Tensor(rng.uniform(-bound, bound, size=(in_features, out_features)), requires_grad=True),
            Tensor(rng.uniform(-bound, bound, size=out_features), requires_grad=True),
        )

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


def linear(x: Tensor, p: LinearParams) -> Tensor:
    """Affine head ``x @ W + b`` for [N, in] inputs."""
    if x.ndim != 2 or x.shape[1] != p.weight.shape[0]:
        raise ValueError(f"linear expects [N, {p.weight.shape[0]}] input, got {x.shape}")
    out = x @ p.weight
    return out + p.bias if p.bias is not None else out
