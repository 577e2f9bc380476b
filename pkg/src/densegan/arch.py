"""Declarative generator/critic architectures and their size tables.

A generator is a chain of *essential* transposed convolutions (4x4, stride 2,
pad 1) from a 4x4 stem up to the image size. Between essential layers a
variant either inserts plain 3x3 *extra* layers (the baseline) or a dense
block whose layers see the concatenation of the block entry and all earlier
dense outputs; the block ends in a *merge* (channel concat) and, for the
reduced variants, a 1x1 *reduce* layer back to the entry width.

Every weighted layer is preceded by batch norm and an activation, except the
stem, which consumes raw noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .ops import (
    BatchNormState,
    ConvParams,
    batch_norm,
    concat_channels,
    conv2d,
    conv_transpose2d,
    leaky_relu,
    relu,
)
from .tensor import Tensor, reshape, tanh

KINDS = ("stem", "essential", "extra", "dense", "merge", "reduce", "output")
GEOMETRY = {
    "stem": (4, 1, 0),
    "essential": (4, 2, 1),
    "output": (4, 2, 1),
    "extra": (3, 1, 1),
    "dense": (3, 1, 1),
    "reduce": (1, 1, 0),
}


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a planned network.

    ``activation`` is the nonlinearity in the layer's batch-norm precursor
    ("none" for the stem and for merges, which have no weights). ``inputs``
    indexes earlier layers whose outputs are concatenated to form this
    layer's input; an empty tuple means "the previous layer". ``post`` is an
    output nonlinearity applied after the convolution (only the final Tanh).
    """

    kind: str
    in_channels: int
    out_channels: int
    spatial: int
    activation: str
    label: str
    inputs: tuple[int, ...] = ()
    post: str = "none"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    @property
    def geometry(self) -> tuple[int, int, int] | None:
        return GEOMETRY.get(self.kind)


@dataclass(frozen=True)
class ArchSpec:
    name: str
    image_size: int = 32
    noise_dim: int = 100
    base_channels: int = 64
    dense_per_block: int = 0
    reduce_after_merge: bool = False
    extra_layers: int = 2
    extra_output_layers: int = 1
    image_channels: int = 3

    def validate(self) -> None:
        s = self.image_size
        if s < 8 or s & (s - 1):
            raise ValueError(f"image_size must be a power of two >= 8, got {s}")
        if self.dense_per_block < 0 or self.extra_layers < 0 or self.extra_output_layers < 0:
            raise ValueError("layer counts must be non-negative")
        if self.dense_per_block > 0 and self.base_channels % (2 ** (self.dense_per_block - 1)):
            raise ValueError(
                f"base_channels {self.base_channels} not divisible by 2^{self.dense_per_block - 1}"
            )
        if self.base_channels < 1 or self.noise_dim < 1:
            raise ValueError("channel counts must be positive")

    @property
    def n_essential(self) -> int:
        return 1 + int(math.log2(self.image_size // 4))


REGISTRY: dict[str, ArchSpec] = {
    "fisher-base": ArchSpec("fisher-base"),
    "dense4": ArchSpec("dense4", dense_per_block=1),
    "dense8": ArchSpec("dense8", dense_per_block=2),
    "dense8r": ArchSpec("dense8r", dense_per_block=2, reduce_after_merge=True),
    "dense12": ArchSpec("dense12", dense_per_block=3),
    "dense12r": ArchSpec("dense12r", dense_per_block=3, reduce_after_merge=True),
    "dense16": ArchSpec("dense16", image_size=64, dense_per_block=3),
    "dense16r": ArchSpec("dense16r", image_size=64, dense_per_block=3, reduce_after_merge=True),
}


def get_arch(name: str) -> ArchSpec:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown architecture {name!r}; choose from {', '.join(REGISTRY)}") from None


def dense_channels(entry: int, n: int) -> list[int]:
    """Output widths of a dense block: the first layer keeps the entry width, each later one halves."""
    return [entry // 2**i for i in range(n)]


def generator_layers(spec: ArchSpec) -> list[LayerSpec]:
    spec.validate()
    n_up = spec.n_essential - 1
    widths = [spec.base_channels * 2 ** (n_up - 1 - j) for j in range(n_up)]
    layers: list[LayerSpec] = [
        LayerSpec("stem", spec.noise_dim, widths[0], 4, "none", "Essential layer")
    ]
    for j, width in enumerate(widths):
        spatial = 4 * 2**j
        entry = len(layers) - 1
        if spec.dense_per_block > 0:
            members = [entry]
            for i, out_c in enumerate(dense_channels(width, spec.dense_per_block), start=1):
                in_c = sum(layers[m].out_channels for m in members)
                layers.append(
                    LayerSpec("dense", in_c, out_c, spatial, "relu", f"Dense layer{i}", tuple(members))
                )
                members.append(len(layers) - 1)
            merged = sum(layers[m].out_channels for m in members)
            layers.append(LayerSpec("merge", merged, merged, spatial, "none", "Merged layer", tuple(members)))
            if spec.reduce_after_merge:
                layers.append(LayerSpec("reduce", merged, width, spatial, "relu", "Reduced layer"))
        elif j == n_up - 1:
            for _ in range(spec.extra_layers):
                layers.append(LayerSpec("extra", width, width, spatial, "relu", "Extra layer"))

        prev = layers[-1].out_channels
        if j + 1 < n_up:
            layers.append(LayerSpec("essential", prev, widths[j + 1], spatial * 2, "relu", "Essential layer"))
        else:
            layers.append(
                LayerSpec("output", prev, spec.image_channels, spatial * 2, "relu", "Essential layer")
            )
    for _ in range(spec.extra_output_layers):
        c = spec.image_channels
        layers.append(LayerSpec("extra", c, c, spec.image_size, "relu", "Extra layer"))
    layers[-1] = replace(layers[-1], post="tanh")
    return layers


def discriminator_layers(image_size: int, base_channels: int, extra_layers: int = 2,
                         image_channels: int = 3) -> list[LayerSpec]:
    """Mirror of the baseline generator: strided convs down to 4x4, then a 4x4 valid conv to a scalar."""
    ArchSpec("critic", image_size=image_size, base_channels=base_channels).validate()
    layers = [LayerSpec("essential", image_channels, base_channels, image_size // 2, "none", "Essential layer")]
    for _ in range(extra_layers):
        layers.append(LayerSpec("extra", base_channels, base_channels, image_size // 2, "leaky_relu", "Extra layer"))
    width, spatial = base_channels, image_size // 2
    while spatial > 4:
        layers.append(LayerSpec("essential", width, width * 2, spatial // 2, "leaky_relu", "Essential layer"))
        width, spatial = width * 2, spatial // 2
    layers.append(LayerSpec("output", width, 1, 1, "leaky_relu", "Output layer"))
    return layers


def describe(spec: ArchSpec | str, batch: int = 64) -> list[str]:
    """Size table, one ``"<label> Size([N, C, H, W])"`` line per layer, starting with the noise input."""
    if isinstance(spec, str):
        spec = get_arch(spec)
    lines = [f"Input Size([{batch}, {spec.noise_dim}, 1, 1])"]
    for layer in generator_layers(spec):
        lines.append(f"{layer.label} Size([{batch}, {layer.out_channels}, {layer.spatial}, {layer.spatial}])")
    return lines


def _layer_params(layer: LayerSpec, precursor_bn: bool) -> int:
    if layer.kind == "merge":
        return 0
    k = layer.geometry[0]
    n = layer.in_channels * layer.out_channels * k * k
    if precursor_bn:
        n += 2 * layer.in_channels
    return n


def param_count(spec: ArchSpec | str) -> int:
    """Learnable scalars in the generator: conv weights plus batch-norm gamma/beta."""
    if isinstance(spec, str):
        spec = get_arch(spec)
    return sum(_layer_params(l, l.kind != "stem") for l in generator_layers(spec))


class Network:
    """Executable network built from a list of :class:`LayerSpec`.

    ``transposed`` selects transposed convolutions (generator) or forward
    convolutions (critic).
    """

    def __init__(self, layers: list[LayerSpec], rng, transposed: bool, name: str = ""):
        self.layers = layers
        self.transposed = transposed
        self.name = name
        self.convs: list[ConvParams | None] = []
        self.norms: list[BatchNormState | None] = []
        for layer in layers:
            if layer.kind == "merge":
                self.convs.append(None)
                self.norms.append(None)
                continue
            k, s, p = layer.geometry
            if not transposed and layer.kind == "output":
                k, s, p = 4, 1, 0
            self.convs.append(
                ConvParams.init(layer.in_channels, layer.out_channels, k, s, p, rng, transposed=transposed)
            )
            self.norms.append(BatchNormState.init(layer.in_channels, rng) if layer.activation != "none" else None)

    def parameters(self) -> list[Tensor]:
        params: list[Tensor] = []
        for conv, norm in zip(self.convs, self.norms):
            if norm is not None:
                params.extend(norm.parameters())
            if conv is not None:
                params.extend(conv.parameters())
        return params

    def batch_norms(self) -> list[BatchNormState]:
        return [n for n in self.norms if n is not None]

    def train(self) -> "Network":
        for n in self.batch_norms():
            n.mode = "train"
        return self

    def eval(self) -> "Network":
        for n in self.batch_norms():
            n.mode = "eval"
        return self

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def _apply(self, i: int, x: Tensor) -> Tensor:
        layer, conv, norm = self.layers[i], self.convs[i], self.norms[i]
        if norm is not None:
            x = batch_norm(x, norm)
        if layer.activation == "relu":
            x = relu(x)
        elif layer.activation == "leaky_relu":
            x = leaky_relu(x)
        x = conv_transpose2d(x, conv) if self.transposed else conv2d(x, conv)
        if layer.post == "tanh":
            x = tanh(x)
        return x

    def forward(self, x: Tensor, trace: list | None = None) -> Tensor:
        outputs: list[Tensor] = []
        for i, layer in enumerate(self.layers):
            if layer.inputs:
                src = concat_channels([outputs[j] for j in layer.inputs])
            else:
                src = outputs[-1] if outputs else x
            out = src if layer.kind == "merge" else self._apply(i, src)
            outputs.append(out)
            if trace is not None:
                trace.append((layer.label, out.shape))
        if not self.transposed:
            out = reshape(out, (out.shape[0], 1))
        return out

    __call__ = forward

    def topology(self) -> tuple:
        """Hashable structural description (layers and conv geometry), independent of weights."""
        return tuple(
            (l, None if c is None else (c.kernel, c.stride, c.padding, c.transposed))
            for l, c in zip(self.layers, self.convs)
        )

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i, p in enumerate(self.parameters()):
            out[f"{prefix}.param{i}"] = np.array(p.data)
        for i, n in enumerate(self.batch_norms()):
            out[f"{prefix}.bn{i}.running_mean"] = n.running_mean
            out[f"{prefix}.bn{i}.running_var"] = n.running_var
        return out

    def load_state_arrays(self, prefix: str, arrays) -> None:
        for i, p in enumerate(self.parameters()):
            p.assign(arrays[f"{prefix}.param{i}"])
        for i, n in enumerate(self.batch_norms()):
            n.running_mean = np.array(arrays[f"{prefix}.bn{i}.running_mean"])
            n.running_var = np.array(arrays[f"{prefix}.bn{i}.running_var"])


def build_generator(spec: ArchSpec | str, rng=None) -> Network:
    if isinstance(spec, str):
        spec = get_arch(spec)
    rng = np.random.default_rng(0) if rng is None else rng
    net = Network(generator_layers(spec), rng, transposed=True, name=spec.name)
    net.spec = spec
    return net


def build_discriminator(image_size: int = 32, base_channels: int = 64, rng=None) -> Network:
    rng = np.random.default_rng(0) if rng is None else rng
    return Network(discriminator_layers(image_size, base_channels), rng, transposed=False, name="critic")
