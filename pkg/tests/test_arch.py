from pathlib import Path

import numpy as np
import pytest

from densegan import arch, ops
from densegan.tensor import Tensor, no_grad

GOLDEN = Path(__file__).parent / "golden"


def _golden(name):
    return GOLDEN.joinpath(name).read_text().splitlines()


def test_fisher_base_table_matches_golden():
    assert arch.describe("fisher-base", 64) == _golden("fisher-base_b64.txt")


def test_dense12_table_matches_golden():
    lines = arch.describe("dense12", 64)
    assert lines == _golden("dense12_b64.txt")
    assert len(lines) == 18
    assert lines[5] == "Merged layer Size([64, 704, 4, 4])"


def test_describe_substitutes_batch():
    expected = [l.replace("[64,", "[1,") for l in _golden("fisher-base_b64.txt")]
    assert arch.describe("fisher-base", 1) == expected


def test_reduce_layers_restore_entry_width():
    lines = arch.describe("dense12r", 64)
    merged = [i for i, l in enumerate(lines) if l.startswith("Merged")]
    assert [lines[i + 1] for i in merged] == [
        "Reduced layer Size([64, 256, 4, 4])",
        "Reduced layer Size([64, 128, 8, 8])",
        "Reduced layer Size([64, 64, 16, 16])",
    ]


@pytest.mark.parametrize("name", ["dense12", "dense12r", "dense16", "dense16r"])
def test_merged_channel_law(name):
    layers = arch.generator_layers(arch.get_arch(name))
    merges = [l for l in layers if l.kind == "merge"]
    assert merges
    for m in merges:
        entry = layers[m.inputs[0]].out_channels
        assert m.out_channels == 2.75 * entry


def test_dense_channels_halve_after_first():
    assert arch.dense_channels(256, 3) == [256, 128, 64]
    assert arch.dense_channels(64, 1) == [64]


def test_essential_count_follows_table():
    for name, spec in arch.REGISTRY.items():
        layers = arch.generator_layers(spec)
        n = sum(l.kind in ("stem", "essential", "output") for l in layers)
        assert n == spec.n_essential == (4 if spec.image_size == 32 else 5), name


def test_layer_geometry_invariants():
    for spec in arch.REGISTRY.values():
        prev_spatial = 1
        for layer in arch.generator_layers(spec):
            if layer.kind in ("essential", "output"):
                assert layer.geometry == (4, 2, 1) and layer.spatial == 2 * prev_spatial
            elif layer.kind in ("extra", "dense"):
                assert layer.geometry == (3, 1, 1) and layer.spatial == prev_spatial
            elif layer.kind == "reduce":
                assert layer.geometry == (1, 1, 0)
            prev_spatial = layer.spatial


@pytest.mark.parametrize("bad", [
    dict(image_size=48), dict(image_size=4), dict(dense_per_block=3, base_channels=6),
])
def test_invalid_specs_rejected(bad):
    with pytest.raises(ValueError):
        arch.generator_layers(arch.ArchSpec("bad", **bad))


def test_unknown_name():
    with pytest.raises(KeyError):
        arch.get_arch("nosuch")


def test_single_conv_param_count():
    conv = ops.ConvParams.init(2, 4, 3, 1, 1, np.random.default_rng(0))
    assert sum(p.size for p in conv.parameters()) == 72


def test_fisher_base_param_count_by_hand():
    # weights: stem 100x256x4x4, 256x128x4x4, 128x64x4x4, two 64x64x3x3, 64x3x4x4, 3x3x3x3
    weights = 100 * 256 * 16 + 256 * 128 * 16 + 128 * 64 * 16 + 2 * 64 * 64 * 9 + 64 * 3 * 16 + 3 * 3 * 9
    # BN gamma+beta on the input of every layer but the stem
    bn = 2 * (256 + 128 + 64 + 64 + 64 + 3)
    assert arch.param_count("fisher-base") == weights + bn == 1142999
    assert arch.build_generator("fisher-base").param_count() == weights + bn


def test_reduced_variant_is_smaller():
    assert arch.param_count("dense12r") < arch.param_count("dense12")
    assert arch.param_count("dense8r") < arch.param_count("dense8")


@pytest.mark.parametrize("name", ["dense4", "dense8r", "dense12"])
def test_param_count_matches_built_network(name):
    assert arch.param_count(name) == arch.build_generator(name).param_count()


@pytest.mark.parametrize("name", sorted(arch.REGISTRY))
@pytest.mark.parametrize("batch", [1, 3])
def test_forward_shapes_match_description(name, batch):
    gen = arch.build_generator(name, np.random.default_rng(0))
    if batch == 1:
        gen.eval()
    z = Tensor(np.random.default_rng(1).standard_normal((batch, 100, 1, 1)))
    trace = []
    with no_grad():
        out = gen(z, trace=trace)
    described = arch.describe(name, batch)[1:]
    assert [f"{label} Size([{', '.join(map(str, shape))}])" for label, shape in trace] == described
    size = arch.get_arch(name).image_size
    assert out.shape == (batch, 3, size, size)
    assert np.all(np.abs(out.data) <= 1.0)


def test_discriminator_structure():
    layers = arch.discriminator_layers(32, 64)
    assert sum(l.kind == "extra" for l in layers) == 2
    assert [l.spatial for l in layers if l.kind in ("essential", "output")] == [16, 8, 4, 1]
    critic = arch.build_discriminator(32, 64, np.random.default_rng(0))
    trace = []
    with no_grad():
        out = critic(Tensor(np.random.default_rng(1).uniform(-1, 1, (7, 3, 32, 32))), trace=trace)
    assert out.shape == (7, 1)
    assert trace[-1][1] == (7, 1, 1, 1)


def test_discriminator_unchanged_across_registry():
    base = arch.build_discriminator(32, 64, np.random.default_rng(0)).topology()
    for name, spec in arch.REGISTRY.items():
        if spec.image_size == 32:
            assert arch.build_discriminator(spec.image_size, 64, np.random.default_rng(0)).topology() == base


def test_state_round_trip(rng):
    gen = arch.build_generator("dense4", rng)
    other = arch.build_generator("dense4", np.random.default_rng(99))
    other.load_state_arrays("g", gen.state_arrays("g"))
    for a, b in zip(gen.parameters(), other.parameters()):
        assert np.array_equal(a.data, b.data)
