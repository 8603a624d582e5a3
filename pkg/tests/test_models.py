"""Genome decoding, network assembly, and analytic parameter counts."""

import itertools
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedforage import models
from fedforage.nn import layers as L
from fedforage.nn.network import Network, ParamLayout, infer_shapes


class TestDecodeGenome:
    def test_zero_maps_to_first_option(self):
        assert models.decode_genome([0.0] * 5).filters == 8

    def test_one_clamps_to_last_option(self):
        assert models.decode_genome([1.0] * 5).filters == 512

    def test_midpoint_kernel_axis(self):
        # 4 kernel options: floor(0.5 * 4) = 2 -> third entry = 7
        s = models.decode_genome([0.0, 0.5, 0.0, 0.0, 0.0])
        assert s.kernel == 7

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match=r"\[0,1\]"):
            models.decode_genome([0.0, 0.0, 1.5, 0.0, 0.0])

    def test_surjective_on_005_lattice(self):
        # decode acts per axis, so the image of a product lattice is the
        # product of per-axis images
        lattice = np.round(np.arange(0, 21) * 0.05, 10)
        hit = 1
        for opts in models.OPTIONS.values():
            k = len(opts)
            idx = {min(int(np.floor(x * k)), k - 1) for x in lattice}
            assert idx == set(range(k))
            hit *= len(idx)
        assert hit == models.GRID_SIZE == 2240

    def test_surjective_enumerated_on_01_lattice(self):
        lattice = [round(i * 0.1, 10) for i in range(11)]
        seen = {
            models.decode_genome(p)
            for p in itertools.product(lattice, repeat=5)
        }
        assert len(seen) == models.GRID_SIZE

    @given(st.lists(st.floats(0, 1), min_size=5, max_size=5))
    @settings(max_examples=200, deadline=None)
    def test_total_and_on_grid(self, pos):
        s = models.decode_genome(pos)
        for name in models.OPTIONS:
            assert getattr(s, name if name != "units" else "units") in models.OPTIONS[name]

    def test_default_genome_decodes_near_reference(self):
        s = models.decode_genome(models.DEFAULT_GENOME)
        assert (s.filters, s.kernel, s.activation, s.units) == (32, 3, "leaky_relu", 64)


def all_grid_settings():
    return [
        models.StructureSettings(*combo)
        for combo in itertools.product(*models.OPTIONS.values())
    ]


class TestBuildNetwork:
    def test_default_build_first_layer(self):
        spec = models.build_network()
        first = spec.layers[0]
        assert isinstance(first, L.Conv2D)
        assert first.out_channels == 32 and first.kernel == 3

    def test_last_layer_is_class_head(self):
        spec = models.build_network(classes=4)
        assert isinstance(spec.layers[-1], L.SoftmaxHead)
        assert spec.layers[-1].classes == 4

    def test_default_build_within_parameter_budget(self):
        spec = models.build_network(input_shape=(3, 224, 224), classes=4)
        assert 1_000_000 <= models.param_count(spec) <= 1_450_000

    def test_indivisible_spatial_dims_rejected_early(self):
        with pytest.raises(L.ShapeError, match="divisible by 8"):
            models.build_network(input_shape=(3, 100, 100))

    def test_final_dense_dropout_fixed_at_half(self):
        spec = models.build_network(models.StructureSettings(16, 3, "relu", 0.1, 32))
        drops = [l.rate for l in spec.layers if isinstance(l, L.Dropout)]
        assert drops == [0.1, 0.1, 0.1, 0.5]

    def test_genome_units_set_penultimate_dense(self):
        spec = models.build_network(models.StructureSettings(16, 3, "relu", 0.1, 32))
        dense = [l.units for l in spec.layers if isinstance(l, L.Dense)]
        assert dense == [128, 32]

    def test_variants_differ_only_in_final_conv_pair_kinds(self):
        base = models.build_network()
        cnx = models.build_network(variant="convnext")
        diff = models.structural_diff(base, cnx)
        assert len(diff) == 2
        for i in diff:
            assert isinstance(base.layers[i], L.Conv2D)
            assert isinstance(cnx.layers[i], L.ConvNeXtBlock)

    def test_filter_schedule_doubles_with_cap(self):
        spec = models.build_network(
            models.StructureSettings(256, 3, "relu", 0.1, 16), input_shape=(3, 32, 32)
        )
        convs = [l.out_channels for l in spec.layers if isinstance(l, L.Conv2D)]
        assert convs == [256, 512, 512, 512, 512, 512]

    def test_shape_closure_all_grid_cells_at_32(self):
        for settings in all_grid_settings():
            spec = models.build_network(settings, input_shape=(1, 32, 32))
            shapes = infer_shapes(spec)  # raises on any closure failure
            assert L.out_shape(spec.layers[-1], shapes[-1]) == (4,)


class TestParamCount:
    def test_single_conv_hand_count(self):
        stub = SimpleNamespace(input_shape=(3, 8, 8), layers=(L.Conv2D(32, 3),))
        assert models.param_count(stub) == 896  # 32*(3*3*3) + 32

    def test_dense_hand_count(self):
        stub = SimpleNamespace(input_shape=(64,), layers=(L.Dense(128),))
        assert models.param_count(stub) == 8320  # 64*128 + 128

    def test_empty_layer_list(self):
        stub = SimpleNamespace(input_shape=(3, 8, 8), layers=())
        assert models.param_count(stub) == 0

    def test_count_matches_allocation_for_all_grid_cells(self):
        for settings in all_grid_settings():
            spec = models.build_network(settings, input_shape=(1, 32, 32))
            assert models.param_count(spec) == ParamLayout(spec).total

    def test_count_matches_initialized_vector_length(self):
        for variant in ("baseline", "convnext"):
            spec = models.build_network(variant=variant, input_shape=(1, 32, 32))
            net = Network(spec, dtype=np.float32)
            assert len(net.init_params(0)) == models.param_count(spec)

    def test_bytes_at_float32(self):
        spec = models.build_network(input_shape=(3, 224, 224))
        assert models.param_bytes(spec) == 4 * models.param_count(spec)


class TestFormatSpec:
    def test_layer_per_line_with_hyperparameters(self):
        spec = models.build_network(input_shape=(1, 32, 32))
        text = models.format_spec(spec)
        lines = text.strip().splitlines()
        assert f"parameters: {models.param_count(spec)}" in text
        assert sum(1 for l in lines if "Conv2D" in l) == 6
        assert "Dropout(rate=0.5)" in text
