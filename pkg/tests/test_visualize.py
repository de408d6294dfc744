"""Activation extraction, heatmap rendering, and curve export."""

import numpy as np
import pytest

import tongueage.data as D
import tongueage.viz as V
from tongueage.errors import ConfigError
from tongueage.model import INPUT_SHAPE, build_paper_model
from tongueage.trainer import EpochMetrics, read_metrics_csv


def paper_frame(seed=3):
    return D.synth_generate(1, seed=seed)[0].frames[0]


class TestExtractActivations:
    def test_first_conv_and_last_pool_shapes(self):
        m = build_paper_model(0)
        acts = V.extract_activations(m, paper_frame(), ["conv1", "pool2"])
        assert acts.get("conv1").values.shape == (63, 412, 8)
        assert acts.get("pool2").values.shape == (14, 101, 4)

    def test_all_shapes_match_model(self):
        m = build_paper_model(1)
        acts = V.extract_activations(m, paper_frame(), "all")
        expected = dict(zip(m.layer_names(), m.output_shapes()))
        for a in acts.activations:
            assert a.values.shape == expected[a.name]
        assert acts.names() == m.layer_names()

    def test_unknown_layer_lists_valid_names(self):
        m = build_paper_model(0)
        with pytest.raises(LookupError, match="conv1"):
            V.extract_activations(m, paper_frame(), ["conv9"])

    def test_zero_frame_zero_activations(self):
        m = build_paper_model(2)  # biases are zero at init
        acts = V.extract_activations(m, np.zeros(INPUT_SHAPE, np.float32), "all")
        for a in acts.activations:
            assert not a.values.any()
            assert a.vmin == 0.0 and a.vmax == 0.0

    def test_model_not_mutated(self):
        m = build_paper_model(4)
        digest = m.param_digest()
        V.extract_activations(m, paper_frame(), "all")
        assert m.param_digest() == digest

    def test_min_max_statistics(self):
        m = build_paper_model(5)
        act = V.extract_activations(m, paper_frame(), ["conv1"]).get("conv1")
        assert act.vmin == float(act.values.min())
        assert act.vmax == float(act.values.max())


class TestHeatmap:
    def test_colormap_table_shape(self):
        assert V.HEAT_COLORMAP.shape == (256, 3)
        assert V.HEAT_COLORMAP.dtype == np.uint8

    def test_constant_input_maps_to_lowest_color(self):
        img = V.render_heatmap(np.full((5, 7), 3.3))
        assert img.shape == (5, 7, 3)
        assert (img == V.HEAT_COLORMAP[0]).all()
        np.testing.assert_array_equal(V.HEAT_COLORMAP[0], [0, 0, 0])

    def test_two_value_input_hits_endpoint_colors(self):
        a = np.zeros((2, 2))
        a[1, 1] = 1.0
        img = V.render_heatmap(a)
        np.testing.assert_array_equal(img[0, 0], V.HEAT_COLORMAP[0])   # dark
        np.testing.assert_array_equal(img[1, 1], V.HEAT_COLORMAP[255])  # dark red
        np.testing.assert_array_equal(V.HEAT_COLORMAP[255], [139, 0, 0])

    def test_monotone_ramp_follows_documented_progression(self):
        ramp = np.linspace(0, 1, 256)[None, :]
        img = V.render_heatmap(ramp)[0]
        np.testing.assert_array_equal(img, V.HEAT_COLORMAP)
        half = 128
        # dark -> yellow: red and green rise together, blue stays 0
        assert (np.diff(V.HEAT_COLORMAP[:half, 0].astype(int)) >= 0).all()
        assert (np.diff(V.HEAT_COLORMAP[:half, 1].astype(int)) >= 0).all()
        # yellow -> dark red: green drains, red eases to 139
        assert (np.diff(V.HEAT_COLORMAP[half:, 1].astype(int)) <= 0).all()
        assert (np.diff(V.HEAT_COLORMAP[half:, 0].astype(int)) <= 0).all()
        assert (V.HEAT_COLORMAP[:, 2] == 0).all()
        mid = V.HEAT_COLORMAP[127]
        assert mid[0] == mid[1] >= 250  # yellow at the midpoint

    def test_output_dims_match_input(self):
        a = np.random.default_rng(0).normal(size=(14, 101))
        assert V.render_heatmap(a).shape == (14, 101, 3)

    def test_nonfinite_rejected(self):
        a = np.zeros((3, 3))
        a[0, 0] = np.nan
        with pytest.raises(ValueError):
            V.render_heatmap(a)

    def test_byte_deterministic(self, tmp_path):
        m = build_paper_model(6)
        acts = V.extract_activations(m, paper_frame(), ["conv1"])
        dir_a, dir_b = tmp_path / "a", tmp_path / "b"
        files_a = V.export_activation_images(acts, dir_a)
        files_b = V.export_activation_images(acts, dir_b)
        assert [f.name for f in files_a] == [f.name for f in files_b]
        for fa, fb in zip(files_a, files_b):
            assert fa.read_bytes() == fb.read_bytes()

    def test_export_filenames_and_formats(self, tmp_path):
        m = build_paper_model(7)
        acts = V.extract_activations(m, paper_frame(), ["pool2"])
        files = V.export_activation_images(acts, tmp_path)
        names = sorted(f.name for f in files)
        assert "pool2_0.pgm" in names and "pool2_0.ppm" in names
        assert len([n for n in names if n.endswith(".ppm")]) == 4  # 4 channels
        gray = V.read_pgm(tmp_path / "pool2_0.pgm")
        assert gray.shape == (14, 101)
        rgb = V.read_ppm(tmp_path / "pool2_0.ppm")
        assert rgb.shape == (14, 101, 3)

    def test_flat_layers_skipped(self, tmp_path):
        m = build_paper_model(8)
        acts = V.extract_activations(m, paper_frame(), ["dense1"])
        assert V.export_activation_images(acts, tmp_path) == []


def history(values):
    return [
        EpochMetrics(i + 1, v, v * 1.1, v / 2, v / 2, 0.5)
        for i, v in enumerate(values)
    ]


class TestCurves:
    def test_single_epoch_valid_image(self, tmp_path):
        img_path, csv_path = V.export_curves(history([4.0]), tmp_path)
        img = V.read_ppm(img_path)
        assert img.shape == (480, 640, 3)
        assert (np.all(img == V.TRAIN_COLOR, axis=2)).any()

    def test_extents_touch_plot_rows(self, tmp_path):
        img_path, _ = V.export_curves(history([5.0, 3.0, 2.0, 4.0]), tmp_path)
        img = V.read_ppm(img_path)
        colored = (
            np.all(img == V.TRAIN_COLOR, axis=2) | np.all(img == V.VAL_COLOR, axis=2)
        )
        rows = np.nonzero(colored.any(axis=1))[0]
        # series min/max map exactly to the plot area's bottom/top rows;
        # the 1px point markers may spill one row past either edge
        assert abs(rows.min() - V._MARGIN_T) <= 1
        assert abs(rows.max() - (480 - V._MARGIN_B - 1)) <= 1

    def test_csv_roundtrip_identical(self, tmp_path):
        hist = history([3.5, 2.25, 1.125])
        _, csv_path = V.export_curves(hist, tmp_path)
        assert read_metrics_csv(csv_path) == hist

    def test_empty_history_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            V.export_curves([], tmp_path)

    def test_byte_deterministic(self, tmp_path):
        h = history([2.0, 1.0])
        p1, _ = V.export_curves(h, tmp_path / "x")
        p2, _ = V.export_curves(h, tmp_path / "y")
        assert p1.read_bytes() == p2.read_bytes()
