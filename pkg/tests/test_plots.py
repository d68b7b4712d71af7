import numpy as np
import pytest

from atscalm import plots
from atscalm.util import PipelineError


class TestLineChart:
    def test_two_point_polyline(self):
        svg = plots.line_chart({"loss": (np.array([1.0, 2.0]), np.array([0.5, 0.2]))},
                               "history", "epoch", "loss")
        assert svg.startswith("<svg")
        assert svg.count("<polyline") == 1
        pts = svg.split('points="')[1].split('"')[0].split(" ")
        assert len(pts) == 2

    def test_deterministic_bytes(self):
        series = {"a": (np.arange(5.0), np.sin(np.arange(5.0)))}
        one = plots.line_chart(series, "t", "x", "y")
        two = plots.line_chart(series, "t", "x", "y")
        assert one == two

    def test_empty_rejected(self):
        with pytest.raises(PipelineError):
            plots.line_chart({}, "t", "x", "y")


class TestScatter:
    def test_three_class_legend_and_centroids(self):
        pts = [(0.0, 0.0, "Music"), (1.0, 1.0, "Music"),
               (5.0, 5.0, "NormalSilence"), (6.0, 4.0, "NormalSilence"),
               (-3.0, 2.0, "SpiritualMeditation")]
        svg = plots.scatter_chart(pts, "map")
        for name in ("Music", "NormalSilence", "SpiritualMeditation"):
            assert name in svg
        assert svg.count("<circle") == len(pts) + 3   # points + legend dots
        assert svg.count("<path") == 3                # centroid crosses

    def test_deterministic(self):
        pts = [(0.1, 0.2, "Music"), (0.3, 0.4, "NormalSilence")]
        assert plots.scatter_chart(pts, "m") == plots.scatter_chart(pts, "m")


class TestValidationOverlay:
    def test_two_documents(self):
        t = np.arange(4000) / 16000.0
        raw = 0.5 * np.cos(2 * np.pi * 25 * t)
        wave_svg, spec_svg = plots.validation_overlay(raw, raw * 0.9, 16000.0, "Music")
        for svg in (wave_svg, spec_svg):
            assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
            assert "recorded" in svg and "theoretical" in svg
