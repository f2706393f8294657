import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from hipe.errors import ShapeMismatch
from hipe.image import load_image
from hipe.metrics import GccReport, gcc, hierarchy_report, total_variation
from hipe.peeler import PeelConfig
from hipe.pipeline import ScaleSchedule, peel

from conftest import textured_image
from loop_reference import loop_gcc

GOLDENS = json.loads((Path(__file__).parent / "data" / "goldens.json").read_text())


def test_constant_detail_is_uncorrelated():
    rng = np.random.default_rng(1)
    structure = rng.random((6, 7, 3))
    assert gcc(np.full_like(structure, 0.3), structure) == 0.0
    assert gcc(structure, np.full_like(structure, 0.9)) == 0.0


def test_2x2_matches_loop_oracle():
    a = np.array([[0.0, 0.5], [1.0, 0.25]])[:, :, None]
    b = np.array([[1.0, 0.0], [0.5, 0.75]])[:, :, None]
    assert gcc(a, b) == pytest.approx(loop_gcc(a, b), abs=1e-9)


def test_random_rgb_matches_loop_oracle():
    rng = np.random.default_rng(2)
    a = rng.random((5, 6, 3))
    b = rng.random((5, 6, 3))
    assert gcc(a, b) == pytest.approx(loop_gcc(a, b), abs=1e-12)


def test_gcc_requires_matching_shapes():
    with pytest.raises(ShapeMismatch):
        gcc(np.zeros((4, 4, 1)), np.zeros((4, 5, 1)))


def test_gcc_is_symmetric_bitwise():
    rng = np.random.default_rng(3)
    a = rng.random((8, 8, 3))
    b = rng.random((8, 8, 3))
    assert gcc(a, b) == gcc(b, a)


@settings(max_examples=25)
@given(
    scale_a=st.floats(-3.0, 3.0),
    scale_b=st.floats(-3.0, 3.0),
    imgs=hnp.arrays(np.float64, (2, 5, 4, 1), elements=st.floats(0.0, 1.0)),
)
def test_gcc_is_bilinear(scale_a, scale_b, imgs):
    base = gcc(imgs[0], imgs[1])
    scaled = gcc(scale_a * imgs[0], scale_b * imgs[1])
    assert scaled == pytest.approx(abs(scale_a * scale_b) * base, abs=1e-9)


def test_identity_peel_reports_zero():
    img = textured_image(16, 16, 4)
    h = peel(img, ScaleSchedule(num_scales=2), PeelConfig(lambda_pre=0.0, lambda_con=0.0))
    report = hierarchy_report(h)
    assert all(value == 0.0 for _, value in report.per_scale)
    assert report.mean_gcc == 0.0


def test_constant_input_reports_zero():
    h = peel(np.full((16, 16, 3), 0.5), ScaleSchedule(num_scales=2))
    report = hierarchy_report(h)
    assert report.mean_gcc == 0.0


def test_report_matches_frozen_golden(corpus_dir):
    img = load_image(corpus_dir / "texture64.png")
    report = hierarchy_report(peel(img))
    golden = GOLDENS["texture64"]
    for (t, value), row in zip(report.per_scale, golden["per_scale"]):
        assert t == row["t"]
        assert value == pytest.approx(row["gcc"], rel=1e-6)
    assert report.mean_gcc == pytest.approx(golden["mean_gcc"], rel=1e-6)


def test_report_agrees_with_loop_oracle(corpus_dir):
    img = load_image(corpus_dir / "texture64.png")
    h = peel(img)
    report = hierarchy_report(h)
    t, value = report.per_scale[-1]
    assert value == pytest.approx(loop_gcc(img - h.structure(t), h.structure(t)), rel=1e-12)


def test_consistency_term_buys_uncorrelation():
    img = textured_image(32, 32, 5)
    h_default = peel(img)
    h_ablated = peel(img, cfg=PeelConfig(lambda_con=0.0))
    t = h_default.num_scales
    assert gcc(h_default.peeled(t), h_default.structure(t)) < gcc(
        h_ablated.peeled(t), h_ablated.structure(t)
    )


def test_report_json_schema():
    report = GccReport(per_scale=((1, 0.5), (2, 0.25)), mean_gcc=0.375)
    decoded = json.loads(report.to_json())
    assert decoded == {
        "per_scale": [{"t": 1, "gcc": 0.5}, {"t": 2, "gcc": 0.25}],
        "mean_gcc": 0.375,
    }


def test_total_variation_monotone_under_smoothing():
    img = textured_image(24, 24, 6)
    h = peel(img, ScaleSchedule(num_scales=2))
    assert total_variation(h.final) < total_variation(img)
    assert total_variation(np.full((8, 8, 1), 0.5)) == 0.0
