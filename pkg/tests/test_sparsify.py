import csv
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_scene
from splatuq import sparsify
from splatuq.render import render
from splatuq.synth import look_at

COARSE = np.array([0.0, 0.25, 0.5, 0.75])
ERRORS = np.array([4.0, 3.0, 2.0, 1.0])


class TestCurves:
    def test_oracle_hand_example(self):
        curve = sparsify.sparsification_curve(ERRORS, ERRORS, COARSE)
        np.testing.assert_allclose(curve.mae, [2.5, 2.0, 1.5, 1.0])

    def test_reversed_hand_example(self):
        curve = sparsify.sparsification_curve(ERRORS, -ERRORS, COARSE)
        np.testing.assert_allclose(curve.mae, [2.5, 3.0, 3.5, 4.0])

    def test_constant_errors_flat(self, rng):
        errors = np.full((8, 8), 0.3)
        curve = sparsify.sparsification_curve(errors, rng.random((8, 8)))
        np.testing.assert_allclose(curve.mae, 0.3)

    def test_brute_force_removal(self, rng):
        errors, ranking = rng.random(50), rng.integers(0, 5, 50).astype(float)
        curve = sparsify.sparsification_curve(errors, ranking)
        for f, m in zip(curve.fractions, curve.mae):
            removed = int(np.floor(f * 50 + 1e-9))
            # highest ranking first, lower index first among ties
            order = sorted(range(50), key=lambda i: (-ranking[i], i))
            keep = sorted(set(range(50)) - set(order[:removed]))
            assert m == pytest.approx(errors[keep].mean(), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            sparsify.sparsification_curve(np.zeros(4), np.zeros(5))

    def test_scaling(self, rng):
        errors, unc = rng.random((16, 16)), rng.random((16, 16))
        a = sparsify.sparsification_curve(errors, unc)
        b = sparsify.sparsification_curve(3.5 * errors, unc)
        np.testing.assert_allclose(b.mae, 3.5 * a.mae, rtol=1e-12)
        assert sparsify.ause(3.5 * errors, unc) == pytest.approx(sparsify.ause(errors, unc), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_oracle_non_increasing_and_normalized(self, seed):
        rng = np.random.default_rng(seed)
        errors = rng.exponential(1.0, (12, 12))
        oracle = sparsify.sparsification_curve(errors, errors, normalized=True)
        assert oracle.mae[0] == 1.0
        assert np.all(np.diff(oracle.mae) <= 1e-12)


class TestAuse:
    def test_self_is_zero(self, rng):
        for _ in range(20):
            errors = rng.random((32, 32))
            errors[rng.random((32, 32)) < 0.3] = 0.0  # plenty of ties
            assert sparsify.ause(errors, errors) == 0.0

    def test_coarse_hand_example(self):
        assert sparsify.ause(ERRORS, -ERRORS, COARSE) == pytest.approx(0.6, abs=1e-12)

    def test_random_ranking_positive(self):
        values = []
        for seed in range(100):
            rng = np.random.default_rng(seed)
            errors = rng.random((64, 64))
            values.append(sparsify.ause(errors, rng.random((64, 64))))
        assert min(values) > 0.0

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(17)
        errors = rng.exponential(1.0, (24, 24))
        unc = rng.random((24, 24))
        ref = sparsify.ause(errors, unc)
        for _ in range(50):
            a, b, p = rng.uniform(0.1, 5.0), rng.uniform(-3, 3), rng.uniform(0.3, 3.0)
            transformed = a * np.power(unc, p) + b
            if rng.random() < 0.5:
                transformed = np.exp(transformed)
            assert sparsify.ause(errors, transformed) == pytest.approx(ref, abs=1e-12)

    def test_all_zero_errors(self, rng):
        with pytest.warns(sparsify.DegenerateErrorWarning):
            result = sparsify.ause_detail(np.zeros((4, 4)), rng.random((4, 4)))
        assert result.value == 0.0 and result.degenerate


class TestEvaluate:
    def test_perfect_scene(self, rng):
        scene = random_scene(rng, 10)
        cams = [look_at((0.0, 0.0, -3.0), up=(0.0, -1.0, 0.0), width=16, height=16)]
        gt = [render(scene, cams[0])]
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            report = sparsify.evaluate_method(scene, cams, gt, [rng.random((16, 16))])
        assert report.per_view_ause == [0.0] and report.degenerate_views == [0]

    def test_mean_is_arithmetic_mean(self, rng):
        errors = [rng.random((10, 10)) for _ in range(5)]
        maps = [rng.random((10, 10)) for _ in range(5)]
        report = sparsify.evaluate_maps(errors, maps)
        assert report.mean_ause == pytest.approx(np.mean([sparsify.ause(e, m) for e, m in zip(errors, maps)]), abs=1e-15)
        assert len(report.per_view_ause) == 5

    def test_misaligned(self, rng):
        with pytest.raises(ValueError):
            sparsify.evaluate_maps([rng.random((4, 4))], [])

    def test_csv_export(self, tmp_path, rng):
        report = sparsify.evaluate_maps([rng.random((8, 8))], [rng.random((8, 8))])
        path = tmp_path / "c.csv"
        sparsify.write_curves_csv(path, report.fractions, report.mean_uncertainty_curve, report.mean_oracle_curve)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["fraction", "mae_uncertainty", "mae_oracle"]
        assert len(rows) == 101
        assert float(rows[1][0]) == 0.0 and float(rows[-1][0]) == pytest.approx(0.99)
