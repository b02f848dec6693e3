import logging

import numpy as np
import pandas as pd
import pytest

from components.metrics import MetricReport, evaluate_directories, gaussian_window, mae, psnr, ssim
from tests.conftest import write_png


def brute_force_ssim(a, b):
    taps = gaussian_window()
    window = np.outer(taps, taps)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    size = len(taps)
    scores = []
    for x, y in zip(a, b):
        for i in range(x.shape[0] - size + 1):
            for j in range(x.shape[1] - size + 1):
                px, py = x[i:i + size, j:j + size], y[i:i + size, j:j + size]
                mx, my = np.sum(window * px), np.sum(window * py)
                vx = np.sum(window * px * px) - mx * mx
                vy = np.sum(window * py * py) - my * my
                cov = np.sum(window * px * py) - mx * my
                scores.append(((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(scores))


class TestPSNR:
    def test_identical(self, rng):
        img = rng.uniform(size=(3, 8, 8))
        assert psnr(img, img) == float("inf")

    def test_one_level_offset(self):
        a = np.full((3, 4, 4), 100 / 255)
        assert psnr(a, a + 1 / 255) == pytest.approx(48.13, abs=0.01)

    def test_symmetric(self, rng):
        a, b = rng.uniform(size=(2, 3, 8, 8))
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


class TestMAE:
    def test_examples(self):
        assert mae(np.zeros((3, 2, 2)), np.zeros((3, 2, 2))) == 0.0
        assert mae(np.zeros((3, 2, 2)), np.full((3, 2, 2), 0.5)) == pytest.approx(127.5)
        assert mae(np.zeros((3, 2, 2)), np.ones((3, 2, 2))) == pytest.approx(255.0)

    def test_shift_invariant(self, rng):
        a, b = rng.uniform(0.0, 0.5, size=(2, 3, 6, 6))
        assert mae(a + 0.3, b + 0.3) == pytest.approx(mae(a, b))
        assert psnr(a + 0.3, b + 0.3) == pytest.approx(psnr(a, b))


class TestSSIM:
    def test_identical_is_exactly_one(self, rng):
        img = rng.uniform(size=(3, 16, 20))
        assert ssim(img, img) == 1.0

    def test_symmetric(self, rng):
        a, b = rng.uniform(size=(2, 3, 14, 14))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_matches_windowed_sums(self, rng):
        a = rng.uniform(size=(3, 20, 18))
        b = np.clip(a + rng.normal(scale=0.1, size=a.shape), 0, 1)
        assert ssim(a, b) == pytest.approx(brute_force_ssim(a, b), abs=1e-6)

    def test_noise_lowers_the_score(self, rng):
        a = rng.uniform(size=(3, 16, 16))
        slight = np.clip(a + rng.normal(scale=0.02, size=a.shape), 0, 1)
        heavy = np.clip(a + rng.normal(scale=0.3, size=a.shape), 0, 1)
        assert 1.0 > ssim(a, slight) > ssim(a, heavy)

    def test_smaller_than_window(self):
        with pytest.raises(ValueError, match="window"):
            ssim(np.zeros((3, 10, 20)), np.zeros((3, 10, 20)))


class TestMetricReport:
    def test_mean_row(self, rng, tmp_path):
        report = MetricReport()
        for name in ("b.png", "a.png"):
            report.add(name, rng.uniform(size=(3, 12, 12)), rng.uniform(size=(3, 12, 12)))
        table = pd.read_csv(report.to_csv(tmp_path / "report.csv"))
        assert table["filename"].tolist() == ["a.png", "b.png", "mean"]
        assert table["mae"].iloc[-1] == pytest.approx(table["mae"].iloc[:2].mean())
        assert report.means()["psnr"] == pytest.approx(table["psnr"].iloc[:2].mean())


class TestEvaluateDirectories:
    @pytest.fixture
    def folders(self, tmp_path):
        generator = np.random.default_rng(0)
        for index in range(5):
            pixels = generator.integers(0, 256, size=(16, 16, 3))
            write_png(tmp_path / "pred" / f"{index}.png", pixels)
            if index < 4:
                write_png(tmp_path / "gt" / f"{index}.png", pixels)
        return tmp_path / "pred", tmp_path / "gt"

    def test_missing_counterpart_is_excluded(self, folders):
        report, excluded = evaluate_directories(*folders)
        assert len(report.rows) == 4
        assert excluded == ["4.png"]
        means = report.means()
        assert means["mae"] == 0.0
        assert means["ssim"] == 1.0
        assert means["psnr"] == float("inf")

    def test_ground_truth_without_prediction_is_listed(self, folders, caplog):
        pred, gt = folders
        write_png(gt / "9.png", np.zeros((16, 16, 3)))
        with caplog.at_level(logging.WARNING):
            report, excluded = evaluate_directories(pred, gt)
        assert len(report.rows) == 4
        assert excluded == ["4.png", "9.png"]
        assert any("No prediction for 9.png" in record.getMessage() for record in caplog.records)

    def test_threaded(self, folders, monkeypatch):
        monkeypatch.setenv("CURVELIGHT_THREADS", "2")
        report, _ = evaluate_directories(*folders)
        assert [row["filename"] for row in report.rows] == ["0.png", "1.png", "2.png", "3.png"]

    def test_size_mismatch_is_excluded(self, folders):
        pred, gt = folders
        write_png(gt / "0.png", np.zeros((12, 12, 3)))
        report, excluded = evaluate_directories(pred, gt)
        assert len(report.rows) == 3
        assert excluded == ["0.png", "4.png"]
