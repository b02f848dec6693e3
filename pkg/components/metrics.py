from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np
import pandas as pd
from scipy.signal import convolve2d

from . import image_io, settings
from .logger import Logger

PIXEL_MAX = 255.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
METRIC_COLUMNS = ["filename", "psnr", "ssim", "mae"]


def _pair(a: np.ndarray, b: np.ndarray, op: str) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(getattr(a, "data", a), dtype=np.float64)
    b = np.asarray(getattr(b, "data", b), dtype=np.float64)
    if a.shape != b.shape:
        Logger.error(f"{op}: image shapes differ: {a.shape} vs {b.shape}", name=__name__)
        raise ValueError(f"{op}: image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB on the 8-bit scale; inf for identical images."""
    a, b = _pair(a, b, "psnr")
    mse = np.mean(((a - b) * PIXEL_MAX) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(PIXEL_MAX ** 2 / mse))


def mae(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute error on the 8-bit scale."""
    a, b = _pair(a, b, "mae")
    return float(np.mean(np.abs(a - b)) * PIXEL_MAX)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 1-D Gaussian taps."""
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    taps = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    return taps / taps.sum()


def _filter_valid(channel: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # symmetric taps, so convolution equals correlation
    return convolve2d(convolve2d(channel, taps[:, None], mode="valid"), taps[None, :], mode="valid")


def _ssim_channel(x: np.ndarray, y: np.ndarray, taps: np.ndarray) -> float:
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    mu_x = _filter_valid(x, taps)
    mu_y = _filter_valid(y, taps)
    var_x = _filter_valid(x * x, taps) - mu_x * mu_x
    var_y = _filter_valid(y * y, taps) - mu_y * mu_y
    cov = _filter_valid(x * y, taps) - mu_x * mu_y
    # numerator and denominator mirror each other so identical inputs give exactly 1
    numerator = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(numerator / denominator))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """
    Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5).

    Computed per RGB channel on the [0, 1] scale over the valid window
    positions, then averaged across channels.

    Raises:
        ValueError: If the shapes differ or the image is smaller than the window
    """
    a, b = _pair(a, b, "ssim")
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.shape[-2] < SSIM_WINDOW or a.shape[-1] < SSIM_WINDOW:
        Logger.error(f"ssim: image {a.shape[-2]}x{a.shape[-1]} is smaller than the "
                     f"{SSIM_WINDOW}x{SSIM_WINDOW} window", name=__name__)
        raise ValueError(f"ssim: image {a.shape[-2]}x{a.shape[-1]} is smaller than the "
                         f"{SSIM_WINDOW}x{SSIM_WINDOW} window")
    taps = gaussian_window()
    return float(np.mean([_ssim_channel(x, y, taps) for x, y in zip(a, b)]))


@dataclass
class MetricReport:
    """Per-image PSNR/SSIM/MAE rows plus a final mean row."""
    rows: List[dict] = field(default_factory=list)

    def add(self, filename: str, pred: np.ndarray, gt: np.ndarray) -> dict:
        row = {"filename": filename, "psnr": psnr(pred, gt), "ssim": ssim(pred, gt), "mae": mae(pred, gt)}
        self.rows.append(row)
        return row

    def to_dataframe(self) -> pd.DataFrame:
        df = pd.DataFrame(self.rows, columns=METRIC_COLUMNS).sort_values("filename", kind="stable")
        means = {"filename": "mean", **{col: df[col].mean() for col in METRIC_COLUMNS[1:]}}
        return pd.concat([df, pd.DataFrame([means])], ignore_index=True)

    def means(self) -> dict:
        return self.to_dataframe().iloc[-1].to_dict()

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_dataframe().to_csv(path, index=False, encoding="utf-8")
        Logger.info(f"Metric report with {len(self.rows)} images saved to {path}", name=__name__)
        return path


def _score_pair(pred_path: Path, gt_path: Path) -> dict:
    pred, gt = image_io.load(pred_path), image_io.load(gt_path)
    return {"filename": pred_path.name, "psnr": psnr(pred, gt), "ssim": ssim(pred, gt), "mae": mae(pred, gt)}


def evaluate_directories(pred_dir, gt_dir) -> Tuple[MetricReport, List[str]]:
    """
    Score every prediction against the ground truth file of the same name.

    Files present on only one side, and pairs that fail to decode or
    differ in size, are logged and left out.

    Returns:
        tuple: (MetricReport, names that were left out)
    """
    gt_dir = Path(gt_dir)
    predictions = image_io.list_images(pred_dir)
    pairs, missing = [], []
    for pred_path in predictions:
        gt_path = gt_dir / pred_path.name
        if gt_path.is_file():
            pairs.append((pred_path, gt_path))
        else:
            Logger.warning(f"No ground truth for {pred_path.name}; excluded", name=__name__)
            missing.append(pred_path.name)
    predicted = {p.name for p in predictions}
    for gt_path in image_io.list_images(gt_dir):
        if gt_path.name not in predicted:
            Logger.warning(f"No prediction for {gt_path.name}; excluded", name=__name__)
            missing.append(gt_path.name)

    Logger.info(f"Evaluating {len(pairs)} image pairs ({len(missing)} without counterpart)", name=__name__)
    report = MetricReport()
    workers = settings.worker_count()

    def score(pair):
        try:
            return _score_pair(*pair)
        except (image_io.ImageIOError, ValueError, OSError) as e:
            Logger.warning(f"Failed to score {pair[0].name}: {e}", name=__name__)
            return None

    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(score, pairs))
    else:
        results = [score(pair) for pair in pairs]

    for pair, row in zip(pairs, results):
        if row is None:
            missing.append(pair[0].name)
        else:
            report.rows.append(row)
    return report, sorted(missing)
