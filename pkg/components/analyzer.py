import os
from pathlib import Path
from typing import List

import matplotlib
import numpy as np
import pandas as pd

from .logger import Logger

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

LOSS_COLUMNS = ["L_spa", "L_exp", "L_col", "L_tv", "total"]


class TrainingAnalyzer:
    """
    Turns training histories and ablation runs into tables and plots.

    Key Responsibilities:
    - Summarize the per-iteration history of a run
    - Smooth the total loss with a moving average and measure its reduction
    - Collect one row per l-f-n configuration into the ablation table
    - Plot loss curves for a training run
    """

    def __init__(self, output_prefix: str = "training"):
        self.output_prefix = output_prefix
        Logger.debug(f"TrainingAnalyzer initialized with output_prefix: {output_prefix}", name=__name__)

    def moving_average(self, history: pd.DataFrame, column: str = "total", window: int = 10) -> pd.Series:
        """Trailing moving average; the first window-1 entries average what is available."""
        return history[column].rolling(window=window, min_periods=1).mean()

    def loss_reduction(self, history: pd.DataFrame, window: int = 10, reference_iteration: int = 10) -> float:
        """
        Ratio of the smoothed total loss at the end of training to its value at `reference_iteration`.

        Below 1 means the loss went down.
        """
        if len(history) < reference_iteration:
            Logger.error(f"Need at least {reference_iteration} iterations, got {len(history)}", name=__name__)
            raise ValueError(f"Need at least {reference_iteration} iterations, got {len(history)}")
        smoothed = self.moving_average(history, window=window).to_numpy()
        return float(smoothed[-1] / smoothed[reference_iteration - 1])

    def get_summary_stats(self, history: pd.DataFrame) -> dict:
        if history.empty:
            return {"iterations": 0}
        summary = {"iterations": int(history["iteration"].max())}
        for column in LOSS_COLUMNS:
            if column in history:
                summary[f"{column}_first"] = float(history[column].iloc[0])
                summary[f"{column}_last"] = float(history[column].iloc[-1])
        return summary

    def save_ablation_table(self, rows: List[dict], directory) -> Path:
        """Write one row per configuration to <directory>/ablation.csv."""
        os.makedirs(directory, exist_ok=True)
        path = Path(directory) / "ablation.csv"
        pd.DataFrame(rows).to_csv(path, index=False, encoding="utf-8")
        Logger.info(f"Ablation table with {len(rows)} rows saved to {path}", name=__name__)
        return path

    def plot_history(self, history: pd.DataFrame, validation: pd.DataFrame = None, path=None) -> Path:
        """Plot each loss component and the smoothed total against the iteration index."""
        path = Path(path) if path else Path(f"{self.output_prefix}_losses.png")
        fig, (components, totals) = plt.subplots(1, 2, figsize=(12, 4))

        for column in LOSS_COLUMNS[:-1]:
            if column in history:
                components.plot(history["iteration"], history[column], label=column)
        components.set_xlabel("iteration")
        components.set_yscale("log" if np.all(history[LOSS_COLUMNS[:-1]].to_numpy() > 0) else "linear")
        components.legend()

        totals.plot(history["iteration"], history["total"], alpha=0.3, label="total")
        totals.plot(history["iteration"], self.moving_average(history), label="total (moving avg 10)")
        if validation is not None and not validation.empty:
            per_epoch = history.groupby("epoch")["iteration"].max()
            x = per_epoch.reindex(validation["epoch"]).to_numpy()
            totals.plot(x, validation["val_total"], marker="o", label="validation total")
        totals.set_xlabel("iteration")
        totals.legend()

        fig.tight_layout()
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path)
        plt.close(fig)
        Logger.info(f"Loss plot saved to {path}", name=__name__)
        return path
