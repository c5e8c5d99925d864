#!/usr/bin/env python3

import csv
import logging

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

log = logging.getLogger(__name__)


def smooth(values, window: int = 100) -> np.ndarray:
    """Trailing moving average; the first ``window - 1`` entries average what is available."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0:
        return values
    cumsum = np.cumsum(np.insert(values, 0, 0.0))
    idx = np.arange(1, len(values) + 1)
    start = np.maximum(idx - window, 0)
    return (cumsum[idx] - cumsum[start]) / (idx - start)


class LossLogData():
    """
    Training loss log database
    """
    def __init__(self, csv_filename, window: int = 100):
        """
        Constructor
        """
        self.csv_filename = csv_filename
        self.window = window
        self.csv_report = []
        self.prof = {}
        self.read_csv_report()
        self.create_profile()

    def read_csv_report(self) -> int:
        """
        Parse the csv report
        """
        with open(self.csv_filename, newline="") as csvfile:
            self.csv_report = list(csv.reader(csvfile))
        if not self.csv_report:
            raise ValueError(f"Loss log {self.csv_filename} is empty")
        return 0

    def create_profile(self) -> int:
        """
        Create profiling dictionary of columns
        """
        header, rows = self.csv_report[0], self.csv_report[1:]
        for col, key in enumerate(header):
            self.prof[key] = np.array([float(row[col]) for row in rows])
        log.debug("Read %d rows from %s", len(rows), self.csv_filename)
        return 0

    @property
    def steps(self) -> np.ndarray:
        return self.prof["step"]

    def smoothed_loss(self) -> np.ndarray:
        return smooth(self.prof["loss"], self.window)

    def plot_loss(self) -> int:
        """
        Plot raw and smoothed loss
        """
        plt.plot(self.steps, self.prof["loss"], color="tab:blue", alpha=0.3, label="loss")
        plt.plot(self.steps, self.smoothed_loss(), color="tab:blue", label=f"loss (window {self.window})")
        if "mse" in self.prof:
            plt.plot(self.steps, smooth(self.prof["mse"], self.window), color="tab:orange", label="sdf mse")
        plt.yscale("log")
        plt.ylabel("Loss")
        plt.grid()
        plt.legend(loc=0, fontsize="6")
        return 0

    def plot_latent_length(self) -> int:
        """
        Plot the latent length schedule
        """
        plt.step(self.steps, self.prof["latent_length"], where="post", color="tab:green")
        plt.ylabel("Latent length")
        plt.grid()
        return 0

    def plot_memory(self) -> int:
        """
        Plot resident memory
        """
        plt.plot(self.steps, self.prof["rss_mb"], color="tab:red")
        plt.ylabel("RSS (MiB)")
        plt.xlabel("Step")
        plt.grid()
        return 0

    def save(self, png_filename: str) -> int:
        """
        Draw all panels into one figure
        """
        panels = [self.plot_loss, self.plot_latent_length, self.plot_memory]
        fig = plt.figure(figsize=(8, 2.5 * len(panels)))
        for sbp, panel in enumerate(panels, start=1):
            plt.subplot(len(panels), 1, sbp)
            panel()
        fig.tight_layout()
        fig.savefig(png_filename)
        plt.close(fig)
        log.info(f"Saved training curves to {png_filename}")
        return 0
