"""Plots of run logs"""

from .training_curves import LossLogData, smooth
