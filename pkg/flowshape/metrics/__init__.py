"""Evaluation metrics: Chamfer, normal consistency, F-score"""

from .distances import chamfer_l2, f_score, normal_consistency, precision_recall
from .report import DEFAULT_TAU, MetricsReport, MetricsTable, evaluate_object, read_metrics_csv
