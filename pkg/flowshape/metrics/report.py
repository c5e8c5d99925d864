import csv
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from flowshape.common.utils import make_rng
from flowshape.geometry.mesh import TriMesh
from flowshape.geometry.ndc import normalize_mesh, normalize_to_ndc
from flowshape.geometry.sampling import sample_surface_uniform
from flowshape.metrics.distances import nearest, normal_consistency, precision_recall

log = logging.getLogger(__name__)

# 1% of the NDC cube side (2 units)
DEFAULT_TAU = 0.02
DEFAULT_SAMPLES = 10000

CSV_FIELDS = ["id", "cd", "cd_x100", "nc", "f1", "precision", "recall", "n_samples", "ablation_tag", "flag"]


@dataclass
class MetricsReport:
    """Reconstruction quality in normalized (ground truth NDC) coordinates."""
    cd: float
    nc: float
    f1: float
    n_samples: int
    precision: float = 0.0
    recall: float = 0.0
    one_sided: bool = False
    flag: str = ""

    @property
    def cd_x100(self) -> float:
        return self.cd * 100.0

    @classmethod
    def failed(cls, n_samples: int, flag: str) -> "MetricsReport":
        return cls(cd=math.inf, nc=0.0, f1=0.0, n_samples=n_samples, flag=flag)

    def row(self, object_id: str, ablation_tag: str = "") -> dict:
        return {
            'id': object_id, 'cd': self.cd, 'cd_x100': self.cd_x100, 'nc': self.nc, 'f1': self.f1,
            'precision': self.precision, 'recall': self.recall, 'n_samples': self.n_samples,
            'ablation_tag': ablation_tag, 'flag': self.flag,
        }


def evaluate_object(pred: TriMesh, gt: TriMesh, n: int = DEFAULT_SAMPLES, seed: int = 0,
                    tau: float = DEFAULT_TAU, one_sided: bool = False) -> MetricsReport:
    """Score a predicted mesh against ground truth in the ground truth's NDC frame.

    Both meshes are sampled with the same seed, so identical meshes score perfectly.
    With ``one_sided`` only ground-truth-to-prediction terms are used (recall-style
    evaluation for incomplete references); ``f1`` then holds the recall.
    """
    if pred.is_empty:
        log.warning("Empty prediction mesh: reporting sentinel metrics")
        return MetricsReport.failed(n, "empty_prediction")
    _, transform = normalize_to_ndc(gt.vertices)
    pred_samples = sample_surface_uniform(normalize_mesh(pred, transform), n, seed)
    gt_samples = sample_surface_uniform(normalize_mesh(gt, transform), n, seed)

    if one_sided:
        dist, idx = nearest(gt_samples.points, pred_samples.points)
        nc = float(np.abs(np.sum(gt_samples.normals * pred_samples.normals[idx], axis=1)).mean())
        recall = float(np.mean(dist < tau))
        return MetricsReport(cd=float(dist.mean()), nc=nc, f1=recall, n_samples=n, recall=recall, one_sided=True)

    dist_pg, _ = nearest(pred_samples.points, gt_samples.points)
    dist_gp, _ = nearest(gt_samples.points, pred_samples.points)
    cd = 0.5 * (float(dist_pg.mean()) + float(dist_gp.mean()))
    nc = normal_consistency(pred_samples.points, pred_samples.normals, gt_samples.points, gt_samples.normals)
    precision, recall = precision_recall(pred_samples.points, gt_samples.points, tau)
    f1 = 0.0 if precision + recall == 0 else 2.0 * precision * recall / (precision + recall)
    return MetricsReport(cd=cd, nc=nc, f1=f1, n_samples=n, precision=precision, recall=recall)


@dataclass
class MetricsTable:
    """Per-object rows plus a mean row, written as CSV."""
    tau: float = DEFAULT_TAU
    rows: List[dict] = field(default_factory=list)

    def add(self, object_id: str, report: MetricsReport, ablation_tag: str = "") -> None:
        self.rows.append(report.row(object_id, ablation_tag))

    def aggregate(self, ablation_tag: str = "") -> dict:
        mean = {'id': 'mean', 'ablation_tag': ablation_tag, 'flag': ''}
        for key in ("cd", "cd_x100", "nc", "f1", "precision", "recall"):
            mean[key] = float(np.mean([r[key] for r in self.rows])) if self.rows else math.nan
        mean['n_samples'] = self.rows[0]['n_samples'] if self.rows else 0
        return mean

    def median_cd(self) -> float:
        return float(np.median([r['cd'] for r in self.rows])) if self.rows else math.nan

    def write_csv(self, path: str, ablation_tag: Optional[str] = None) -> None:
        tags = sorted({r['ablation_tag'] for r in self.rows}) if ablation_tag is None else [ablation_tag]
        with open(path, "w", newline="") as file:
            file.write(f"# cd: mean of directional mean euclidean nearest-neighbour distances (NDC units)\n")
            file.write(f"# f1: tau={self.tau} NDC units (1% of the cube side)\n")
            writer = csv.DictWriter(file, fieldnames=CSV_FIELDS)
            writer.writeheader()
            for tag in tags or [""]:
                subset = [r for r in self.rows if r['ablation_tag'] == tag]
                for row in subset:
                    writer.writerow(row)
                writer.writerow(MetricsTable(self.tau, subset).aggregate(tag))


def read_metrics_csv(path: str) -> List[dict]:
    with open(path, "r", newline="") as file:
        lines = [line for line in file if not line.startswith("#")]
    return list(csv.DictReader(lines))


def sample_seed(seed: int, object_index: int) -> int:
    return int(make_rng(seed, object_index).integers(0, 2**31 - 1))
