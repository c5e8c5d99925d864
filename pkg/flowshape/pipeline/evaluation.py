import glob
import logging
import os
import sys
from typing import List, Tuple

from flowshape.geometry.mesh import load_obj
from flowshape.metrics.report import MetricsReport, MetricsTable, evaluate_object, sample_seed
from flowshape.pipeline.config import MetricsConfig, RunConfig

logger = logging.getLogger(__name__)


def _obj_ids(directory: str) -> List[str]:
    names = [os.path.splitext(os.path.basename(p))[0] for p in glob.glob(os.path.join(directory, "*.obj"))]
    return sorted(names, key=lambda n: (0, int(n), n) if n.isdigit() else (1, 0, n))


def _pred_path(pred_dir: str, object_id: str) -> str:
    nested = os.path.join(pred_dir, "objects", object_id + ".obj")
    return nested if os.path.isdir(os.path.join(pred_dir, "objects")) else os.path.join(pred_dir, object_id + ".obj")


def collect_pairs(pred_dir: str, gt_dir: str) -> List[Tuple[str, str, str]]:
    """(id, prediction path, ground truth path) triples.

    ``gt_dir`` is a directory of OBJ files, a recording (meshes under ``gt/``) or
    a directory of recordings, in which case ids read ``<recording>/<object>``
    and predictions are looked up in the matching sub-directory of ``pred_dir``.
    """
    if os.path.isdir(os.path.join(gt_dir, "gt")):
        return collect_pairs(pred_dir, os.path.join(gt_dir, "gt"))
    flat = _obj_ids(gt_dir)
    if flat:
        return [(oid, _pred_path(pred_dir, oid), os.path.join(gt_dir, oid + ".obj")) for oid in flat]
    pairs = []
    for name in sorted(os.listdir(gt_dir)):
        if os.path.isdir(os.path.join(gt_dir, name, "gt")):
            pairs += [(f"{name}/{oid}", pred, gt)
                      for oid, pred, gt in collect_pairs(os.path.join(pred_dir, name), os.path.join(gt_dir, name))]
    return pairs


def evaluate(pred_dir: str, gt_dir: str, options: MetricsConfig = None, seed: int = 0, ablation_tag: str = "",
             table: MetricsTable = None) -> MetricsTable:
    """Score id-matched meshes; a missing prediction yields a flagged sentinel row."""
    options = options or MetricsConfig()
    table = table if table is not None else MetricsTable(options.tau)
    for index, (object_id, pred_path, gt_path) in enumerate(collect_pairs(pred_dir, gt_dir)):
        if not os.path.isfile(pred_path):
            logger.warning(f"No prediction for {object_id} ({pred_path})")
            table.add(object_id, MetricsReport.failed(options.n_samples, "missing_prediction"), ablation_tag)
            continue
        report = evaluate_object(load_obj(pred_path), load_obj(gt_path), options.n_samples,
                                 sample_seed(seed, index), options.tau, options.one_sided)
        table.add(object_id, report, ablation_tag)
    return table


class Evaluator:
    """Runner of the ``eval`` command."""

    def __init__(self, args, config: RunConfig):
        self.pred_dir, self.gt_dir = args.pred, args.gt
        self.save_dir = args.out
        self.seed = args.seed
        self.options = config.metrics
        if getattr(args, "one_sided", False):
            self.options.one_sided = True

        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG if args.verbose else logging.INFO)
        os.makedirs(self.save_dir, exist_ok=True)

    def run(self) -> MetricsTable:
        logger.info(f"Evaluating {self.pred_dir} against {self.gt_dir}")
        table = evaluate(self.pred_dir, self.gt_dir, self.options, self.seed)
        path = os.path.join(self.save_dir, "metrics.csv")
        table.write_csv(path)
        mean = table.aggregate()
        logger.info(f"{len(table.rows)} objects: CDx100 {mean['cd_x100']:.3f}, NC {mean['nc']:.3f}, "
                    f"F1 {mean['f1']:.3f}, written to {path}")
        logger.info("Exiting...")
        return table
