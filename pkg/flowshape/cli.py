"""Command line front end of the flowshape toolkit.

Every command writes its resolved ``config.json`` and a ``run_context.json``
into ``--out`` before running.
"""

import argparse
import logging
import os
import sys

from flowshape._version import __version__
from flowshape.common.utils import gather_run_context, write_json
from flowshape.exceptions import FlowshapeError
from flowshape.pipeline.ablation import ABLATIONS, AblationRunner
from flowshape.pipeline.config import RunConfig
from flowshape.pipeline.dataset import DatasetBuilder
from flowshape.pipeline.evaluation import Evaluator
from flowshape.pipeline.inference import SequenceInference
from flowshape.pipeline.trainer import FlowTrainer, VaeTrainer
from flowshape.visualization.training_curves import LossLogData

log = logging.getLogger(__name__)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=0, help='Root seed of the run')
    common.add_argument('--config', default=None, help='JSON config file, defaults apply to missing keys')
    common.add_argument('--out', default='.', help='Output directory')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='Override one config value, e.g. --set vae.beta=0.01 (repeatable)')
    common.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    return common


def get_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog='flowshape', description='Conditional metric 3D shape generation '
                                     'from posed frames, semi-dense points and captions')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    gen = sub.add_parser('gen-data', parents=[common], help='Simulate recordings or build a training dataset')
    gen.add_argument('--stage', type=int, choices=(1, 2), default=None,
                     help='Training dataset stage; without it held-out recordings are written')
    gen.add_argument('--vae', default=None, help='VAE checkpoint prefix for target latents')
    gen.add_argument('--scenes', type=int, default=None, help='Number of scenes')
    gen.add_argument('--objects', type=int, default=None, help='Objects per scene')

    vae = sub.add_parser('train-vae', parents=[common], help='Train the shape VAE')
    vae.add_argument('--resume', action='store_true', help='Continue from <out>/checkpoints/vae-last')

    flow = sub.add_parser('train-flow', parents=[common], help='Train the flow model for one curriculum stage')
    flow.add_argument('--stage', type=int, choices=(1, 2), required=True)
    flow.add_argument('--data', required=True, help='Dataset directory built by gen-data')
    flow.add_argument('--init', default=None, help='Stage 1 checkpoint prefix to fine-tune from')
    flow.add_argument('--resume', action='store_true', help='Continue from <out>/checkpoints/flow-last')
    flow.add_argument('--no-image-aug', action='store_true', help='Disable image augmentation')
    flow.add_argument('--no-point-aug', action='store_true', help='Disable point augmentation')
    flow.add_argument('--single-stage', action='store_true', help='Train stage 2 without stage 1 weights')

    infer = sub.add_parser('infer', parents=[common], help='Reconstruct every object of a recording')
    infer.add_argument('--recording', required=True, help='Recording directory or directory of recordings')
    infer.add_argument('--vae', required=True)
    infer.add_argument('--flow', required=True)
    infer.add_argument('--steps', type=int, default=None, help='Sampler steps')
    infer.add_argument('--no-points', action='store_true')
    infer.add_argument('--no-point-masks', action='store_true')
    infer.add_argument('--no-images', action='store_true')
    infer.add_argument('--no-text', action='store_true')
    infer.add_argument('--unconditional', action='store_true')

    ev = sub.add_parser('eval', parents=[common], help='Score predicted meshes against ground truth')
    ev.add_argument('--pred', required=True)
    ev.add_argument('--gt', required=True)
    ev.add_argument('--one-sided', action='store_true', help='Ground truth to prediction terms only')

    ab = sub.add_parser('ablate', parents=[common], help='Infer and score with each conditioning toggle')
    ab.add_argument('--recording', required=True)
    ab.add_argument('--vae', required=True)
    ab.add_argument('--flow', required=True)
    ab.add_argument('--tags', nargs='*', default=None, choices=list(ABLATIONS))
    ab.add_argument('--variant', action='append', default=[], metavar='TAG=PREFIX',
                    help='Extra flow checkpoint evaluated with all pathways on (repeatable)')

    plot = sub.add_parser('plot-log', parents=[common], help='Plot a training loss log')
    plot.add_argument('--log', required=True, help='CSV loss log')
    plot.add_argument('--window', type=int, default=100)
    return parser


def resolve_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    for assignment in args.overrides:
        config.override(assignment)
    config.seed = args.seed
    if args.command == 'infer':
        inference = config.inference
        inference.steps = args.steps or inference.steps
        inference.use_points &= not args.no_points
        inference.use_masks &= not args.no_point_masks
        inference.use_images &= not args.no_images
        inference.use_text &= not args.no_text
        inference.unconditional |= args.unconditional
    config.validate()
    return config


RUNNERS = {
    'gen-data': DatasetBuilder,
    'train-vae': VaeTrainer,
    'train-flow': FlowTrainer,
    'infer': SequenceInference,
    'eval': Evaluator,
    'ablate': AblationRunner,
}


def main(argv=None) -> int:
    args = get_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stdout, level=logging.DEBUG if args.verbose else logging.INFO)
    try:
        config = resolve_config(args)
        os.makedirs(args.out, exist_ok=True)
        config.save_resolved(os.path.join(args.out, 'config.json'))
        write_json(os.path.join(args.out, 'run_context.json'), {'command': args.command, 'argv': sys.argv,
                                                                 **gather_run_context()})
        if args.command == 'plot-log':
            LossLogData(args.log, args.window).save(os.path.join(args.out, os.path.splitext(
                os.path.basename(args.log))[0] + '.png'))
            return 0
        RUNNERS[args.command](args, config).run()
    except FlowshapeError as err:
        log.error(f"{type(err).__name__}: {err}")
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
