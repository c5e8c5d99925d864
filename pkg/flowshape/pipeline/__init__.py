"""Datasets, training, sequence inference, evaluation and ablation runners"""

from .config import (DatasetConfig, InferenceConfig, MetricsConfig, RunConfig, TrainConfig, config_from_dict,
                     latent_length_at)
from .frames import select_frames, visible_counts
from .refine import refine_instance_points
from .models import load_flow, load_vae, save_model
from .dataset import DatasetBuilder, DatasetRecord, build_dataset, generate_recordings, load_dataset
from .trainer import FlowTrainer, LossLog, VaeTrainer, read_loss_log
from .inference import SequenceInference, infer_sequence
from .evaluation import Evaluator, collect_pairs, evaluate
from .ablation import ABLATIONS, AblationRunner
