"""Two-stream micro-expression recognition at desk scale.

The pipeline: dense optical flow between apex-centered frames, block-averaged
direction/magnitude features, a residual CNN on the apex frame plus a 2-layer
LSTM on the flow features, fused by L2 normalization into a 3-class softmax.
Includes a synthetic clip generator and LOSO / holdout-database evaluation.
"""

from .adm import block_average, decode_feature, encode_feature, extract_adm, load_feature, save_feature, to_polar
from .dataset import CLASS_ORDER, Class3, Clip, ClipSet, load_manifest, merge_labels, write_manifest
from .evaluation import EvalReport, accuracy, confusion, evaluate, make_splits, score_checkpoint, uar, uf1
from .flow import FlowField, FlowParams, estimate_flow, estimate_flow_sequence
from .model import ATNet, ModelConfig, Prediction, load_checkpoint, save_checkpoint
from .pipeline import DESK_FLOW_PARAMS, TrainingExample, extract_example, extract_examples
from .preprocess import AugmentParams, FrameWindow, augment, normalize_frame, select_window
from .synth import SynthConfig, synth_generate
from .training import TrainConfig, TrainHistory, cross_entropy, lr_schedule, train

__version__ = "0.1.0"

__all__ = [
    "ATNet",
    "AugmentParams",
    "CLASS_ORDER",
    "Class3",
    "Clip",
    "ClipSet",
    "DESK_FLOW_PARAMS",
    "EvalReport",
    "FlowField",
    "FlowParams",
    "FrameWindow",
    "ModelConfig",
    "Prediction",
    "SynthConfig",
    "TrainConfig",
    "TrainHistory",
    "TrainingExample",
    "accuracy",
    "augment",
    "block_average",
    "confusion",
    "cross_entropy",
    "decode_feature",
    "encode_feature",
    "estimate_flow",
    "estimate_flow_sequence",
    "evaluate",
    "extract_adm",
    "extract_example",
    "extract_examples",
    "load_checkpoint",
    "load_feature",
    "load_manifest",
    "lr_schedule",
    "make_splits",
    "merge_labels",
    "normalize_frame",
    "save_checkpoint",
    "save_feature",
    "score_checkpoint",
    "select_window",
    "synth_generate",
    "to_polar",
    "train",
    "uar",
    "uf1",
    "write_manifest",
]
