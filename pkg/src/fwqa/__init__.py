"""Attention-based multiple-choice video question answering on numpy."""
from .tensor import ShapeError, Tensor, backward, no_grad
from .gradcheck import GradCheckReport, check_model, grad_check
from .models import (KINDS, ModelConfig, answer_question, batch_scores, cross_entropy,
                     forward_scores, init_params, qa_loss, score_qa)
from .optim import AdamState, adam_step, clip_gradients, global_norm
from .data import EmbeddingTable, QAInstance, embed_tokens, prepare, sample_frames
from .dataset import (Discard, DiscardReason, QARecord, build_dataset, classify_question,
                      gen_candidates, split_dataset)
from .metrics import EvalReport, Taxonomy, evaluate, wu_palmer, wups
from .training import EarlyStopping, TrainConfig, predict, train
from .synth import SynthConfig, synth_generate, write_synth

__version__ = "0.1.0"

__all__ = [
    "ShapeError", "Tensor", "backward", "no_grad",
    "GradCheckReport", "check_model", "grad_check",
    "KINDS", "ModelConfig", "answer_question", "batch_scores", "cross_entropy",
    "forward_scores", "init_params", "qa_loss", "score_qa",
    "AdamState", "adam_step", "clip_gradients", "global_norm",
    "EmbeddingTable", "QAInstance", "embed_tokens", "prepare", "sample_frames",
    "Discard", "DiscardReason", "QARecord", "build_dataset", "classify_question",
    "gen_candidates", "split_dataset",
    "EvalReport", "Taxonomy", "evaluate", "wu_palmer", "wups",
    "EarlyStopping", "TrainConfig", "predict", "train",
    "SynthConfig", "synth_generate", "write_synth",
]
