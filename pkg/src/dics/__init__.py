"""Domain-invariant, class-specific feature learning on desk-scale data."""
from .config import TrainConfig, load_config
from .data import Dataset, SyntheticSpec, generate, load_csv, make_batches
from .losses import (
    LabeledBatch,
    LossBreakdown,
    loss_class_specificity,
    loss_classification,
    loss_domain,
    loss_domain_invariance,
    loss_total,
    remove_domain_features,
)
from .memory_queue import InvariantMemoryQueue, queue_new, queue_push_batch, queue_snapshot
from .model import classify, ema_update, encode, prototype_step
from .tensor import check_gradient, cross_entropy, l2_normalize, similarity, softmax
from .train import TrainState, evaluate, sweep_ablation, sweep_queue, train_run, train_step

__all__ = [name for name in dir() if not name.startswith("_")]
