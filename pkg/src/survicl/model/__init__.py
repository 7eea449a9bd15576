"""In-context survival model: network, optimizer, training and checkpoints."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .network import SicModel, canonical_order, cell_inputs, embed_context, forward_logits, predict
from .optim import AdamW, learning_rate
from .train import Task, batch_gradients, make_task, pretrain, split_context, stage_batch, task_loss, train_step

__all__ = [
    "AdamW",
    "Checkpoint",
    "SicModel",
    "Task",
    "batch_gradients",
    "canonical_order",
    "cell_inputs",
    "embed_context",
    "forward_logits",
    "learning_rate",
    "load_checkpoint",
    "make_task",
    "predict",
    "pretrain",
    "save_checkpoint",
    "split_context",
    "stage_batch",
    "task_loss",
    "train_step",
]
