"""Single training steps and the staged pretraining loop."""

from __future__ import annotations

import contextlib
import logging
import math
import queue
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from ..autodiff import backward, ops
from ..config import CurriculumStage, ModelConfig, PriorConfig, TrainConfig
from ..errors import ConfigError, DomainError, TrainingAborted
from ..prior import derive_seed, generate_dataset
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .network import SicModel, forward_logits, is_encoder_param
from .optim import AdamW, learning_rate

logger = logging.getLogger(__name__)

MAX_CONSECUTIVE_SKIPS = 3
_SPLIT_TRIES = 32


@dataclass
class Task:
    """One dataset split into labelled context rows and query rows."""

    X_ctx: np.ndarray
    t_ctx: np.ndarray
    e_ctx: np.ndarray
    X_qry: np.ndarray
    t_qry: np.ndarray
    e_qry: np.ndarray


def split_context(event, share: tuple[float, float], rng) -> tuple[np.ndarray, np.ndarray]:
    """Random context/query split with at least one event in the context.

    The context share is drawn from ``U(share)``; the permutation is redrawn
    until the context holds an event.
    """
    event = np.asarray(event).astype(bool)
    n = event.size
    if n < 2:
        raise DomainError("split_context: need at least two rows")
    if not event.any():
        raise DomainError("split_context: dataset has no events")
    frac = float(rng.uniform(*share))
    n_ctx = min(max(int(round(frac * n)), 1), n - 1)
    for _ in range(_SPLIT_TRIES):
        perm = rng.permutation(n)
        if event[perm[:n_ctx]].any():
            break
    else:  # extremely rare: swap an event row into the context
        first = int(np.flatnonzero(event[perm])[0])
        perm[[0, first]] = perm[[first, 0]]
    return np.sort(perm[:n_ctx]), np.sort(perm[n_ctx:])


def make_task(ds, share, rng) -> Task:
    ctx, qry = split_context(ds.event, share, rng)
    return Task(ds.X[ctx], ds.time[ctx], ds.event[ctx], ds.X[qry], ds.time[qry], ds.event[qry])


def stage_batch(prior: PriorConfig, stage: CurriculumStage, stage_index: int, step: int,
                seed: int, train: TrainConfig) -> list[Task]:
    """Datasets for one step; a pure function of (seed, stage, step)."""
    size_rng = np.random.default_rng(derive_seed(seed, stage_index, step, 1 << 20))
    if isinstance(stage.samples, (tuple, list)):
        n_rows = int(size_rng.integers(stage.samples[0], stage.samples[1] + 1))
    else:
        n_rows = int(stage.samples)
    tasks = []
    for j in range(stage.datasets_per_step):
        ds_seed = derive_seed(seed, stage_index, step, j)
        ds = generate_dataset(prior, n_rows, ds_seed)
        tasks.append(make_task(ds, train.context_share, np.random.default_rng(ds_seed ^ 0x5EED)))
    return tasks


def task_loss(model: SicModel, task: Task, alpha: float, sigma: float):
    logits, bins = forward_logits(model, task.X_ctx, task.t_ctx, task.e_ctx, task.X_qry)
    return ops.deephit_loss(logits, bins.bin_of(task.t_qry), task.e_qry, alpha, sigma)


def batch_gradients(model: SicModel, batch, alpha: float, sigma: float):
    """Mean loss over the batch and the summed, detached gradient set.

    Each dataset gets its own graph, which is discarded after backward.
    """
    total = 0.0
    grads: dict[str, np.ndarray] = {}
    for task in batch:
        model.zero_grad()
        loss = task_loss(model, task, alpha, sigma)
        value = loss.item()
        if not math.isfinite(value):
            model.zero_grad()
            return value, None
        total += value
        backward(loss)
        for name, p in model.params.items():
            if p.grad is not None:
                g = p.grad / len(batch)
                grads[name] = grads[name] + g if name in grads else g
    model.zero_grad()
    return total / len(batch), grads


def train_step(model: SicModel, batch, optimizer: AdamW, lr: float, alpha: float = 0.5,
               sigma: float = 0.1, encoder_frozen: bool = False) -> float:
    """One optimizer update; returns the pre-update loss.

    A non-finite loss or gradient leaves parameters and optimizer state
    untouched and returns the offending value.
    """
    value, grads = batch_gradients(model, batch, alpha, sigma)
    if grads is None:
        logger.warning("non-finite loss %r, step skipped", value)
        return value
    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        logger.warning("non-finite gradient, step skipped")
        return float("nan")
    trainable = [n for n in model.params if not (encoder_frozen and is_encoder_param(n))]
    optimizer.step(model.params, grads, lr, trainable=trainable)
    return value


class _Producer:
    """Generates upcoming batches in a background thread (bounded queue)."""

    def __init__(self, keys, make, maxsize: int = 2):
        self._q: queue.Queue = queue.Queue(maxsize=maxsize)
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, args=(list(keys), make), daemon=True)
        self._thread.start()

    def _run(self, keys, make):
        for key in keys:
            if self._stop.is_set():
                return
            try:
                item = (key, make(*key), None)
            except Exception as exc:  # handed to the consumer
                item = (key, None, exc)
            while not self._stop.is_set():
                try:
                    self._q.put(item, timeout=0.1)
                    break
                except queue.Full:
                    continue

    def get(self, key):
        got, batch, exc = self._q.get()
        if exc is not None:
            raise exc
        assert got == key
        return batch

    def close(self):
        self._stop.set()
        self._thread.join(timeout=5)


def _plan_dict(stages, prior, train, seed):
    return {
        "stages": [asdict(s) for s in stages],
        "prior": asdict(prior),
        "train": asdict(train),
        "seed": int(seed),
    }


def _jsonable(obj):
    """Round-trip through tuples/lists the way JSON would."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def pretrain(stages: list[CurriculumStage], prior: PriorConfig, seed: int,
             model_config: ModelConfig | None = None, train: TrainConfig | None = None,
             checkpoint_dir=None, resume=None, init_from=None, max_steps: int | None = None,
             deterministic: bool = True, prefetch: bool = True, log_every: int = 50) -> Checkpoint:
    """Run the curriculum stages in order and return the final checkpoint.

    ``resume`` continues from a training checkpoint; ``init_from`` warm-starts
    weights only.  ``max_steps`` stops early after that many optimizer steps
    in this call (used to interrupt and resume).  With ``checkpoint_dir``,
    ``step_XXXXXX.sick`` files are written every ``train.checkpoint_every``
    steps and ``final.sick`` at the end.
    """
    train = (train or TrainConfig()).validate()
    prior = prior.validate()
    if not stages:
        raise ConfigError("pretrain: at least one stage is required")
    for s in stages:
        s.validate()
    plan = _jsonable(_plan_dict(stages, prior, train, seed))
    out_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    if resume is not None:
        ck = resume if isinstance(resume, Checkpoint) else load_checkpoint(resume)
        if ck.train_state is None:
            raise ConfigError("resume checkpoint carries no training state")
        if ck.train_state["plan"] != plan:
            raise ConfigError("resume checkpoint was produced by a different plan")
        model = ck.model
        optimizer = AdamW.for_model(model, betas=train.betas, eps=train.eps,
                                    weight_decay=train.weight_decay, grad_clip=train.grad_clip)
        optimizer.load_state_arrays(ck.optimizer, ck.train_state["optimizer_t"])
        state = dict(ck.train_state)
    else:
        if init_from is not None:
            base = init_from if isinstance(init_from, Checkpoint) else load_checkpoint(init_from)
            model = SicModel.from_arrays(base.model.config, base.model.arrays())
        else:
            model = SicModel.create(model_config or ModelConfig(), seed=derive_seed(seed, 0xC0DE))
        optimizer = AdamW.for_model(model, betas=train.betas, eps=train.eps,
                                    weight_decay=train.weight_decay, grad_clip=train.grad_clip)
        state = {"plan": plan, "stage": 0, "step": 0, "global_step": 0, "optimizer_t": 0,
                 "consecutive_skips": 0, "losses": []}

    def snapshot():
        state["optimizer_t"] = optimizer.t
        return Checkpoint(SicModel.from_arrays(model.config, {k: v.copy() for k, v in model.arrays().items()}),
                          _jsonable(dict(state, losses=list(state["losses"]))),
                          {k: v.copy() for k, v in optimizer.state_arrays().items()})

    def write(ck: Checkpoint, name: str):
        if out_dir is None:
            return None
        opt = AdamW.for_model(ck.model)
        opt.load_state_arrays(ck.optimizer, ck.train_state["optimizer_t"])
        return save_checkpoint(ck.model, out_dir / name, ck.train_state, opt)

    keys = [(k, s) for k in range(state["stage"], len(stages))
            for s in range(state["step"] if k == state["stage"] else 0, stages[k].steps)]
    if max_steps is not None:
        keys = keys[:max_steps]

    def make(k, s):
        return stage_batch(prior, stages[k], k, s, seed, train)

    limits = threadpool_limits(limits=1) if deterministic else contextlib.nullcontext()
    producer = _Producer(keys, make) if prefetch else None
    last_good = snapshot()
    try:
        with limits:
            for k, s in keys:
                stage = stages[k]
                batch = producer.get((k, s)) if producer else make(k, s)
                lr = learning_rate(stage.lr_schedule, s, stage.steps)
                loss = train_step(model, batch, optimizer, lr, train.alpha, train.sigma, stage.encoder_frozen)
                if math.isfinite(loss):
                    state["consecutive_skips"] = 0
                else:
                    state["consecutive_skips"] += 1
                    if state["consecutive_skips"] >= MAX_CONSECUTIVE_SKIPS:
                        path = write(last_good, "last_good.sick")
                        raise TrainingAborted(
                            f"{MAX_CONSECUTIVE_SKIPS} consecutive non-finite losses at stage {k} step {s}",
                            last_good=path or last_good)
                state["losses"].append([k, s, float(loss)])
                state["global_step"] += 1
                state["stage"], state["step"] = (k, s + 1) if s + 1 < stage.steps else (k + 1, 0)
                if log_every and state["global_step"] % log_every == 0:
                    recent = [v for _, _, v in state["losses"][-log_every:] if math.isfinite(v)]
                    logger.info("stage %d step %d lr %.2e loss %.4f", k, s + 1, lr,
                                float(np.mean(recent)) if recent else float("nan"))
                if math.isfinite(loss):
                    if train.checkpoint_every and state["global_step"] % train.checkpoint_every == 0:
                        last_good = snapshot()
                        write(last_good, f"step_{state['global_step']:06d}.sick")
    finally:
        if producer:
            producer.close()
    final = snapshot()
    write(final, "final.sick")
    return final
