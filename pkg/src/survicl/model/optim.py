"""AdamW with global-norm clipping, and the stage learning-rate schedules."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError


def learning_rate(schedule: dict, step: int, total: int) -> float:
    """Learning rate at 0-based ``step`` of a stage lasting ``total`` steps."""
    kind = schedule.get("kind")
    if kind == "constant":
        return float(schedule["value"])
    if kind == "cosine":
        peak = float(schedule["peak"])
        warmup = int(schedule.get("warmup", 0))
        if step < warmup:
            return peak * (step + 1) / warmup
        span = max(total - warmup, 1)
        return peak * 0.5 * (1.0 + math.cos(math.pi * (step - warmup) / span))
    if kind == "polynomial":
        start, end = float(schedule["start"]), float(schedule["end"])
        power = float(schedule.get("power", 1.0))
        frac = 1.0 - step / max(total, 1)
        return (start - end) * frac**power + end
    raise ConfigError(f"unknown lr schedule kind {kind!r}")


class AdamW:
    """Decoupled weight decay Adam.  Moments are stored as float32 so the
    full optimizer state fits the checkpoint format; updates run in float64."""

    def __init__(self, names, shapes, betas=(0.9, 0.95), eps=1e-8, weight_decay=0.01, grad_clip=1.0):
        self.betas = (float(betas[0]), float(betas[1]))
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.grad_clip = grad_clip
        self.t = 0
        self.m = {n: np.zeros(s, dtype=np.float32) for n, s in zip(names, shapes)}
        self.v = {n: np.zeros(s, dtype=np.float32) for n, s in zip(names, shapes)}

    @classmethod
    def for_model(cls, model, **kw) -> "AdamW":
        names = list(model.params)
        return cls(names, [model.params[n].shape for n in names], **kw)

    def step(self, params: dict, grads: dict, lr: float, trainable=None) -> float:
        """Apply one update in place; returns the pre-clip global gradient norm.

        ``grads`` maps parameter names to float64 arrays; names outside
        ``trainable`` are left untouched (moments included).
        """
        names = [n for n in params if (trainable is None or n in trainable) and n in grads]
        norm = math.sqrt(sum(float(np.sum(grads[n] * grads[n])) for n in names))
        clip = 1.0
        if self.grad_clip and norm > self.grad_clip:
            clip = self.grad_clip / norm
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for n in names:
            g = grads[n] * clip
            m = b1 * self.m[n].astype(np.float64) + (1.0 - b1) * g
            v = b2 * self.v[n].astype(np.float64) + (1.0 - b2) * g * g
            self.m[n] = m.astype(np.float32)
            self.v[n] = v.astype(np.float32)
            p = params[n].data.astype(np.float64)
            update = (m / c1) / (np.sqrt(v / c2) + self.eps) + self.weight_decay * p
            params[n].data = (p - lr * update).astype(np.float32)
        return norm

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for n in self.m:
            out[f"adam.m/{n}"] = self.m[n]
            out[f"adam.v/{n}"] = self.v[n]
        return out

    def load_state_arrays(self, arrays: dict, t: int) -> None:
        for n in self.m:
            self.m[n] = np.asarray(arrays[f"adam.m/{n}"], dtype=np.float32)
            self.v[n] = np.asarray(arrays[f"adam.v/{n}"], dtype=np.float32)
        self.t = int(t)
