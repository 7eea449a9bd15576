"""The toy in-context survival network.

Per dataset the forward pass is:

1. canonical ordering of context rows and feature columns, so that row or
   column permutations of the input give bit-identical computations;
2. per-cell inputs from context-only column statistics, fed to a shared
   cell MLP;
3. a row encoder (attention over feature tokens plus a CLS token) pooled
   to one vector per row;
4. context rows add ``time_emb(t) * event_emb(e)``; query rows get nothing;
5. dataset attention where every row attends to context rows only;
6. a head producing one logit per time bin for each query row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, no_grad, ops
from ..config import ModelConfig
from ..dataset import SurvivalDataset
from ..deephit import DiscreteSurvival, pmf_from_logits
from ..errors import DomainError, ShapeError
from ..stats import BinEdges, quantile_bins

N_CELL_INPUTS = 10
Z_CLIP = 8.0


# ---------------------------------------------------------------- parameters

def _dense(rng, fan_in, fan_out):
    return rng.normal(0.0, 1.0 / math.sqrt(fan_in), (fan_in, fan_out))


def init_params(config: ModelConfig, seed) -> dict[str, np.ndarray]:
    """Scaled-normal weights, zero biases, unit layer-norm gains."""
    config.validate()
    rng = np.random.default_rng(seed)
    d, ff = config.d_model, config.d_model * config.ff_mult
    p: dict[str, np.ndarray] = {}

    def block(prefix):
        p[f"{prefix}.ln1.g"] = np.ones(d)
        p[f"{prefix}.ln1.b"] = np.zeros(d)
        for k in ("q", "k", "v", "o"):
            p[f"{prefix}.attn.w{k}"] = _dense(rng, d, d)
        p[f"{prefix}.ln2.g"] = np.ones(d)
        p[f"{prefix}.ln2.b"] = np.zeros(d)
        p[f"{prefix}.ff.w1"] = _dense(rng, d, ff)
        p[f"{prefix}.ff.b1"] = np.zeros(ff)
        p[f"{prefix}.ff.w2"] = _dense(rng, ff, d) * 0.5
        p[f"{prefix}.ff.b2"] = np.zeros(d)

    p["cell.w1"] = _dense(rng, N_CELL_INPUTS, d)
    p["cell.b1"] = np.zeros(d)
    p["cell.w2"] = _dense(rng, d, d)
    p["cell.b2"] = np.zeros(d)
    p["cls"] = rng.normal(0.0, 1.0, d)
    for i in range(config.n_row_layers):
        block(f"row{i}")
    p["row.ln.g"] = np.ones(d)
    p["row.ln.b"] = np.zeros(d)

    if config.time_event_variant == "prose":
        p["time.w1"] = _dense(rng, 1, d)
        p["time.b1"] = rng.normal(0.0, 1.0, d)
        p["time.w2"] = _dense(rng, d, d)
        p["time.b2"] = np.zeros(d)
        p["event.w"] = rng.normal(0.0, 1.0, (2, d))
    else:
        p["time.w"] = rng.normal(0.0, 1.0, (config.n_bins, d))
        p["event.w1"] = _dense(rng, 2, d)
        p["event.b1"] = np.zeros(d)
        p["event.w2"] = _dense(rng, d, d)
        p["event.b2"] = np.zeros(d)

    for i in range(config.n_dataset_layers):
        block(f"ds{i}")
    p["head.ln.g"] = np.ones(d)
    p["head.ln.b"] = np.zeros(d)
    p["head.w1"] = _dense(rng, d, d)
    p["head.b1"] = np.zeros(d)
    p["head.w2"] = _dense(rng, d, config.n_bins) * 0.1
    p["head.b2"] = np.zeros(config.n_bins)
    return {k: v.astype(np.float32) for k, v in p.items()}


ENCODER_PREFIXES = ("cell.", "cls", "row")


def is_encoder_param(name: str) -> bool:
    return name.startswith(ENCODER_PREFIXES)


@dataclass
class SicModel:
    config: ModelConfig
    params: dict[str, Tensor]

    @classmethod
    def create(cls, config: ModelConfig | None = None, seed=0) -> "SicModel":
        config = config or ModelConfig()
        arrays = init_params(config, seed)
        return cls(config, {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()})

    @classmethod
    def from_arrays(cls, config: ModelConfig, arrays: dict[str, np.ndarray]) -> "SicModel":
        expected = init_params(config, 0)
        if set(arrays) != set(expected):
            missing = sorted(set(expected) - set(arrays))
            extra = sorted(set(arrays) - set(expected))
            raise ShapeError(f"parameter set (missing {missing}, unexpected {extra})", (), ())
        for k, v in arrays.items():
            if v.shape != expected[k].shape:
                raise ShapeError(f"parameter {k}", v.shape, expected[k].shape)
        return cls(config, {k: Tensor(np.asarray(arrays[k], dtype=np.float32), True, k) for k in expected})

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def n_parameters(self) -> int:
        return int(sum(t.size for t in self.params.values()))

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()


# ---------------------------------------------------------- canonical inputs

def canonical_order(X_ctx, t_ctx, e_ctx, X_qry):
    """Row order for the context and column order for the features that do
    not depend on how either was permuted on input."""
    n_c, p = X_ctx.shape
    row_sorted = np.sort(X_ctx, axis=1)
    keys = [row_sorted[:, j] for j in range(p - 1, -1, -1)] + [e_ctx, t_ctx]
    rows = np.lexsort(keys) if keys else np.arange(n_c)
    if p > 1:
        ctx_cols = X_ctx[rows]
        q_sorted = np.sort(X_qry, axis=0)
        key_matrix = np.concatenate([ctx_cols, q_sorted], axis=0)
        cols = np.lexsort(key_matrix[::-1])
    else:
        cols = np.arange(p)
    # refine the row order using canonical columns (breaks residual ties)
    Xc = X_ctx[:, cols]
    keys = [Xc[:, j] for j in range(p - 1, -1, -1)] + [e_ctx, t_ctx]
    rows = np.lexsort(keys)
    return rows, cols


def _risk_set_score(z, t, e):
    """Standardised univariate Cox score statistic (Breslow risk sets) and
    its per-event effect size."""
    order = np.argsort(t, kind="stable")
    z, t, e = z[order], t[order], e[order].astype(bool)
    n_ev = int(e.sum())
    if n_ev == 0:
        return 0.0, 0.0
    s0 = np.cumsum(np.ones_like(z)[::-1])[::-1]
    s1 = np.cumsum(z[::-1])[::-1]
    s2 = np.cumsum((z * z)[::-1])[::-1]
    start = np.searchsorted(t, t[e], side="left")
    m = s1[start] / s0[start]
    v = np.maximum(s2[start] / s0[start] - m * m, 0.0)
    U = float(np.sum(z[e] - m))
    V = float(np.sum(v))
    stat = U / math.sqrt(V) if V > 1e-12 else 0.0
    return stat / math.sqrt(n_ev), stat


def _slog(x):
    return np.sign(x) * np.log1p(np.abs(x))


def cell_inputs(X_ctx, t_ctx, e_ctx, X_qry) -> np.ndarray:
    """(n_ctx + n_qry, p, N_CELL_INPUTS) features with context-only statistics."""
    n_c, p = X_ctx.shape
    X_all = np.concatenate([X_ctx, X_qry], axis=0)
    out = np.zeros((X_all.shape[0], p, N_CELL_INPUTS))
    for j in range(p):
        col = X_ctx[:, j]
        mu = float(col.mean())
        sd = float(col.std())
        sd_ok = sd > 1e-12 * max(1.0, abs(mu))
        z_all = np.clip((X_all[:, j] - mu) / sd, -Z_CLIP, Z_CLIP) if sd_ok else np.zeros(X_all.shape[0])
        srt = np.sort(col)
        lo = np.searchsorted(srt, X_all[:, j], side="left")
        hi = np.searchsorted(srt, X_all[:, j], side="right")
        r_all = (lo + hi) / (2.0 * n_c) - 0.5
        zc = z_all[:n_c]
        q_all = z_all * z_all - float(np.mean(zc * zc))
        q_sd = float(np.std(q_all[:n_c]))
        q_all = np.clip(q_all / q_sd, -Z_CLIP, Z_CLIP) if q_sd > 1e-12 else np.zeros_like(q_all)
        a1, s1 = _risk_set_score(zc, t_ctx, e_ctx) if sd_ok else (0.0, 0.0)
        a2, s2 = _risk_set_score(q_all[:n_c], t_ctx, e_ctx) if sd_ok else (0.0, 0.0)
        out[:, j, 0] = z_all
        out[:, j, 1] = r_all
        out[:, j, 2] = a1
        out[:, j, 3] = math.tanh(s1 / 4.0)
        out[:, j, 4] = a2
        out[:, j, 5] = math.tanh(s2 / 4.0)
        out[:, j, 6] = a1 * z_all
        out[:, j, 7] = a2 * q_all
        out[:, j, 8] = _slog(mu)
        out[:, j, 9] = math.log(sd + 1e-8) / 10.0 if sd_ok else -1.0
    return out


def rank_times(t) -> np.ndarray:
    """Average ranks scaled to (0, 1]."""
    t = np.asarray(t, dtype=np.float64)
    srt = np.sort(t)
    lo = np.searchsorted(srt, t, side="left")
    hi = np.searchsorted(srt, t, side="right")
    return (lo + hi + 1) / (2.0 * t.size)


# ------------------------------------------------------------------- layers

def _linear(x, P, w, b=None):
    y = ops.matmul(x, P[w])
    return ops.add(y, P[b]) if b is not None else y


def _split_heads(x, n_heads):
    *lead, L, d = x.shape
    dh = d // n_heads
    x = ops.reshape(x, (*lead, L, n_heads, dh))
    nd = len(lead)
    axes = tuple(range(nd)) + (nd + 1, nd, nd + 2)
    return ops.transpose(x, axes)


def _merge_heads(x):
    *lead, h, L, dh = x.shape
    nd = len(lead)
    axes = tuple(range(nd)) + (nd + 1, nd, nd + 2)
    return ops.reshape(ops.transpose(x, axes), (*lead, L, h * dh))


def _attention(xq, xkv, P, prefix, n_heads):
    d = xq.shape[-1]
    q = _split_heads(_linear(xq, P, f"{prefix}.attn.wq"), n_heads)
    k = _split_heads(_linear(xkv, P, f"{prefix}.attn.wk"), n_heads)
    v = _split_heads(_linear(xkv, P, f"{prefix}.attn.wv"), n_heads)
    kt = ops.transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))
    scores = ops.scale(ops.matmul(q, kt), 1.0 / math.sqrt(d // n_heads))
    att = ops.row_softmax(scores)
    return _linear(_merge_heads(ops.matmul(att, v)), P, f"{prefix}.attn.wo")


def _feed_forward(x, P, prefix):
    h = ops.gelu(_linear(x, P, f"{prefix}.ff.w1", f"{prefix}.ff.b1"))
    return _linear(h, P, f"{prefix}.ff.w2", f"{prefix}.ff.b2")


def _ln(x, P, prefix):
    return ops.layer_norm(x, P[f"{prefix}.g"], P[f"{prefix}.b"])


def _self_block(x, P, prefix, n_heads):
    y = _ln(x, P, f"{prefix}.ln1")
    x = ops.add(x, _attention(y, y, P, prefix, n_heads))
    return ops.add(x, _feed_forward(_ln(x, P, f"{prefix}.ln2"), P, prefix))


def _context_block(x, n_ctx, P, prefix, n_heads):
    """Every row attends to the first ``n_ctx`` (context) rows only."""
    y = _ln(x, P, f"{prefix}.ln1")
    kv = ops.slice(y, np.s_[:n_ctx])
    x = ops.add(x, _attention(y, kv, P, prefix, n_heads))
    return ops.add(x, _feed_forward(_ln(x, P, f"{prefix}.ln2"), P, prefix))


# ------------------------------------------------------------------ forward

def _check_inputs(X_ctx, t_ctx, e_ctx, X_qry, max_features):
    X_ctx = np.asarray(X_ctx, dtype=np.float64)
    X_qry = np.asarray(X_qry, dtype=np.float64)
    if X_ctx.ndim == 1:
        X_ctx = X_ctx[:, None]
    if X_qry.ndim == 1:
        X_qry = X_qry[:, None]
    t_ctx = np.asarray(t_ctx, dtype=np.float64).reshape(-1)
    e_ctx = np.asarray(e_ctx).astype(np.int8).reshape(-1)
    if X_ctx.shape[0] == 0:
        raise DomainError("context must contain at least one row")
    if X_ctx.shape[1] != X_qry.shape[1]:
        raise ShapeError("embed_context", X_ctx.shape, X_qry.shape)
    if X_ctx.shape[1] > max_features:
        raise ShapeError("embed_context", X_ctx.shape, (max_features,))
    if t_ctx.shape[0] != X_ctx.shape[0] or e_ctx.shape[0] != X_ctx.shape[0]:
        raise ShapeError("embed_context", X_ctx.shape, t_ctx.shape)
    if not e_ctx.any():
        raise DomainError("context must contain at least one event")
    if not (np.all(np.isfinite(X_ctx)) and np.all(np.isfinite(X_qry))):
        raise DomainError("features must be finite (impute missing values first)")
    return X_ctx, t_ctx, e_ctx, X_qry


def embed_context(model: SicModel, X_ctx, t_ctx, e_ctx, X_qry, bins: BinEdges):
    """Context and query representations before dataset attention.

    Inputs must already be in canonical order (see ``canonical_order``).
    Returns ``(ctx, qry)`` tensors of shape (n_ctx, d) and (n_qry, d).
    """
    cfg, P = model.config, model.params
    n_c = X_ctx.shape[0]
    cells = Tensor(cell_inputs(X_ctx, t_ctx, e_ctx, X_qry))
    tok = ops.gelu(_linear(cells, P, "cell.w1", "cell.b1"))
    tok = _linear(tok, P, "cell.w2", "cell.b2")  # (n, p, d)
    n = tok.shape[0]
    cls = ops.add(Tensor(np.zeros((n, 1, cfg.d_model))), P["cls"])
    x = ops.concat([cls, tok], axis=1)
    for i in range(cfg.n_row_layers):
        x = _self_block(x, P, f"row{i}", cfg.n_heads)
    h = _ln(ops.slice(x, np.s_[:, 0, :]), P, "row.ln")  # (n, d)

    h_ctx = ops.slice(h, np.s_[:n_c])
    h_qry = ops.slice(h, np.s_[n_c:])
    if cfg.time_event_variant == "prose":
        u = Tensor(rank_times(t_ctx)[:, None])
        te = ops.gelu(_linear(u, P, "time.w1", "time.b1"))
        te = _linear(te, P, "time.w2", "time.b2")
        ee = ops.matmul(ops.one_hot(e_ctx, 2), P["event.w"])
    else:
        te = ops.matmul(ops.one_hot(bins.bin_of(t_ctx), cfg.n_bins), P["time.w"])
        ee = ops.gelu(_linear(ops.one_hot(e_ctx, 2), P, "event.w1", "event.b1"))
        ee = _linear(ee, P, "event.w2", "event.b2")
    ctx = ops.add(h_ctx, ops.mul(te, ee))
    return ctx, h_qry


def forward_logits(model: SicModel, X_ctx, t_ctx, e_ctx, X_qry, bins: BinEdges | None = None):
    """Query logits (n_qry, n_effective_bins) and the bins used.

    Handles validation and canonical ordering, so callers may pass rows and
    columns in any order.
    """
    cfg, P = model.config, model.params
    X_ctx, t_ctx, e_ctx, X_qry = _check_inputs(X_ctx, t_ctx, e_ctx, X_qry, cfg.max_features)
    if bins is None:
        bins = context_bins(t_ctx, cfg.n_bins)
    rows, cols = canonical_order(X_ctx, t_ctx, e_ctx, X_qry)
    X_ctx, t_ctx, e_ctx = X_ctx[rows][:, cols], t_ctx[rows], e_ctx[rows]
    X_qry = X_qry[:, cols]
    n_c = X_ctx.shape[0]

    ctx, qry = embed_context(model, X_ctx, t_ctx, e_ctx, X_qry, bins)
    x = ops.concat([ctx, qry], axis=0)
    for i in range(cfg.n_dataset_layers):
        x = _context_block(x, n_c, P, f"ds{i}", cfg.n_heads)
    q = _ln(ops.slice(x, np.s_[n_c:]), P, "head.ln")
    q = ops.gelu(_linear(q, P, "head.w1", "head.b1"))
    logits = _linear(q, P, "head.w2", "head.b2")
    return ops.slice(logits, np.s_[:, : bins.n_bins]), bins


def context_bins(t_ctx, n_bins: int) -> BinEdges:
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return quantile_bins(t_ctx, n_bins)


def predict(model: SicModel, context: SurvivalDataset, X_qry) -> DiscreteSurvival:
    """Survival PMFs for the query rows from one forward pass over the context."""
    if context.n == 0:
        raise DomainError("predict: empty context")
    with no_grad():
        logits, bins = forward_logits(model, context.X, context.time, context.event, X_qry)
    return DiscreteSurvival(bins, pmf_from_logits(logits.data))
