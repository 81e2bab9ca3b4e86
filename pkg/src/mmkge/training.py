"""Margin-rank training of the composite score with Adam.

The loss over one batch is

    L = sum_pos max(gamma - F(pos) + (1/k) * sum_neg F(neg), 0)

with the hinge taken per positive over the mean of its k negatives.
``per_pair`` switches to the more common per-(positive, negative) hinge.
Raw features are constants; only the structural embeddings, relation
embeddings and the projection matrix are trained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .data import FeatureTable, KnowledgeGraph, make_batches
from .kernels import get_backend
from .model import ModelParams, ScoreMask, init_params
from .sampling import MODE_ENTITY, MODE_MODAL, NegativeBatch, sample_normal, sample_twins

STRATEGIES = ("normal", "twins")


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 8.0
    learning_rate: float = 2e-5
    n_batches: int = 100
    k: int = 16
    epochs: int = 1000
    seed: int = 0
    strategy: str = "twins"
    mask: ScoreMask = field(default_factory=ScoreMask)
    p: int = 1
    d_e: int = 128
    d_m: int = 768
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_every: int = 50      # validation-MRR cadence in epochs; 0 disables
    patience: int = 3         # consecutive non-improving evals before stopping
    per_pair: bool = False    # hinge per (pos, neg) pair instead of per positive
    twins_decoupled: bool = False
    normalize_entities: bool = False  # unit-norm struct rows after each step
    restore_best: bool = True  # return the best-validation snapshot
    backend: Optional[str] = None

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")

    def with_overrides(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


@dataclass
class StepReport:
    loss: float
    active_positives: int
    grad_norms: dict[str, float]


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    active_positives: int
    valid_mrr: float  # nan when not evaluated this epoch


class Adam:
    """Plain Adam with bias correction, one moment pair per tensor."""

    def __init__(self, tensors: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}

    def step(self, tensors: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in tensors.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _negative_arrays(positives: np.ndarray, negatives):
    """Normalize a NegativeBatch or a twins pair into kernel arrays."""
    if isinstance(negatives, tuple):
        entity, modal = negatives
        if entity.mode != MODE_ENTITY or modal.mode != MODE_MODAL:
            raise ValueError("twins pair must be (entity-level, modal-level)")
        if len(entity) != len(positives) or len(modal) != len(positives):
            raise ValueError("positive/negative counts do not match")
        same = (entity.slot is modal.slot and
                entity.replacement is modal.replacement) or (
            np.array_equal(entity.slot, modal.slot)
            and np.array_equal(entity.replacement, modal.replacement))
        return (entity.slot, entity.replacement, modal.slot, modal.replacement,
                bool(same), True)
    neg: NegativeBatch = negatives
    if len(neg) != len(positives):
        raise ValueError("positive/negative counts do not match")
    return neg.slot, neg.replacement, neg.slot, neg.replacement, True, False


def _run_kernel(params: ModelParams, features: FeatureTable,
                positives: np.ndarray, negatives, cfg: TrainConfig,
                want_grads: bool, gs, gr, gp):
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    slot, nent, slot2, nent2, same, twins = _negative_arrays(positives, negatives)
    c = cfg.mask.as_array()
    backend = get_backend(cfg.backend)
    return backend.loss_and_grads(
        params.struct_emb, params.rel_emb, params.proj, features.vectors,
        np.ascontiguousarray(positives[:, 0]),
        np.ascontiguousarray(positives[:, 1]),
        np.ascontiguousarray(positives[:, 2]),
        np.ascontiguousarray(slot, dtype=np.int64),
        np.ascontiguousarray(nent, dtype=np.int64),
        np.ascontiguousarray(slot2, dtype=np.int64),
        np.ascontiguousarray(nent2, dtype=np.int64),
        same, twins,
        bool(c[0]), bool(c[1]), bool(c[2]), bool(c[3]), bool(c[4]),
        cfg.p, float(cfg.margin), cfg.per_pair, want_grads,
        gs, gr, gp)


def batch_loss(params: ModelParams, features: FeatureTable,
               positives: np.ndarray, negatives, cfg: TrainConfig) -> float:
    """Hinge loss of one batch under the configured strategy."""
    dummy = np.empty((0, 0))
    loss, _ = _run_kernel(params, features, positives, negatives, cfg,
                          False, dummy, dummy, dummy)
    return float(loss)


def batch_gradients(params: ModelParams, features: FeatureTable,
                    positives: np.ndarray, negatives,
                    cfg: TrainConfig) -> tuple[dict[str, np.ndarray], StepReport]:
    """Exact subgradients of batch_loss for the touched tensors."""
    gs = np.zeros_like(params.struct_emb)
    gr = np.zeros_like(params.rel_emb)
    gp = np.zeros_like(params.proj)
    loss, active = _run_kernel(params, features, positives, negatives, cfg,
                               True, gs, gr, gp)
    grads = {"struct": gs, "rel": gr, "proj": gp}
    report = StepReport(loss=float(loss), active_positives=int(active),
                        grad_norms={k: float(np.linalg.norm(v))
                                    for k, v in grads.items()})
    return grads, report


def _sample(graph: KnowledgeGraph, batch: np.ndarray, cfg: TrainConfig, seed):
    if cfg.strategy == "twins":
        return sample_twins(graph, batch, cfg.k, seed,
                            decoupled=cfg.twins_decoupled)
    return sample_normal(graph, batch, cfg.k, seed)


def train(graph: KnowledgeGraph, features: FeatureTable, cfg: TrainConfig,
          params: ModelParams | None = None,
          log_fn=None) -> tuple[ModelParams, list[EpochRecord]]:
    """Run epochs x n_batches Adam steps; deterministic under cfg.seed.

    Validation MRR (filtered over train+valid) is computed every
    cfg.eval_every epochs; training stops early after cfg.patience
    consecutive non-improving evaluations.
    """
    from .evaluation import EvalConfig, evaluate  # deferred: avoids cycle

    if params is None:
        params = init_params(graph.entity_count, graph.relation_count,
                             cfg.d_e, cfg.d_m, cfg.seed)
    if features.dim != params.d_m:
        raise ValueError(
            f"feature dim {features.dim} does not match d_m {params.d_m}")

    tensors = {"struct": params.struct_emb, "rel": params.rel_emb,
               "proj": params.proj}
    adam = Adam(tensors, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                cfg.adam_eps)
    gs = np.zeros_like(params.struct_emb)
    gr = np.zeros_like(params.rel_emb)
    gp = np.zeros_like(params.proj)
    grads = {"struct": gs, "rel": gr, "proj": gp}

    do_eval = (cfg.eval_every > 0 and len(graph.valid) > 0)
    eval_cfg = EvalConfig(filter_splits=("train", "valid"), mask=cfg.mask,
                          p=cfg.p, backend=cfg.backend)
    best_mrr = -math.inf
    best_params: ModelParams | None = None
    bad_evals = 0

    records: list[EpochRecord] = []
    for epoch in range(cfg.epochs):
        batches = make_batches(graph.train, cfg.n_batches, [cfg.seed, 1, epoch])
        epoch_loss = 0.0
        epoch_active = 0
        for b, batch in enumerate(batches):
            negatives = _sample(graph, batch, cfg, [cfg.seed, 2, epoch, b])
            gs[:] = 0.0
            gr[:] = 0.0
            gp[:] = 0.0
            loss, active = _run_kernel(params, features, batch, negatives,
                                       cfg, True, gs, gr, gp)
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss {loss} at epoch {epoch} batch {b}")
            adam.step(tensors, grads)
            if cfg.normalize_entities:
                norms = np.linalg.norm(params.struct_emb, axis=1, keepdims=True)
                np.divide(params.struct_emb, norms, out=params.struct_emb,
                          where=norms > 0)
            epoch_loss += loss
            epoch_active += active

        valid_mrr = math.nan
        if do_eval and (epoch + 1) % cfg.eval_every == 0:
            valid_mrr = evaluate(params, features, graph, eval_cfg,
                                 split="valid").mrr
            if valid_mrr > best_mrr:
                best_mrr = valid_mrr
                best_params = params.copy()
                bad_evals = 0
            else:
                bad_evals += 1
        records.append(EpochRecord(epoch=epoch, loss=float(epoch_loss),
                                   active_positives=int(epoch_active),
                                   valid_mrr=valid_mrr))
        if log_fn is not None:
            log_fn(records[-1])
        if do_eval and bad_evals >= cfg.patience:
            break

    if cfg.restore_best and best_params is not None:
        params = best_params
    if not params.all_finite():
        raise RuntimeError("non-finite parameters after training")
    return params, records
