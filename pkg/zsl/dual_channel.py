"""
Dual-channel feature enhancement.

A shared extractor F is fine-tuned by two single-layer heads: the auxiliary
head A over the auxiliary classes and the current head C over the seen
classes, minimising lam * L_aux + L_cur with plain SGD. Only F receives
gradients from both channels.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from util import logger
from zsl.autodiff import (
    ParamSet,
    Tensor,
    affine,
    backward,
    init_affine,
    relu,
    sgd_step,
    softmax_cross_entropy,
)
from zsl.dataset import Dataset
from zsl.errors import DivergenceError, ParseError, PreconditionError, ShapeError
from zsl.models.data_schema import TrainConfig

Batch = Tuple[np.ndarray, np.ndarray]


@dataclass
class ModelParams:
    extractor: ParamSet
    aux_head: ParamSet
    cur_head: ParamSet

    def combined(self) -> ParamSet:
        return ParamSet.combine({"extractor": self.extractor, "aux_head": self.aux_head, "cur_head": self.cur_head})

    def copy(self) -> "ModelParams":
        return ModelParams(self.extractor.copy(), self.aux_head.copy(), self.cur_head.copy())


@dataclass(frozen=True)
class StepRecord:
    step: int
    loss_aux: float
    loss_cur: float
    loss_total: float


@dataclass
class TrainHistory:
    records: List[StepRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)


def init_extractor(input_dim: int, cfg: TrainConfig, rng: np.random.Generator) -> ParamSet:
    params = ParamSet()
    init_affine(params, "hidden", input_dim, cfg.hidden_width, rng)
    init_affine(params, "out", cfg.hidden_width, cfg.feature_width, rng)
    return params


def init_head(width: int, n_classes: int, rng: np.random.Generator) -> ParamSet:
    params = ParamSet()
    init_affine(params, "linear", width, n_classes, rng)
    return params


def init_model(input_dim: int, n_aux: int, n_cur: int, cfg: TrainConfig) -> ModelParams:
    rng = np.random.default_rng([cfg.seed, 11])
    extractor = init_extractor(input_dim, cfg, rng)
    logger.debug(f"Initialised extractor {input_dim}->{cfg.hidden_width}->{cfg.feature_width}, heads {n_aux}/{n_cur}")
    return ModelParams(
        extractor=extractor,
        aux_head=init_head(cfg.feature_width, max(n_aux, 1), rng),
        cur_head=init_head(cfg.feature_width, n_cur, rng),
    )


def extract(theta_f: ParamSet, x) -> Tensor:
    """nu = F(x): affine -> relu -> affine."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    hidden = theta_f["hidden.weight"]
    if x.ndim != 2 or x.shape[1] != hidden.shape[1]:
        raise ShapeError("extract", hidden.shape, x.shape)
    h = relu(affine(theta_f.slice("hidden"), x))
    return affine(theta_f.slice("out"), h)


def extract_features(theta_f: ParamSet, features: np.ndarray) -> np.ndarray:
    return extract(theta_f, features).data.copy()


def head_loss(theta_f: ParamSet, head: ParamSet, batch: Batch) -> Tensor:
    x, y = batch
    return softmax_cross_entropy(affine(head.slice("linear"), extract(theta_f, x)), y)


def joint_loss(m: ModelParams, batch_aux: Batch, batch_cur: Batch, lam: float) -> Tuple[Tensor, Tensor, Tensor]:
    loss_aux = head_loss(m.extractor, m.aux_head, batch_aux)
    loss_cur = head_loss(m.extractor, m.cur_head, batch_cur)
    return loss_aux * lam + loss_cur, loss_aux, loss_cur


def _check_batch(name: str, batch: Batch) -> None:
    if len(batch[0]) == 0:
        raise PreconditionError(f"{name} batch is empty")


def _check_finite(step: int, *losses: float) -> None:
    if not all(math.isfinite(v) for v in losses):
        logger.error(f"Non-finite loss at step {step}: {losses}")
        raise DivergenceError(f"Non-finite loss at step {step}: {losses}")


def joint_step(m: ModelParams, batch_aux: Batch, batch_cur: Batch, cfg: TrainConfig,
               step: int = 0) -> Tuple[ModelParams, StepRecord]:
    _check_batch("auxiliary", batch_aux)
    _check_batch("current", batch_cur)

    params = m.combined()
    params.zero_grad()
    loss, loss_aux, loss_cur = joint_loss(m, batch_aux, batch_cur, cfg.lam)
    record = StepRecord(step, loss_aux.item(), loss_cur.item(), loss.item())
    _check_finite(step, record.loss_aux, record.loss_cur, record.loss_total)

    backward(loss)
    sgd_step(params, cfg.lr)
    return m, record


def current_step(m: ModelParams, batch_cur: Batch, cfg: TrainConfig, step: int = 0) -> Tuple[ModelParams, StepRecord]:
    _check_batch("current", batch_cur)

    params = ParamSet.combine({"extractor": m.extractor, "cur_head": m.cur_head})
    params.zero_grad()
    loss = head_loss(m.extractor, m.cur_head, batch_cur)
    record = StepRecord(step, 0.0, loss.item(), loss.item())
    _check_finite(step, record.loss_cur)

    backward(loss)
    sgd_step(params, cfg.lr)
    return m, record


def _batches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    return [order[i:i + batch_size] for i in range(0, order.size, batch_size)]


def _channel_rngs(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    # Separate streams keep the current-channel schedule independent of the auxiliary data.
    return np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1])


def _check_widths(m: ModelParams, *datasets: Dataset) -> None:
    width = m.extractor["hidden.weight"].shape[1]
    for data in datasets:
        if len(data) == 0:
            raise PreconditionError("Training dataset is empty")
        if data.width != width:
            raise ShapeError("train", (width,), (data.width,))


def train_dual(m: ModelParams, aux: Dataset, cur: Dataset, cfg: TrainConfig) -> Tuple[ModelParams, TrainHistory]:
    """
    Joint training of F, A and C.

    Each epoch shuffles both channels with seeded generators and pairs their
    batches; the channel with fewer batches cycles from its start so every
    step carries both losses.
    """
    _check_widths(m, aux, cur)
    logger.info(f"Dual-channel training: {len(aux)} auxiliary / {len(cur)} current samples, "
                f"lam={cfg.lam}, lr={cfg.lr}, epochs={cfg.epochs}")
    rng_cur, rng_aux = _channel_rngs(cfg.seed)
    history = TrainHistory()
    step = 0
    for epoch in range(cfg.epochs):
        cur_batches = _batches(rng_cur.permutation(len(cur)), cfg.batch_size)
        aux_batches = _batches(rng_aux.permutation(len(aux)), cfg.batch_size)
        for i in range(max(len(cur_batches), len(aux_batches))):
            ia = aux_batches[i % len(aux_batches)]
            ic = cur_batches[i % len(cur_batches)]
            m, record = joint_step(
                m,
                (aux.features[ia], aux.labels[ia]),
                (cur.features[ic], cur.labels[ic]),
                cfg,
                step=step,
            )
            history.records.append(record)
            step += 1
        logger.debug(f"Epoch {epoch + 1}/{cfg.epochs}: last combined loss {history.records[-1].loss_total:.4f}")
    return m, history


def train_baseline(m: ModelParams, cur: Dataset, cfg: TrainConfig) -> Tuple[ModelParams, TrainHistory]:
    """Fine-tune on the seen classes only; same schedule as the current channel of train_dual."""
    _check_widths(m, cur)
    logger.info(f"Baseline fine-tuning: {len(cur)} samples, lr={cfg.lr}, epochs={cfg.epochs}")
    rng_cur, _ = _channel_rngs(cfg.seed)
    history = TrainHistory()
    step = 0
    for epoch in range(cfg.epochs):
        for ic in _batches(rng_cur.permutation(len(cur)), cfg.batch_size):
            m, record = current_step(m, (cur.features[ic], cur.labels[ic]), cfg, step=step)
            history.records.append(record)
            step += 1
        logger.debug(f"Epoch {epoch + 1}/{cfg.epochs}: last loss {history.records[-1].loss_cur:.4f}")
    return m, history


def pretrain_extractor(theta_f: ParamSet, pretext: Dataset, cfg: TrainConfig,
                       epochs: Optional[int] = None) -> ParamSet:
    """Classification pretraining on a pretext task; the temporary head is discarded."""
    epochs = cfg.pretrain_epochs if epochs is None else epochs
    width = theta_f["out.weight"].shape[0]
    rng = np.random.default_rng([cfg.seed, 7])
    head = init_head(width, pretext.n_classes, rng)
    params = ParamSet.combine({"extractor": theta_f, "head": head})
    logger.info(f"Pretraining extractor on {len(pretext)} pretext samples, {pretext.n_classes} classes, {epochs} epochs")
    for epoch in range(epochs):
        for idx in _batches(rng.permutation(len(pretext)), cfg.batch_size):
            params.zero_grad()
            loss = head_loss(theta_f, head, (pretext.features[idx], pretext.labels[idx]))
            _check_finite(epoch, loss.item())
            backward(loss)
            sgd_step(params, cfg.pretrain_lr)
    return theta_f


HISTORY_HEADER = "step\tloss_aux\tloss_cur\tloss_total"


def write_history(history: TrainHistory) -> str:
    rows = [HISTORY_HEADER]
    rows.extend(f"{r.step}\t{r.loss_aux!r}\t{r.loss_cur!r}\t{r.loss_total!r}" for r in history.records)
    return "\n".join(rows) + "\n"


def read_history(text: str) -> TrainHistory:
    lines = text.splitlines()
    if not lines or lines[0] != HISTORY_HEADER:
        raise ParseError("missing history header", line=1)
    history = TrainHistory()
    for lineno, line in enumerate(lines[1:], start=2):
        cols = line.split("\t")
        if len(cols) != 4:
            raise ParseError("expected 4 columns", line=lineno)
        try:
            history.records.append(StepRecord(int(cols[0]), float(cols[1]), float(cols[2]), float(cols[3])))
        except ValueError as e:
            raise ParseError(str(e), line=lineno) from None
    return history
