"""
Cross-aligned variational embedding for generalized zero-shot prediction.

A visual VAE and a semantic VAE share one latent space. Training combines
reconstruction, KL to the standard normal, cross-reconstruction (decode each
modality from the other's latent) and a per-class alignment of the two latent
distributions. Seen classes are then represented by visual latents and unseen
classes by semantic latents, and a softmax classifier over the latent space
makes the GZSL prediction.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from util import logger
from zsl.autodiff import (
    ParamSet,
    Tensor,
    affine,
    backward,
    clip,
    exp,
    init_affine,
    matmul,
    relu,
    scale,
    sgd_step,
    softmax_cross_entropy,
    square,
    total,
)
from zsl.dataset import Dataset, fit_standardizer, standardize
from zsl.errors import CoverageError, DivergenceError, ParseError, ShapeError
from zsl.models.data_schema import ClassifierConfig, VaeConfig

SemanticTable = Dict[str, np.ndarray]

# encoder log-variances are clamped to [-LOGVAR_BOUND, LOGVAR_BOUND] before exp
LOGVAR_BOUND = 10.0


@dataclass
class LatentCode:
    mu: Tensor
    logvar: Tensor
    z: Tensor


@dataclass
class VaeParams:
    visual_encoder: ParamSet
    visual_decoder: ParamSet
    semantic_encoder: ParamSet
    semantic_decoder: ParamSet
    latent_width: int

    def combined(self) -> ParamSet:
        return ParamSet.combine({
            "visual_encoder": self.visual_encoder,
            "visual_decoder": self.visual_decoder,
            "semantic_encoder": self.semantic_encoder,
            "semantic_decoder": self.semantic_decoder,
        })


@dataclass(frozen=True)
class VaeLossRecord:
    step: int
    recon_visual: float
    recon_semantic: float
    kl: float
    cross_recon: float
    align: float
    total: float


def _init_encoder(in_dim: int, hidden: int, latent: int, rng: np.random.Generator) -> ParamSet:
    params = ParamSet()
    init_affine(params, "hidden", in_dim, hidden, rng)
    init_affine(params, "mu", hidden, latent, rng)
    init_affine(params, "logvar", hidden, latent, rng)
    return params


def _init_decoder(latent: int, hidden: int, out_dim: int, rng: np.random.Generator) -> ParamSet:
    params = ParamSet()
    init_affine(params, "hidden", latent, hidden, rng)
    init_affine(params, "out", hidden, out_dim, rng)
    return params


def init_vae(visual_dim: int, attr_dim: int, cfg: VaeConfig) -> VaeParams:
    rng = np.random.default_rng([cfg.seed, 23])
    h, k = cfg.hidden_width, cfg.latent_width
    return VaeParams(
        visual_encoder=_init_encoder(visual_dim, h, k, rng),
        visual_decoder=_init_decoder(k, h, visual_dim, rng),
        semantic_encoder=_init_encoder(attr_dim, h, k, rng),
        semantic_decoder=_init_decoder(k, h, attr_dim, rng),
        latent_width=k,
    )


def encode(params: ParamSet, v, noise: Optional[np.ndarray] = None) -> LatentCode:
    """Gaussian posterior of v and the reparameterised draw z = mu + exp(logvar / 2) * noise."""
    v = v if isinstance(v, Tensor) else Tensor(v)
    w = params["hidden.weight"]
    if v.shape[-1] != w.shape[1]:
        raise ShapeError("encode", w.shape, v.shape)
    h = relu(affine(params.slice("hidden"), v))
    mu = affine(params.slice("mu"), h)
    logvar = clip(affine(params.slice("logvar"), h), -LOGVAR_BOUND, LOGVAR_BOUND)
    if noise is None:
        return LatentCode(mu=mu, logvar=logvar, z=mu)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != mu.shape:
        raise ShapeError("encode noise", mu.shape, noise.shape)
    z = mu + exp(scale(logvar, 0.5)) * Tensor(noise)
    return LatentCode(mu=mu, logvar=logvar, z=z)


def decode(params: ParamSet, z: Tensor) -> Tensor:
    return affine(params.slice("out"), relu(affine(params.slice("hidden"), z)))


def _sq_error(recon: Tensor, target: np.ndarray) -> Tensor:
    # summed over features, averaged over the batch
    return scale(total(square(recon - Tensor(target))), 1.0 / target.shape[0])


def kl_term(code: LatentCode) -> Tensor:
    """Mean over the batch of KL(N(mu, exp(logvar)) || N(0, I))."""
    n = code.mu.shape[0] if code.mu.ndim == 2 else 1
    inner = square(code.mu) + exp(code.logvar) - code.logvar
    return scale(total(inner) - float(code.mu.data.size), 0.5 / n)


def _group_matrix(labels: np.ndarray) -> np.ndarray:
    classes = np.unique(labels)
    g = (labels[None, :] == classes[:, None]).astype(np.float64)
    return g / g.sum(axis=1, keepdims=True)


def align_term(visual: LatentCode, semantic: LatentCode, labels: np.ndarray) -> Tensor:
    """
    Per-class distance between the two latent distributions.

    For every class in the batch: squared distance of the mean latent means
    plus squared distance of the mean standard deviations, averaged over classes.
    """
    group = Tensor(_group_matrix(labels))
    n_classes = group.shape[0]
    d_mu = matmul(group, visual.mu) - matmul(group, semantic.mu)
    d_sd = matmul(group, exp(scale(visual.logvar, 0.5))) - matmul(group, exp(scale(semantic.logvar, 0.5)))
    return scale(total(square(d_mu)) + total(square(d_sd)), 1.0 / n_classes)


def vae_loss(p: VaeParams, x: np.ndarray, attrs: np.ndarray, labels: np.ndarray,
             noise_v: np.ndarray, noise_s: np.ndarray, cfg: VaeConfig, step: int = 0) -> Tuple[Tensor, VaeLossRecord]:
    """
    Full objective for one batch.

    Terms whose weight is zero are still reported but stay out of the
    differentiated total, so the two autoencoders are fully decoupled when
    gamma and delta are both zero.
    """
    if x.shape[0] != attrs.shape[0] or x.shape[0] != labels.shape[0]:
        raise ShapeError("vae_loss", x.shape, attrs.shape)
    code_v = encode(p.visual_encoder, x, noise_v)
    code_s = encode(p.semantic_encoder, attrs, noise_s)

    recon_v = _sq_error(decode(p.visual_decoder, code_v.z), x)
    recon_s = _sq_error(decode(p.semantic_decoder, code_s.z), attrs)
    kl = kl_term(code_v) + kl_term(code_s)
    cross = _sq_error(decode(p.visual_decoder, code_s.z), x) + _sq_error(decode(p.semantic_decoder, code_v.z), attrs)
    align = align_term(code_v, code_s, labels)

    loss = recon_v + recon_s
    for weight, term in ((cfg.beta, kl), (cfg.gamma, cross), (cfg.delta, align)):
        if weight != 0.0:
            loss = loss + term * weight

    record = VaeLossRecord(step, recon_v.item(), recon_s.item(), kl.item(), cross.item(), align.item(), loss.item())
    return loss, record


def _attribute_rows(semantic: Mapping[str, np.ndarray], classes: Sequence[str], labels: np.ndarray) -> np.ndarray:
    missing = [c for c in classes if c not in semantic]
    if missing:
        raise CoverageError(f"No semantic vector for classes: {missing}")
    table = np.stack([np.asarray(semantic[c], dtype=np.float64) for c in classes])
    return table[labels]


def fit_semantic_standardizer(semantic: Mapping[str, np.ndarray], classes: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
    """Per-attribute mean and standard deviation over one vector per listed class."""
    missing = [c for c in classes if semantic.get(c) is None]
    if missing:
        raise CoverageError(f"No semantic vector for classes: {missing}")
    return fit_standardizer(np.stack([np.asarray(semantic[c], dtype=np.float64) for c in classes]))


def standardize_semantic(semantic: Mapping[str, Optional[np.ndarray]], mean: np.ndarray,
                         std: np.ndarray) -> Dict[str, Optional[np.ndarray]]:
    """Applies one set of statistics to every vector; absent vectors stay absent."""
    return {c: None if v is None else standardize(np.asarray(v, dtype=np.float64), mean, std)
            for c, v in semantic.items()}


def vae_train_step(p: VaeParams, x: np.ndarray, labels: np.ndarray, attrs: np.ndarray, cfg: VaeConfig,
                   rng: np.random.Generator, step: int = 0) -> Tuple[VaeParams, VaeLossRecord]:
    noise_v = rng.standard_normal((x.shape[0], p.latent_width))
    noise_s = rng.standard_normal((x.shape[0], p.latent_width))
    params = p.combined()
    params.zero_grad()
    loss, record = vae_loss(p, x, attrs, labels, noise_v, noise_s, cfg, step=step)
    values = (record.recon_visual, record.recon_semantic, record.kl, record.cross_recon, record.align, record.total)
    if not all(math.isfinite(v) for v in values):
        logger.error(f"VAE loss diverged at step {step}: {record}")
        raise DivergenceError(f"VAE loss diverged at step {step}")
    backward(loss)
    sgd_step(params, cfg.lr)
    return p, record


def train_vae(p: VaeParams, seen: Dataset, semantic: Mapping[str, np.ndarray],
              cfg: VaeConfig) -> Tuple[VaeParams, List[VaeLossRecord]]:
    attrs = _attribute_rows(semantic, seen.classes, seen.labels)
    rng = np.random.default_rng([cfg.seed, 31])
    records: List[VaeLossRecord] = []
    logger.info(f"Training VAE on {len(seen)} seen samples for {cfg.epochs} epochs (latent {p.latent_width})")
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(seen))
        for start in range(0, order.size, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            p, record = vae_train_step(p, seen.features[idx], seen.labels[idx], attrs[idx], cfg, rng, step=step)
            records.append(record)
            step += 1
        logger.debug(f"VAE epoch {epoch + 1}/{cfg.epochs}: total {records[-1].total:.4f}")
    return p, records


def alignment_distance(p: VaeParams, seen: Dataset, semantic: Mapping[str, np.ndarray]) -> float:
    """Per-class latent distribution distance between modalities, averaged over classes, at zero noise."""
    attrs = _attribute_rows(semantic, seen.classes, seen.labels)
    code_v = encode(p.visual_encoder, seen.features)
    code_s = encode(p.semantic_encoder, attrs)
    return align_term(code_v, code_s, seen.labels).item()


def build_latent_trainset(p: VaeParams, seen: Dataset, unseen: Mapping[str, np.ndarray],
                          draws_per_item: int, seed: int) -> Dataset:
    """
    Labeled latents for the latent classifier.

    Seen classes: one visual-encoder draw per real seen feature. Unseen classes:
    ``draws_per_item`` semantic-encoder draws per class attribute vector.
    Classes are ordered seen first, then unseen in mapping order.
    """
    if draws_per_item < 1:
        raise ValueError("draws_per_item must be at least 1")
    unseen_ids = list(unseen)
    for c in unseen_ids:
        if unseen[c] is None:
            raise CoverageError(f"No semantic vector for unseen class '{c}'")
    rng = np.random.default_rng([seed, 41])

    seen_noise = rng.standard_normal((len(seen), p.latent_width))
    seen_latents = encode(p.visual_encoder, seen.features, seen_noise).z.data

    blocks, labels = [seen_latents], [seen.labels]
    if unseen_ids:
        attrs = np.repeat(np.stack([np.asarray(unseen[c], dtype=np.float64) for c in unseen_ids]), draws_per_item, axis=0)
        unseen_noise = rng.standard_normal((attrs.shape[0], p.latent_width))
        blocks.append(encode(p.semantic_encoder, attrs, unseen_noise).z.data)
        labels.append(np.repeat(np.arange(len(unseen_ids)) + seen.n_classes, draws_per_item))

    latents = Dataset(np.vstack(blocks), np.concatenate(labels).astype(np.int64), tuple(seen.classes) + tuple(unseen_ids))
    logger.debug(f"Latent training set: {len(latents)} latents over {latents.n_classes} classes")
    return latents


def classifier_loss(clf: ParamSet, latents: Dataset) -> float:
    return softmax_cross_entropy(affine(clf.slice("linear"), Tensor(latents.features)), latents.labels).item()


def train_latent_classifier(latents: Dataset, cfg: ClassifierConfig) -> ParamSet:
    """Single affine layer with softmax cross-entropy over seen and unseen classes jointly."""
    counts = np.bincount(latents.labels, minlength=latents.n_classes)
    empty = [latents.classes[i] for i in np.flatnonzero(counts == 0)]
    if empty:
        raise CoverageError(f"Latent classifier has no training latents for classes: {empty}")

    rng = np.random.default_rng([cfg.seed, 53])
    clf = ParamSet()
    init_affine(clf, "linear", latents.width, latents.n_classes, rng)
    logger.info(f"Training latent classifier on {len(latents)} latents, {latents.n_classes} classes")
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(latents))
        for start in range(0, order.size, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            clf.zero_grad()
            loss = softmax_cross_entropy(affine(clf.slice("linear"), Tensor(latents.features[idx])), latents.labels[idx])
            if not math.isfinite(loss.item()):
                raise DivergenceError(f"Latent classifier loss diverged in epoch {epoch + 1}")
            backward(loss)
            sgd_step(clf, cfg.lr)
        logger.debug(f"Classifier epoch {epoch + 1}/{cfg.epochs}: loss {classifier_loss(clf, latents):.4f}")
    return clf


def predict(p: VaeParams, clf: ParamSet, features: np.ndarray) -> np.ndarray:
    """Class index per row: zero-noise visual encoding, then argmax (ties go to the lowest index)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ShapeError("predict", (None, p.visual_encoder["hidden.weight"].shape[1]), features.shape)
    code = encode(p.visual_encoder, features)
    logits = affine(clf.slice("linear"), code.mu).data
    return np.argmax(logits, axis=1)


def write_semantic_vectors(table: Mapping[str, np.ndarray]) -> str:
    return "".join(
        c + "\t" + "\t".join(repr(float(v)) for v in np.asarray(vec).ravel()) + "\n"
        for c, vec in table.items()
    )


def read_semantic_vectors(text: str) -> SemanticTable:
    table: SemanticTable = {}
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        try:
            values = np.array([float(v) for v in cols[1:]], dtype=np.float64)
        except ValueError as e:
            raise ParseError(str(e), line=lineno) from None
        if width is None:
            width = values.size
        if values.size != width or width == 0:
            raise ParseError(f"expected {width} attributes, got {values.size}", line=lineno)
        if not np.all(np.isfinite(values)):
            raise ParseError("non-finite attribute value", line=lineno)
        if cols[0] in table:
            raise ParseError(f"duplicate class '{cols[0]}'", line=lineno)
        table[cols[0]] = values
    return table


VAE_HISTORY_HEADER = "step\trecon_visual\trecon_semantic\tkl\tcross_recon\talign\ttotal"


def write_vae_history(records: Sequence[VaeLossRecord]) -> str:
    rows = [VAE_HISTORY_HEADER]
    rows.extend(
        f"{r.step}\t{r.recon_visual!r}\t{r.recon_semantic!r}\t{r.kl!r}\t{r.cross_recon!r}\t{r.align!r}\t{r.total!r}"
        for r in records
    )
    return "\n".join(rows) + "\n"
