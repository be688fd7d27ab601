"""
Synthetic taxonomy-structured GZSL benchmarks.

A rank tree is grown kingdom first. Every node's prototype is its parent's
prototype plus Gaussian drift scaled by that rank's diffusion scale, so two
classes are closer in feature space the lower their common ancestor sits.
Drift runs inside a low-rank subspace inherited down the tree, so relatives
also share the directions along which their descendants differ.
Attribute prototypes follow the same tree: a node's attribute drift is a fixed
random linear image of its feature drift plus independent noise.
"""

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from util import logger
from zsl.dataset import Dataset
from zsl.errors import CapacityError, ConsistencyError, CoverageError, DuplicationError, FormatError, ParseError
from zsl.models.data_schema import GenConfig
from zsl.taxonomy import Lineage, RelevanceLevel, Taxonomy, dump_taxonomy, load_taxonomy
from zsl.zsl_head import read_semantic_vectors, write_semantic_vectors

# kingdom first, matching GenConfig.branching
RANK_PREFIXES = ("k", "p", "c", "o", "f", "g", "s")
SPLIT_SECTIONS = ("seen", "unseen", "aux_low", "aux_middle", "aux_high")
POOL_SECTIONS = {
    RelevanceLevel.LOW: "aux_low",
    RelevanceLevel.MIDDLE: "aux_middle",
    RelevanceLevel.HIGH: "aux_high",
}

TAXONOMY_FILE = "taxonomy.tsv"
SAMPLES_FILE = "samples.tsv"
ATTRIBUTES_FILE = "attributes.tsv"
PROTOTYPES_FILE = "prototypes.tsv"
SPLIT_FILE = "split.txt"


@dataclass(eq=False)
class SyntheticBenchmark:
    taxonomy: Taxonomy
    prototypes: Dict[str, np.ndarray]
    semantic: Dict[str, np.ndarray]
    seen: Tuple[str, ...]
    unseen: Tuple[str, ...]
    aux_pools: Dict[RelevanceLevel, Tuple[str, ...]]
    samples: Dataset

    def sections(self) -> Dict[str, Tuple[str, ...]]:
        out = {"seen": self.seen, "unseen": self.unseen}
        for level, name in POOL_SECTIONS.items():
            out[name] = self.aux_pools.get(level, ())
        return out

    def aux_candidates(self) -> List[str]:
        return [c for level in (RelevanceLevel.LOW, RelevanceLevel.MIDDLE, RelevanceLevel.HIGH)
                for c in self.aux_pools.get(level, ())]

    def equals(self, other: "SyntheticBenchmark") -> bool:
        def same_table(a: Dict[str, np.ndarray], b: Dict[str, np.ndarray]) -> bool:
            return list(a) == list(b) and all(np.array_equal(a[k], b[k]) for k in a)

        return (
            self.taxonomy == other.taxonomy
            and self.sections() == other.sections()
            and same_table(self.prototypes, other.prototypes)
            and same_table(self.semantic, other.semantic)
            and self.samples.classes == other.samples.classes
            and np.array_equal(self.samples.labels, other.samples.labels)
            and np.array_equal(self.samples.features, other.samples.features)
        )


def _lineage(path: Sequence[int], taxon_id: str) -> Lineage:
    names, prefix = [], ""
    for rank_prefix, digit in zip(RANK_PREFIXES, path):
        prefix = f"{prefix}{rank_prefix}{digit}"
        names.append(prefix)
    return Lineage(taxon_id=taxon_id, names=tuple(reversed(names)))


def _orthonormal(m: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(m)
    return q


def _diffuse(cfg: GenConfig, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Leaf feature and attribute prototypes, in C order over the branching.

    Every node owns an orthonormal ``subspace_dim`` basis: its children drift
    inside it, and each child's basis is the parent's perturbed by
    ``basis_drift`` and re-orthonormalised. Close relatives therefore vary
    along shared directions. Drift is rescaled so its expected squared norm is
    feature_dim * scale**2 whatever the subspace size.
    """
    d, r = cfg.feature_dim, cfg.subspace_dim
    mixing = rng.standard_normal((cfg.attr_dim, d)) / np.sqrt(d)
    bases = _orthonormal(rng.standard_normal((1, d, r)))
    feat = np.zeros((1, d))
    attr = np.zeros((1, cfg.attr_dim))
    for depth, (fanout, scale) in enumerate(zip(cfg.branching, cfg.diffusion_scales)):
        n_nodes = feat.shape[0] * fanout
        parent_bases = np.repeat(bases, fanout, axis=0)
        coords = rng.standard_normal((n_nodes, r)) * scale * np.sqrt(d / r)
        drift = np.einsum("ndr,nr->nd", parent_bases, coords)
        own = rng.standard_normal((n_nodes, cfg.attr_dim)) * scale * cfg.attr_noise
        feat = np.repeat(feat, fanout, axis=0) + drift
        attr = np.repeat(attr, fanout, axis=0) + drift @ mixing.T + own
        bases = _orthonormal(parent_bases + rng.standard_normal(parent_bases.shape) * cfg.basis_drift / np.sqrt(d))
        logger.debug(f"Diffusion depth {depth}: {n_nodes} nodes, scale {scale}")
    return feat, attr


def _check_capacity(cfg: GenConfig) -> Tuple[int, int, int]:
    # species under one Class node: product of the order..species fan-outs
    per_class = int(np.prod(cfg.branching[3:]))
    classes_per_kingdom = cfg.branching[1] * cfg.branching[2]
    focal_need = cfg.n_seen + cfg.n_unseen + cfg.aux_pool_size
    middle_have = (classes_per_kingdom - 1) * per_class
    low_have = (cfg.branching[0] - 1) * classes_per_kingdom * per_class
    if focal_need > per_class:
        raise CapacityError(f"focal class holds {per_class} species, need {focal_need} for seen, unseen and high pool")
    if cfg.aux_pool_size > middle_have:
        raise CapacityError(f"only {middle_have} species share the focal kingdom outside its class, need {cfg.aux_pool_size}")
    if cfg.aux_pool_size > low_have:
        raise CapacityError(f"only {low_have} species lie in other kingdoms, need {cfg.aux_pool_size}")
    return per_class, classes_per_kingdom, classes_per_kingdom * per_class


def generate(cfg: GenConfig) -> SyntheticBenchmark:
    per_class, _, per_kingdom = _check_capacity(cfg)
    rng = np.random.default_rng(cfg.seed)
    feat, attr = _diffuse(cfg, rng)
    n_leaves = feat.shape[0]
    width = len(str(n_leaves - 1))
    ids = [f"t{i:0{width}d}" for i in range(n_leaves)]
    paths = np.stack(np.unravel_index(np.arange(n_leaves), tuple(cfg.branching)), axis=1)
    taxonomy = Taxonomy(_lineage(path, tid) for path, tid in zip(paths, ids))

    # the focal class is the first class of the first kingdom
    focal = rng.permutation(per_class)
    seen = tuple(ids[i] for i in sorted(focal[:cfg.n_seen]))
    unseen = tuple(ids[i] for i in sorted(focal[cfg.n_seen:cfg.n_seen + cfg.n_unseen]))
    high = focal[cfg.n_seen + cfg.n_unseen:cfg.n_seen + cfg.n_unseen + cfg.aux_pool_size]
    middle = per_class + rng.choice(per_kingdom - per_class, size=cfg.aux_pool_size, replace=False)
    low = per_kingdom + rng.choice(n_leaves - per_kingdom, size=cfg.aux_pool_size, replace=False)
    pools = {
        RelevanceLevel.LOW: tuple(ids[i] for i in sorted(low)),
        RelevanceLevel.MIDDLE: tuple(ids[i] for i in sorted(middle)),
        RelevanceLevel.HIGH: tuple(ids[i] for i in sorted(high)),
    }

    classes = seen + unseen + pools[RelevanceLevel.LOW] + pools[RelevanceLevel.MIDDLE] + pools[RelevanceLevel.HIGH]
    index = {tid: i for i, tid in enumerate(ids)}
    blocks = []
    for tid in classes:
        leaf = index[tid]
        sample_rng = np.random.default_rng([cfg.seed, leaf])
        blocks.append(feat[leaf] + sample_rng.standard_normal((cfg.samples_per_class, cfg.feature_dim)) * cfg.sample_noise)
    labels = np.repeat(np.arange(len(classes)), cfg.samples_per_class)
    samples = Dataset(np.vstack(blocks), labels.astype(np.int64), classes)

    logger.info(f"Generated benchmark: {n_leaves} species, {len(seen)} seen, {len(unseen)} unseen, "
                f"{cfg.aux_pool_size} per auxiliary pool, {len(samples)} samples")
    return SyntheticBenchmark(
        taxonomy=taxonomy,
        prototypes={tid: feat[i] for i, tid in enumerate(ids)},
        semantic={tid: attr[i] for i, tid in enumerate(ids)},
        seen=seen,
        unseen=unseen,
        aux_pools=pools,
        samples=samples,
    )


def generate_pretext(feature_dim: int, n_classes: int, samples_per_class: int, seed: int) -> Dataset:
    """Isotropic Gaussian clusters with no relation to the taxonomy."""
    rng = np.random.default_rng([seed, 97])
    centers = rng.standard_normal((n_classes, feature_dim)) * 3.0
    features = np.repeat(centers, samples_per_class, axis=0) + rng.standard_normal((n_classes * samples_per_class, feature_dim))
    labels = np.repeat(np.arange(n_classes), samples_per_class).astype(np.int64)
    return Dataset(features, labels, tuple(f"pretext_{i}" for i in range(n_classes)))


def class_samples(b: SyntheticBenchmark, class_ids: Sequence[str]) -> Dataset:
    """Samples of the given classes, relabelled in the order given."""
    known = set(b.samples.classes)
    missing = [c for c in class_ids if c not in known]
    if missing:
        raise CoverageError(f"No samples for classes: {missing}")
    old_to_new = np.full(b.samples.n_classes, -1, dtype=np.int64)
    for new, c in enumerate(class_ids):
        old_to_new[b.samples.classes.index(c)] = new
    mapped = old_to_new[b.samples.labels]
    keep = np.flatnonzero(mapped >= 0)
    return Dataset(b.samples.features[keep], mapped[keep], tuple(class_ids))


def write_samples(data: Dataset) -> str:
    rows = [f"{len(data)}\t{data.width}"]
    for cid, row in zip(data.class_ids(), data.features):
        rows.append(cid + "\t" + "\t".join(repr(float(v)) for v in row))
    return "\n".join(rows) + "\n"


def read_samples(text: str) -> Tuple[List[str], np.ndarray]:
    lines = text.splitlines()
    try:
        n, width = (int(v) for v in lines[0].split("\t"))
    except (IndexError, ValueError):
        raise ParseError("header must be 'n<TAB>feature_dim'", line=1) from None
    ids, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != width + 1:
            raise ParseError(f"expected {width} features, got {len(cols) - 1}", line=lineno)
        try:
            rows.append([float(v) for v in cols[1:]])
        except ValueError as e:
            raise ParseError(str(e), line=lineno) from None
        ids.append(cols[0])
    if len(ids) != n:
        raise ParseError(f"header announces {n} samples, found {len(ids)}")
    return ids, np.array(rows, dtype=np.float64).reshape(n, width)


def write_split(sections: Dict[str, Sequence[str]]) -> str:
    out = []
    for name in SPLIT_SECTIONS:
        out.append(f"[{name}]")
        out.extend(sections.get(name, ()))
    return "\n".join(out) + "\n"


def read_split(text: str) -> Dict[str, Tuple[str, ...]]:
    sections: Dict[str, List[str]] = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current not in SPLIT_SECTIONS:
                raise ParseError(f"unknown section [{current}]", line=lineno)
            if current in sections:
                raise ParseError(f"section [{current}] repeated", line=lineno)
            sections[current] = []
        elif current is None:
            raise ParseError("class id before any section header", line=lineno)
        else:
            sections[current].append(line)
    missing = [s for s in SPLIT_SECTIONS if s not in sections]
    if missing:
        raise ParseError(f"missing sections: {missing}")
    listed = [c for s in SPLIT_SECTIONS for c in sections[s]]
    if len(set(listed)) != len(listed):
        raise ParseError("a class id is listed in more than one place")
    return {s: tuple(sections[s]) for s in SPLIT_SECTIONS}


def export_benchmark(b: SyntheticBenchmark, directory: Union[str, os.PathLike]) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    logger.info(f"Exporting benchmark to {root}")
    (root / TAXONOMY_FILE).write_text(dump_taxonomy(b.taxonomy))
    (root / SAMPLES_FILE).write_text(write_samples(b.samples))
    (root / ATTRIBUTES_FILE).write_text(write_semantic_vectors(b.semantic))
    (root / PROTOTYPES_FILE).write_text(write_semantic_vectors(b.prototypes))
    (root / SPLIT_FILE).write_text(write_split(b.sections()))


def _read(root: Path, name: str, parser):
    path = root / name
    try:
        text = path.read_text()
    except OSError as e:
        raise FormatError(str(path), f"cannot read: {e.strerror or e}") from e
    try:
        return parser(text)
    except (ParseError, ConsistencyError, DuplicationError, ValueError) as e:
        raise FormatError(str(path), str(e)) from e


def import_benchmark(directory: Union[str, os.PathLike]) -> SyntheticBenchmark:
    root = Path(directory)
    logger.info(f"Importing benchmark from {root}")
    taxonomy = _read(root, TAXONOMY_FILE, load_taxonomy)
    split = _read(root, SPLIT_FILE, read_split)
    semantic = _read(root, ATTRIBUTES_FILE, read_semantic_vectors)
    prototypes = _read(root, PROTOTYPES_FILE, read_semantic_vectors)
    ids, features = _read(root, SAMPLES_FILE, read_samples)

    classes = tuple(c for s in SPLIT_SECTIONS for c in split[s])
    samples = Dataset.from_class_ids(features, ids, classes)
    empty = [c for c, n in samples.counts().items() if n == 0]
    if empty:
        raise CoverageError(f"Split manifest lists classes with no samples: {empty}")

    order = np.argsort(samples.labels, kind="stable")
    samples = samples.subset(order)
    logger.info(f"Imported {len(samples)} samples over {len(classes)} classes")
    return SyntheticBenchmark(
        taxonomy=taxonomy,
        prototypes=prototypes,
        semantic=semantic,
        seen=split["seen"],
        unseen=split["unseen"],
        aux_pools={level: split[name] for level, name in POOL_SECTIONS.items()},
        samples=samples,
    )
