from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from config.run_config import dump_run_config
from util import logger
from util.log_handler import run_log
from zsl.autodiff import ParamSet
from zsl.checkpoint import save_checkpoint
from zsl.datagen import class_samples, generate_pretext, import_benchmark, write_samples
from zsl.dataset import Dataset, fit_standardizer, split_per_class, standardize
from zsl.dual_channel import extract_features, init_model, pretrain_extractor, train_baseline, train_dual, write_history
from zsl.errors import PreconditionError, StageError
from zsl.evaluation import evaluate_gzsl, project_2d, report_table, separability, write_per_class, write_projection
from zsl.models.data_schema import EvalReport, RunConfig
from zsl.taxonomy import AuxiliarySelection, RelevanceLevel, select_auxiliary, write_selection
from zsl.zsl_head import (
    build_latent_trainset,
    fit_semantic_standardizer,
    init_vae,
    predict,
    standardize_semantic,
    train_latent_classifier,
    train_vae,
    write_vae_history,
)

REGIMES = ("baseline", "low", "middle", "high")


@dataclass
class RunResult:
    report: EvalReport
    run_dir: Path


@contextmanager
def stage(name: str) -> Iterator[None]:
    logger.info(f"Stage '{name}' started")
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        logger.error(f"Stage '{name}' failed: {e}", exc_info=True)
        raise StageError(name, e) from e
    logger.debug(f"Stage '{name}' finished")


def run_dir_for(cfg: RunConfig, regime: str, seed: int) -> Path:
    return Path(cfg.paths.output_dir) / f"{regime}_seed{seed}"


def _standardized(data: Dataset, mean: np.ndarray, std: np.ndarray) -> Dataset:
    return data.with_features(standardize(data.features, mean, std))


def _take_quota(data: Dataset, quota: int) -> Dataset:
    """Leading ``quota`` samples of every class."""
    keep = np.concatenate([np.flatnonzero(data.labels == k)[:quota] for k in range(data.n_classes)])
    return data.subset(np.sort(keep))


def _select(cfg: RunConfig, bench, regime: str, seed: int) -> AuxiliarySelection:
    level = RelevanceLevel.parse(regime)
    counts = bench.samples.counts()
    pool = [(c, counts[c]) for c in bench.aux_candidates()]
    quota = cfg.run.aux_per_class or cfg.gen.samples_per_class
    return select_auxiliary(bench.taxonomy, set(bench.seen), pool, level, cfg.run.aux_classes, quota, seed)


def run_service(cfg: RunConfig, regime: str, seed: int, out_dir: Optional[Path] = None) -> RunResult:
    """
    One full run: pretrain, fine-tune under the regime, fit the GZSL head,
    evaluate, and write every artifact into the run directory. The run's log
    records go to run.log in the same directory.
    """
    if regime not in REGIMES:
        raise PreconditionError(f"Unknown regime '{regime}', expected one of {REGIMES}")
    out_dir = Path(out_dir) if out_dir is not None else run_dir_for(cfg, regime, seed)
    with run_log(logger, out_dir):
        return _run_stages(cfg, regime, seed, out_dir)


def _run_stages(cfg: RunConfig, regime: str, seed: int, out_dir: Path) -> RunResult:
    train_cfg = cfg.train.model_copy(update={"seed": seed})
    vae_cfg = cfg.vae.model_copy(update={"seed": seed})
    clf_cfg = cfg.classifier.model_copy(update={"seed": seed})
    logger.info(f"Run regime={regime} seed={seed} lam={train_cfg.lam} -> {out_dir}")

    with stage("load"):
        bench = import_benchmark(cfg.paths.benchmark_dir)
        seen_train, seen_test = split_per_class(class_samples(bench, bench.seen), cfg.run.seen_test_fraction)
        unseen_test = class_samples(bench, bench.unseen)
        mean, std = fit_standardizer(seen_train.features)
        seen_train = _standardized(seen_train, mean, std)
        seen_test = _standardized(seen_test, mean, std)
        unseen_test = _standardized(unseen_test, mean, std)

    selection = AuxiliarySelection(classes=(), quota=0)
    aux: Optional[Dataset] = None
    if regime != "baseline":
        with stage("select"):
            selection = _select(cfg, bench, regime, seed)
            if not selection.classes:
                raise PreconditionError("Auxiliary regimes need run.aux_classes > 0")
            aux = _standardized(_take_quota(class_samples(bench, selection.classes), selection.quota), mean, std)

    with stage("pretrain"):
        n_aux = aux.n_classes if aux is not None else 0
        model = init_model(seen_train.width, n_aux, seen_train.n_classes, train_cfg)
        pretext = generate_pretext(seen_train.width, train_cfg.pretext_classes, train_cfg.pretext_samples_per_class, seed)
        pretrain_extractor(model.extractor, pretext, train_cfg)

    with stage("finetune"):
        if aux is None:
            model, history = train_baseline(model, seen_train, train_cfg)
        else:
            model, history = train_dual(model, aux, seen_train, train_cfg)

    with stage("vae"):
        raw_train = extract_features(model.extractor, seen_train.features)
        raw_test = np.vstack([extract_features(model.extractor, seen_test.features),
                              extract_features(model.extractor, unseen_test.features)])
        f_mean, f_std = fit_standardizer(raw_train)
        vis_train = seen_train.with_features(standardize(raw_train, f_mean, f_std))
        # seen-class statistics, applied to unseen vectors too
        a_mean, a_std = fit_semantic_standardizer(bench.semantic, bench.seen)
        seen_attrs = standardize_semantic({c: bench.semantic[c] for c in bench.seen}, a_mean, a_std)
        vae = init_vae(vis_train.width, a_mean.size, vae_cfg)
        vae, vae_records = train_vae(vae, vis_train, seen_attrs, vae_cfg)

    with stage("classifier"):
        unseen_attrs = standardize_semantic({c: bench.semantic.get(c) for c in bench.unseen}, a_mean, a_std)
        latents = build_latent_trainset(vae, vis_train, unseen_attrs, cfg.run.draws_per_item, seed)
        clf = train_latent_classifier(latents, clf_cfg)

    with stage("evaluate"):
        classes = tuple(bench.seen) + tuple(bench.unseen)
        truth = np.concatenate([seen_test.labels, unseen_test.labels + len(bench.seen)])
        test = Dataset(raw_test, truth.astype(np.int64), classes)
        predictions = predict(vae, clf, standardize(raw_test, f_mean, f_std))
        report = evaluate_gzsl(
            predictions, truth, bench.seen, bench.unseen,
            method=regime if regime == "baseline" else f"{regime}-relevance",
            separability=separability(test.features, test.labels),
            regime=regime,
            seed=seed,
            lam=None if regime == "baseline" else train_cfg.lam,
        )
        projection = project_2d(test.features, test.class_ids())

    with stage("write"):
        out_dir.mkdir(parents=True, exist_ok=True)
        _, tsv = report_table([report])
        (out_dir / "report.tsv").write_text(tsv)
        (out_dir / "report.json").write_text(report.model_dump_json(indent=2) + "\n")
        (out_dir / "per_class.tsv").write_text(write_per_class(report))
        (out_dir / "history.tsv").write_text(write_history(history))
        (out_dir / "vae_history.tsv").write_text(write_vae_history(vae_records))
        (out_dir / "projection.tsv").write_text(write_projection(projection))
        (out_dir / "features.tsv").write_text(write_samples(test))
        (out_dir / "selection.tsv").write_text(write_selection(selection))
        (out_dir / "config.conf").write_text(dump_run_config(cfg))
        save_checkpoint(out_dir / "checkpoint.bin", ParamSet.combine({
            "model": model.combined(),
            "vae": vae.combined(),
            "classifier": clf,
        }))
    logger.info(f"Run finished: H={report.h:.2f} (As={report.a_s:.2f}, Au={report.a_u:.2f})")
    return RunResult(report=report, run_dir=out_dir)


def run_seeds_service(cfg: RunConfig, regime: str, seeds: Optional[Sequence[int]] = None) -> List[RunResult]:
    seeds = list(seeds if seeds is not None else cfg.run.seeds)
    results = []
    for seed in tqdm(seeds, desc=f"{regime} runs", unit="seed", disable=len(seeds) < 2):
        results.append(run_service(cfg, regime, seed))
    return results


def median_h(results: Sequence[RunResult]) -> float:
    return float(np.median([r.report.h for r in results]))


def sweep_service(cfg: RunConfig, regime: str, lambdas: Sequence[float], seed: int) -> Dict[float, RunResult]:
    """Run one regime over a grid of channel weights; writes sweep.tsv next to the runs."""
    if regime == "baseline":
        raise PreconditionError("The lambda sweep needs an auxiliary regime (low, middle or high)")
    if not lambdas:
        raise PreconditionError("The lambda sweep needs at least one value")
    if any(lam < 0 for lam in lambdas):
        raise PreconditionError(f"Channel weights must be non-negative, got {list(lambdas)}")
    sweep_dir = Path(cfg.paths.output_dir) / f"sweep_{regime}_seed{seed}"
    results: Dict[float, RunResult] = {}
    for lam in tqdm(lambdas, desc="lambda sweep", unit="lam"):
        lam_cfg = cfg.model_copy(update={"train": cfg.train.model_copy(update={"lam": float(lam)})})
        results[float(lam)] = run_service(lam_cfg, regime, seed, out_dir=sweep_dir / f"lam_{float(lam)!r}")
    rows = ["lambda\tH"] + [f"{lam!r}\t{r.report.h!r}" for lam, r in results.items()]
    sweep_dir.mkdir(parents=True, exist_ok=True)
    (sweep_dir / "sweep.tsv").write_text("\n".join(rows) + "\n")
    logger.info(f"Lambda sweep written to {sweep_dir / 'sweep.tsv'}")
    return results

