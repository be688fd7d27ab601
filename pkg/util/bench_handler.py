from pathlib import Path
from typing import Dict, Optional, Sequence

from util import logger
from zsl.datagen import export_benchmark, generate, read_samples
from zsl.dataset import Dataset
from zsl.errors import FormatError, ParseError
from zsl.evaluation import project_2d, separability, write_projection
from zsl.models.data_schema import EvalReport, GenConfig


def gen_service(cfg: GenConfig, benchmark_dir: str) -> Dict[str, int]:
    """Generate a synthetic benchmark and export it; returns the class and sample counts."""
    logger.info(f"Generating benchmark (seed {cfg.seed}) into {benchmark_dir}")
    bench = generate(cfg)
    export_benchmark(bench, benchmark_dir)
    counts = {name: len(ids) for name, ids in bench.sections().items()}
    counts["species"] = len(bench.taxonomy)
    counts["samples"] = len(bench.samples)
    return counts


def load_run_report(run_dir: Path) -> EvalReport:
    path = Path(run_dir) / "report.json"
    try:
        return EvalReport.model_validate_json(path.read_text())
    except OSError as e:
        raise FormatError(str(run_dir), f"no readable report.json: {e.strerror or e}") from e
    except ValueError as e:
        raise FormatError(str(path), f"invalid report: {e}") from e


def load_run_features(run_dir: Path) -> Dataset:
    path = Path(run_dir) / "features.tsv"
    try:
        ids, features = read_samples(path.read_text())
    except OSError as e:
        raise FormatError(str(run_dir), f"no readable features.tsv: {e.strerror or e}") from e
    except ParseError as e:
        raise FormatError(str(path), str(e)) from e
    return Dataset.from_class_ids(features, ids, list(dict.fromkeys(ids)))


def project_service(run_dirs: Sequence[str], out_dir: Optional[str] = None) -> Dict[str, float]:
    """Re-project each run's saved test features; one projection file per regime."""
    scores: Dict[str, float] = {}
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        report = load_run_report(run_dir)
        data = load_run_features(run_dir)
        regime = report.regime or report.method
        target = Path(out_dir) if out_dir is not None else run_dir
        target.mkdir(parents=True, exist_ok=True)

        projection = project_2d(data.features, data.class_ids())
        (target / f"projection_{regime}.tsv").write_text(write_projection(projection))
        scores[regime] = separability(data.features, data.labels)
        logger.info(f"Projected {len(data)} test features of {run_dir} (separability {scores[regime]:.4f})")
    return scores
