from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from util import logger
from util.bench_handler import load_run_report
from zsl.evaluation import improvement_rate, report_table
from zsl.models.data_schema import EvalReport
from zsl.errors import PreconditionError

IMPROVEMENT_HEADER = "method\trate"


def improvement_rates(reports: Sequence[EvalReport]) -> List[Tuple[str, float]]:
    """Gain in H of every non-baseline report over the first baseline report."""
    base = next((r for r in reports if r.regime == "baseline"), None)
    if base is None:
        logger.warning("No baseline run among the reports; improvement rates skipped")
        return []
    if base.h == 0:
        logger.warning("Baseline H is 0; improvement rates are undefined")
        return []
    return [(r.method, improvement_rate(r.h, base.h)) for r in reports if r is not base]


def write_improvements(rates: Sequence[Tuple[str, float]]) -> str:
    rows = [IMPROVEMENT_HEADER] + [f"{method}\t{rate!r}" for method, rate in rates]
    return "\n".join(rows) + "\n"


def report_service(run_dirs: Sequence[str], out_dir: Optional[str] = None):
    """Merge run reports into one table; writes report.tsv and improvement.tsv."""
    if not run_dirs:
        raise PreconditionError("report needs at least one run directory")
    reports = [load_run_report(Path(d)) for d in run_dirs]
    text, tsv = report_table(reports)
    rates = improvement_rates(reports)

    target = Path(out_dir) if out_dir is not None else Path(run_dirs[0]).parent
    target.mkdir(parents=True, exist_ok=True)
    (target / "report.tsv").write_text(tsv)
    (target / "improvement.tsv").write_text(write_improvements(rates))
    logger.info(f"Combined report of {len(reports)} runs written to {target}")
    return reports, text, rates
