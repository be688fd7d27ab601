from enum import Enum
from typing import List, Optional

import typer
from rich.console import Console
from rich.table import Table

from config.run_config import load_run_config
from util import logger
from util.bench_handler import gen_service, project_service
from util.error_handler import handle_errors
from util.report_handler import report_service
from util.run_handler import median_h, run_seeds_service, run_service, sweep_service
from zsl.published import DATASETS, consistency, rows_for

app = typer.Typer(name="zsl-dual", help="Dual-channel feature enhancement for generalized zero-shot learning.",
                  no_args_is_help=True, add_completion=False)
console = Console()

ConfigOption = typer.Option(None, "--config", "-c", help="Config file (default: $ZSL_CONFIG, then config/defaults.conf).")
SetOption = typer.Option(None, "--set", "-s", help="Override a setting, e.g. --set train.lam=0.5 (repeatable).")


class Regime(str, Enum):
    baseline = "baseline"
    low = "low"
    middle = "middle"
    high = "high"


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.1f}"


@app.command()
@handle_errors
def gen(config: Optional[str] = ConfigOption, overrides: Optional[List[str]] = SetOption):
    """Generate the synthetic benchmark into paths.benchmark_dir."""
    cfg = load_run_config(config, overrides or [])
    counts = gen_service(cfg.gen, cfg.paths.benchmark_dir)

    table = Table(title=f"Benchmark written to {cfg.paths.benchmark_dir}")
    table.add_column("set")
    table.add_column("count", justify="right")
    for name, n in counts.items():
        table.add_row(name, str(n))
    console.print(table)


@app.command()
@handle_errors
def run(
        regime: Regime = typer.Option(..., "--regime", "-r", help="Training regime."),
        seed: Optional[int] = typer.Option(None, "--seed", help="Single seed; default runs every seed in run.seeds."),
        config: Optional[str] = ConfigOption,
        overrides: Optional[List[str]] = SetOption,
        ):
    """Pretrain, fine-tune under a regime, train the GZSL head and evaluate."""
    cfg = load_run_config(config, overrides or [])
    if seed is not None:
        results = [run_service(cfg, regime.value, seed)]
    else:
        results = run_seeds_service(cfg, regime.value)

    table = Table(title=f"{regime.value} runs")
    for col in ("seed", "As", "Au", "H", "separability", "run dir"):
        table.add_column(col, justify="right" if col != "run dir" else "left")
    for r in results:
        sep = r.report.separability
        table.add_row(str(r.report.seed), _fmt(r.report.a_s), _fmt(r.report.a_u), _fmt(r.report.h),
                      "-" if sep is None else f"{sep:.4f}", str(r.run_dir))
    console.print(table)
    if len(results) > 1:
        console.print(f"median H over {len(results)} seeds: [bold]{median_h(results):.2f}[/]")


@app.command("sweep-lambda")
@handle_errors
def sweep_lambda(
        regime: Regime = typer.Option(Regime.high, "--regime", "-r", help="Auxiliary regime to sweep."),
        lambdas: str = typer.Option("0,0.5,1,2", "--lambdas", help="Comma-separated channel weights."),
        seed: Optional[int] = typer.Option(None, "--seed", help="Seed; default is the first of run.seeds."),
        config: Optional[str] = ConfigOption,
        overrides: Optional[List[str]] = SetOption,
        ):
    """Run one regime over a grid of auxiliary-channel weights and report H per weight."""
    try:
        grid = [float(v) for v in lambdas.split(",") if v.strip()]
    except ValueError:
        raise typer.BadParameter(f"not a comma-separated list of numbers: {lambdas!r}", param_hint="--lambdas")
    cfg = load_run_config(config, overrides or [])
    seed = cfg.run.seeds[0] if seed is None else seed
    results = sweep_service(cfg, regime.value, grid, seed)

    table = Table(title=f"lambda sweep ({regime.value}, seed {seed})")
    table.add_column("lambda", justify="right")
    table.add_column("H", justify="right")
    for lam, r in results.items():
        table.add_row(f"{lam:g}", _fmt(r.report.h))
    console.print(table)


@app.command()
@handle_errors
def report(
        run_dirs: List[str] = typer.Argument(..., help="Run directories holding report.json."),
        out: Optional[str] = typer.Option(None, "--out", "-o", help="Where report.tsv and improvement.tsv go."),
        published: bool = typer.Option(False, "--published", help="Also show the published results with recomputed H."),
        ):
    """Combine finished runs into one table with improvement rates over the baseline."""
    reports, text, rates = report_service(run_dirs, out)
    best = max(range(len(reports)), key=lambda i: reports[i].h)

    table = Table(title="Generalized zero-shot results")
    for col in ("method", "As", "Au", "H"):
        table.add_column(col, justify="left" if col == "method" else "right")
    for i, r in enumerate(reports):
        style = "bold" if i == best else None
        table.add_row(r.method, _fmt(r.a_s), _fmt(r.a_u), _fmt(r.h), style=style)
    console.print(table)
    logger.debug(f"Report table:\n{text}")

    if rates:
        rate_table = Table(title="Improvement over baseline (%)")
        rate_table.add_column("method")
        rate_table.add_column("rate", justify="right")
        for method, rate in rates:
            rate_table.add_row(method, f"{rate:.1f}")
        console.print(rate_table)

    if published:
        _print_published()


def _print_published():
    for dataset in DATASETS:
        table = Table(title=f"Published results, {dataset}")
        for col in ("method", "As", "Au", "H printed", "H recomputed"):
            table.add_column(col, justify="left" if col == "method" else "right")
        for r, recomputed in consistency(rows_for(dataset)):
            table.add_row(r.method, _fmt(r.a_s), _fmt(r.a_u), _fmt(r.h), _fmt(recomputed),
                          style="bold" if r.framework else None)
        console.print(table)


@app.command()
@handle_errors
def project(
        run_dirs: List[str] = typer.Argument(..., help="Run directories holding features.tsv."),
        out: Optional[str] = typer.Option(None, "--out", "-o", help="Directory for projection_<regime>.tsv files."),
        ):
    """Project saved test features to 2-D and score their class separability."""
    scores = project_service(run_dirs, out)
    table = Table(title="Test feature separability")
    table.add_column("regime")
    table.add_column("Fisher ratio", justify="right")
    for regime, score in scores.items():
        table.add_row(regime, f"{score:.4f}")
    console.print(table)


if __name__ == "__main__":
    app()
