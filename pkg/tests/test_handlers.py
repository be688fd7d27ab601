import logging
import math

import pytest
import typer

from config import get_env_flag
from util.bench_handler import gen_service
from util.error_handler import EXIT_DOMAIN, EXIT_STAGE, EXIT_UNEXPECTED, handle_errors
from util.log_handler import RUN_LOG_FILE, run_log
from util.report_handler import improvement_rates, write_improvements
from util.run_handler import run_service, sweep_service
from zsl.errors import CapacityError, PreconditionError, StageError
from zsl.models.data_schema import EvalReport, PathsConfig, RunConfig


def _raising(exc):
    @handle_errors
    def command():
        raise exc

    return command


@pytest.mark.parametrize("exc, code", [
    (CapacityError("too few species"), EXIT_DOMAIN),
    (StageError("load", FileNotFoundError("samples.tsv")), EXIT_STAGE),
    (RuntimeError("boom"), EXIT_UNEXPECTED),
])
def test_exceptions_map_to_exit_status(exc, code):
    with pytest.raises(typer.Exit) as info:
        _raising(exc)()
    assert info.value.exit_code == code


def test_usage_errors_pass_through():
    with pytest.raises(typer.BadParameter):
        _raising(typer.BadParameter("bad"))()


def test_handled_command_returns_its_value():
    assert handle_errors(lambda x: x + 1)(2) == 3


@pytest.mark.parametrize("value, expected", [("true", True), ("1", True), (" Yes ", True), ("false", False), ("0", False)])
def test_env_flag(monkeypatch, value, expected):
    monkeypatch.setenv("ZSL_TEST_FLAG", value)
    assert get_env_flag("ZSL_TEST_FLAG") is expected


def test_env_flag_default(monkeypatch):
    monkeypatch.delenv("ZSL_TEST_FLAG", raising=False)
    assert get_env_flag("ZSL_TEST_FLAG", default=True) is True


def test_run_log_mirrors_and_detaches(tmp_path):
    log = logging.getLogger("zsl-dual.test-run-log")
    log.setLevel(logging.INFO)
    with run_log(log, tmp_path / "run") as path:
        log.info("inside the run")
    log.info("after the run")
    text = path.read_text()
    assert path.name == RUN_LOG_FILE
    assert "inside the run" in text and "after the run" not in text


def _report(method, regime, h):
    return EvalReport(method=method, regime=regime, a_s=h, a_u=h, h=h)


def test_improvement_over_first_baseline():
    reports = [_report("low-relevance", "low", 45.0), _report("baseline", "baseline", 50.0),
               _report("high-relevance", "high", 55.0)]
    rates = improvement_rates(reports)
    assert [m for m, _ in rates] == ["low-relevance", "high-relevance"]
    assert rates[0][1] == pytest.approx(-10.0)
    assert rates[1][1] == pytest.approx(10.0)
    assert write_improvements(rates).splitlines()[0] == "method\trate"


def test_improvement_needs_a_usable_baseline():
    assert improvement_rates([_report("high-relevance", "high", 55.0)]) == []
    assert improvement_rates([_report("baseline", "baseline", 0.0), _report("high-relevance", "high", 5.0)]) == []


@pytest.mark.parametrize("regime, lambdas", [("baseline", [1.0]), ("high", []), ("high", [0.5, -1.0])])
def test_sweep_rejects_bad_grids(regime, lambdas):
    with pytest.raises(PreconditionError):
        sweep_service(RunConfig(), regime, lambdas, seed=0)


def test_run_at_default_benchmark_scale_stays_finite(tmp_path):
    base = RunConfig()
    cfg = base.model_copy(update={
        "paths": PathsConfig(benchmark_dir=str(tmp_path / "bench"), output_dir=str(tmp_path / "runs")),
        "train": base.train.model_copy(update={"epochs": 1, "pretrain_epochs": 1}),
        "vae": base.vae.model_copy(update={"epochs": 2}),
        "classifier": base.classifier.model_copy(update={"epochs": 2}),
    })
    gen_service(cfg.gen, cfg.paths.benchmark_dir)
    result = run_service(cfg, "high", seed=0)

    rows = (result.run_dir / "vae_history.tsv").read_text().splitlines()[1:]
    values = [float(v) for row in rows for v in row.split("\t")[1:]]
    assert values and all(math.isfinite(v) for v in values)
    assert 0.0 <= result.report.h <= 100.0
    assert math.isfinite(result.report.separability)
    assert len(result.report.per_class) == cfg.gen.n_seen + cfg.gen.n_unseen
