from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from minimax_lab.core.config_builder import ConfigError, build_family
from minimax_lab.core.optimizer import (
    DivergenceError,
    RunTrace,
    Schedule,
    StochasticOptions,
    balanced_run,
    swgd_run,
    write_trace_csv,
)
from minimax_lab.core.oracle import grid_minimax
from minimax_lab.core.summary_builder import build_summary
from minimax_lab.core.tasks import SimplexPoint, TaskFamily, worst_case_risk
from minimax_lab.core.weighting import AlphaSchedule, Balancer
from minimax_lab.models.experiment_config import ExperimentConfig, StudyName
from minimax_lab.models.reports import DivergedReport, PropertyCheck, StudyReport, TrainReport
from minimax_lab.services import experiments
from minimax_lab.utils.file_utils import safe_name, write_frame, write_text

logger = logging.getLogger(__name__)

DEFAULT_BALANCER_ETA = 0.01
DEFAULT_BALANCER_ALPHA = 50.0


@dataclass
class StudyOutput:
    report: StudyReport
    csv_path: Path
    summary_path: Path

    @property
    def passed(self) -> bool:
        return self.report.passed


class StudyService:
    def __init__(self, *, output_dir: Path, jobs: int = 1):
        self.output_dir = output_dir
        self.jobs = jobs

    def run(self, study: StudyName, config: ExperimentConfig, *, gap_T: Optional[int] = None) -> StudyOutput:
        if config.study is not None and config.study != study:
            raise ConfigError("study", f"config is for {config.study!r}, not {study!r}")
        csv_path = self.output_dir / f"{safe_name(study)}-{config.seed}.csv"

        if study == "gap":
            report = experiments.run_gap_study(gap_T if gap_T is not None else config.family.T or 4, jobs=self.jobs)
            self._write_table(report, csv_path)
        elif study == "train":
            report, trace = self._train(config)
            write_trace_csv(trace, csv_path)
        else:
            family = build_family(config.family, seed=config.seed)
            try:
                report = self._study(study, config, family)
                self._write_table(report, csv_path)
            except DivergenceError as e:
                logger.warning("%s: %s", study, e)
                report = _diverged_report(study, family, e)
                write_trace_csv(e.trace, csv_path)

        summary_path = write_text(build_summary(report), self.output_dir / "summary.txt")
        logger.info("%s: %s -> %s", study, "PASS" if report.passed else "FAIL", csv_path)
        return StudyOutput(report=report, csv_path=csv_path, summary_path=summary_path)

    # -----------------------------
    # Studies
    # -----------------------------

    def _study(self, study: StudyName, config: ExperimentConfig, family: TaskFamily) -> StudyReport:
        theta0 = _theta0(config, family)

        if study == "convergence":
            return experiments.run_convergence_study(
                family,
                theta0,
                config.K_list,
                config.step.mode,
                eta=config.step.eta,
                alpha=_alpha_override(config),
                check_rate=config.family.kind == "gap",
                jobs=self.jobs,
            )
        if study == "compare-init":
            return experiments.run_init_comparison(family, jobs=self.jobs)
        if study == "sample-complexity":
            if config.lambda_ is not None:
                try:
                    lam = SimplexPoint(np.asarray(config.lambda_))
                except ValueError as e:
                    raise ConfigError("lambda", str(e)) from e
                start = theta0 if config.theta0 is not None else grid_minimax(family, jobs=self.jobs).theta_star
                return experiments.run_erm_study(
                    family,
                    lam,
                    start,
                    config.eps,
                    config.delta,
                    config.N_grid,
                    config.trials,
                    config.seed,
                    jobs=self.jobs,
                )
            return experiments.run_worstcase_complexity_comparison(
                family,
                config.eps,
                config.delta,
                config.N_grid,
                config.trials,
                config.seed,
                jobs=self.jobs,
            )
        if study == "compare-balancers":
            alpha = config.alpha.value if config.alpha.mode == "constant" else DEFAULT_BALANCER_ALPHA
            return experiments.run_balancer_comparison(
                family,
                theta0,
                config.step.eta if config.step.eta is not None else DEFAULT_BALANCER_ETA,
                config.K,
                config.methods,
                alpha=alpha,
                jobs=self.jobs,
            )
        raise ConfigError("study", f"unknown study {study!r}")

    def _train(self, config: ExperimentConfig) -> tuple[TrainReport, RunTrace]:
        family = build_family(config.family, seed=config.seed)
        theta0 = _theta0(config, family)
        schedule = _schedule(config, family, theta0)
        checks: list[PropertyCheck] = []
        try:
            if config.balancer is Balancer.MINIMAX:
                stochastic = (
                    StochasticOptions(batch_size=config.batch_size, seed=config.seed)
                    if config.batch_size is not None
                    else None
                )
                trace = swgd_run(family, theta0, schedule, stochastic)
            else:
                trace = balanced_run(family, theta0, config.balancer, schedule.eta, schedule.K)
            checks.append(PropertyCheck(name="run stayed finite", passed=True))
        except DivergenceError as e:
            logger.warning("%s", e)
            trace = e.trace
            checks.append(PropertyCheck(name="run stayed finite", passed=False, detail=str(e)))

        if trace.K == 0:
            worst_bar = worst_last = float("nan")
            theta_bar = theta_last = theta0
        else:
            theta_bar, theta_last = trace.theta_bar, trace.theta_last
            worst_bar, _ = worst_case_risk(family, theta_bar)
            worst_last, _ = worst_case_risk(family, theta_last)
        report = TrainReport(
            family=family.name,
            method=config.balancer.value,
            K=schedule.K,
            eta=schedule.eta,
            theta_bar=theta_bar.tolist(),
            theta_last=theta_last.tolist(),
            worst_risk_bar=worst_bar,
            worst_risk_last=worst_last,
            wall_clock=trace.wall_clock,
            checks=checks,
        )
        return report, trace

    def _write_table(self, report: StudyReport, path: Path) -> Path:
        return write_frame(pd.DataFrame(report.table()), path)


def _diverged_report(study: StudyName, family: TaskFamily, error: DivergenceError) -> DivergedReport:
    trace = error.trace
    return DivergedReport(
        study=study,
        family=family.name,
        iterations=trace.K,
        last_theta=trace.theta_last.tolist() if trace.K else None,
        checks=[PropertyCheck(name="runs stayed finite", passed=False, detail=f"{error} after {trace.K} iterations")],
    )


def _theta0(config: ExperimentConfig, family: TaskFamily) -> np.ndarray:
    if config.theta0 is None:
        return np.zeros(family.dim)
    if len(config.theta0) != family.dim:
        raise ConfigError("theta0", f"expected {family.dim} entries, got {len(config.theta0)}")
    return np.asarray(config.theta0, dtype=np.float64)


def _alpha_override(config: ExperimentConfig) -> Optional[AlphaSchedule]:
    a = config.alpha
    if a.mode == "constant":
        return AlphaSchedule.constant(a.value)
    if None not in (a.R0, a.Lp, a.T, a.B):
        return AlphaSchedule.theoretical(a.R0, a.Lp, a.T, a.B)
    return None


def _schedule(config: ExperimentConfig, family: TaskFamily, theta0: np.ndarray) -> Schedule:
    alpha = _alpha_override(config)
    if config.step.mode == "constant" and alpha is not None:
        return Schedule.constant(config.step.eta, alpha, config.K)

    # Theoretical pieces need R0 = |theta0 - theta*|; the grid oracle supplies theta*.
    R0 = config.alpha.R0
    if R0 is None:
        R0 = float(np.linalg.norm(theta0 - grid_minimax(family).theta_star))
    Lp = config.alpha.Lp or family.lipschitz
    T = config.alpha.T or family.T
    B = config.alpha.B or family.bound
    theoretical = Schedule.theoretical(R0=R0, Lp=Lp, K=config.K, T=T, B=B, alpha=alpha)
    if config.step.mode == "constant":
        return Schedule.constant(config.step.eta, theoretical.alpha, config.K)
    return theoretical


def run_study(
    study: StudyName,
    config: ExperimentConfig,
    *,
    output_dir: Path,
    jobs: int = 1,
    gap_T: Optional[int] = None,
) -> StudyOutput:
    return StudyService(output_dir=output_dir, jobs=jobs).run(study, config, gap_T=gap_T)
