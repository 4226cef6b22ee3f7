from __future__ import annotations

from minimax_lab.models.reports import (
    BalancerReport,
    ComplexityReport,
    ConvergenceReport,
    DivergedReport,
    GapReport,
    InitComparisonReport,
    StudyReport,
    TrainReport,
)


def _metric_lines(report: StudyReport) -> list[str]:
    if isinstance(report, GapReport):
        return [
            f"T: {report.T}",
            f"minimax point: {report.minimax_point:.6g}",
            f"minimax value: {report.minimax_value:.6g}",
            f"average value: {report.average_value:.6g}",
            f"ratio: {report.measured_ratio:.6g} (analytic {report.analytic_ratio:.6g})",
        ]
    if isinstance(report, ConvergenceReport):
        lines = [f"R0: {report.R0:.6g}  L': {report.Lp:.6g}  oracle value: {report.oracle_value:.9g}"]
        lines += [
            f"K={r.K}: excess {r.excess:.6g}, bound {r.bound_value:.6g}, "
            f"bound satisfied: {str(r.bound_satisfied).lower()}"
            for r in report.rows
        ]
        return lines
    if isinstance(report, InitComparisonReport):
        lines = [
            f"worst-case risk (minimax init): {report.worst_max:.9g}",
            f"worst-case risk (average init): {report.worst_average:.9g}",
            f"ratio: {report.ratio:.6g}",
        ]
        if report.swgd_value is not None:
            lines.append(f"swgd worst-case risk: {report.swgd_value:.9g} (grid error {report.grid_error:.3g})")
        return lines
    if isinstance(report, ComplexityReport):
        lines = [f"eps: {report.eps:g}  delta: {report.delta:g}  trials: {report.trials}"]
        for init, n_hat in report.worst_N_hat.items():
            shown = "not reached" if n_hat is None else str(n_hat)
            vertices = report.worst_vertices.get(init)
            where = f" at vertices {vertices}" if vertices else ""
            lines.append(f"{init}: N_hat {shown}{where}, bound {report.worst_bound[init]:.6g}")
        return lines
    if isinstance(report, BalancerReport):
        lines = [f"eta: {report.eta:g}  K: {report.K}  gradient evaluations per method: {report.grad_evals}"]
        if report.oracle_value is not None:
            lines.append(f"oracle minimax value: {report.oracle_value:.9g}")
        lines += [
            f"{r.method}: worst {r.worst_risk:.6g}, average {r.avg_risk:.6g}"
            for r in report.rows
        ]
        return lines
    if isinstance(report, DivergedReport):
        lines = [f"diverged after {report.iterations} iterations"]
        if report.last_theta is not None:
            lines.append("last iterate: " + " ".join(f"{x:.6g}" for x in report.last_theta))
        return lines
    if isinstance(report, TrainReport):
        return [
            f"method: {report.method}  K: {report.K}  eta: {report.eta:.6g}",
            f"worst-case risk (averaged iterate): {report.worst_risk_bar:.9g}",
            f"worst-case risk (last iterate): {report.worst_risk_last:.9g}",
        ]
    return []


def build_summary(report: StudyReport) -> str:
    """Plain-text summary: metrics, one PASS/FAIL line per check, then the overall result."""
    lines = [f"study: {report.study}", f"family: {report.family}"]
    lines += _metric_lines(report)
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        lines.append(f"{status} {check.name}" + (f" ({check.detail})" if check.detail else ""))
    lines.append(f"RESULT: {'PASS' if report.passed else 'FAIL'}")
    return "\n".join(lines) + "\n"
