"""Continuous quality monitoring: weekly windows, shift detection, alerts.

Sessions are grouped into weekly windows; each window yields a report with
volume, score moments, demographic mix, population-stability indices against
a baseline, item-exposure rates, and repeater gain.  Alert rules compare
report metrics against thresholds and can open review-workflow entries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .review import ReviewQueue, ReviewSubject

PSI_EPSILON = 1e-4


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    week: int
    score: float
    demographics: Mapping[str, str] = field(default_factory=dict)
    item_exposures: tuple[str, ...] = ()
    repeat: bool = False
    prior_score: float | None = None

    def __post_init__(self) -> None:
        if self.week < 0:
            raise ValueError("week index must be non-negative")
        if self.repeat and self.prior_score is None:
            raise ValueError("repeat sessions must carry the prior score")


def load_sessions(path: str | Path) -> list[SessionRecord]:
    """Read a JSON-lines session stream; week indices must never decrease."""
    sessions: list[SessionRecord] = []
    last_week = -1
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            session = SessionRecord(
                session_id=str(record["session_id"]),
                week=int(record["week"]),
                score=float(record["score"]),
                demographics={str(k): str(v) for k, v in record.get("demographics", {}).items()},
                item_exposures=tuple(str(i) for i in record.get("item_exposures", [])),
                repeat=bool(record.get("repeat", False)),
                prior_score=(
                    float(record["prior_score"]) if record.get("prior_score") is not None else None
                ),
            )
            if session.week < last_week:
                raise ValueError(
                    f"line {lineno}: week {session.week} after week {last_week}; "
                    "ingestion order must be non-decreasing"
                )
            last_week = session.week
            sessions.append(session)
    return sessions


@dataclass(frozen=True)
class Alert:
    rule_name: str
    metric: str
    value: float
    threshold: float
    direction: str


@dataclass(frozen=True)
class MonitorReport:
    week: int
    volume: int
    score_mean: float | None
    score_sd: float | None
    demographic_mix: Mapping[str, Mapping[str, float]]
    psi: Mapping[str, float] | None
    top_exposures: tuple[tuple[str, float], ...]
    repeater_gain: float | None
    alerts: tuple[Alert, ...] = ()

    def __post_init__(self) -> None:
        for dimension, proportions in self.demographic_mix.items():
            total = sum(proportions.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"proportions for {dimension!r} sum to {total}, not 1")
        if self.psi is not None:
            for dimension, value in self.psi.items():
                if value < -1e-12:
                    raise ValueError(f"PSI for {dimension!r} is negative: {value}")
        for _item, rate in self.top_exposures:
            if not 0.0 <= rate <= 1.0:
                raise ValueError("exposure rates must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Shift statistics


def _aligned_items(
    current: Mapping[str, float], baseline: Mapping[str, float], dimension: str
) -> list[tuple[float, float]]:
    if set(current) != set(baseline):
        raise ValueError(
            f"category sets differ for dimension {dimension!r}: "
            f"{sorted(current)} vs {sorted(baseline)}"
        )
    return [(current[c], baseline[c]) for c in sorted(current)]


def demographic_shift(
    current: Mapping[str, Mapping[str, float]],
    baseline: Mapping[str, Mapping[str, float]],
) -> dict[str, float]:
    """Population-stability index per demographic dimension.

    PSI = sum over categories of (p_cur - p_base) * ln(p_cur / p_base), with
    zero cells floored at 1e-4 before the ratio so the logarithm stays finite.
    Category sets must already be aligned per dimension.
    """
    if set(current) != set(baseline):
        raise ValueError(
            f"dimension sets differ: {sorted(current)} vs {sorted(baseline)}"
        )
    out: dict[str, float] = {}
    for dimension in sorted(current):
        total = 0.0
        for p_cur, p_base in _aligned_items(current[dimension], baseline[dimension], dimension):
            p = max(p_cur, PSI_EPSILON)
            q = max(p_base, PSI_EPSILON)
            total += (p - q) * math.log(p / q)
        out[dimension] = total
    return out


def chi_square_shift(
    current: Mapping[str, Mapping[str, float]],
    baseline: Mapping[str, Mapping[str, float]],
) -> dict[str, float]:
    """Secondary shift statistic: sum of (p_cur - p_base)^2 / p_base per dimension."""
    if set(current) != set(baseline):
        raise ValueError(
            f"dimension sets differ: {sorted(current)} vs {sorted(baseline)}"
        )
    out: dict[str, float] = {}
    for dimension in sorted(current):
        total = 0.0
        for p_cur, p_base in _aligned_items(current[dimension], baseline[dimension], dimension):
            q = max(p_base, PSI_EPSILON)
            total += (p_cur - q) ** 2 / q
        out[dimension] = total
    return out


# ---------------------------------------------------------------------------
# Window computation


def _demographic_mix(sessions: Sequence[SessionRecord]) -> dict[str, dict[str, float]]:
    counts: dict[str, dict[str, int]] = {}
    totals: dict[str, int] = {}
    for session in sessions:
        for dimension, category in session.demographics.items():
            bucket = counts.setdefault(dimension, {})
            bucket[category] = bucket.get(category, 0) + 1
            totals[dimension] = totals.get(dimension, 0) + 1
    return {
        dimension: {c: n / totals[dimension] for c, n in sorted(bucket.items())}
        for dimension, bucket in sorted(counts.items())
    }


def _union_aligned(
    current: Mapping[str, Mapping[str, float]],
    baseline: Mapping[str, Mapping[str, float]],
) -> tuple[dict[str, dict[str, float]], dict[str, dict[str, float]]]:
    """Zero-fill both sides so every dimension shares one category set.

    A category absent from one side is a zero cell (handled by the epsilon
    floor), not a schema mismatch.  Only dimensions present in the baseline
    are compared.
    """
    cur_out: dict[str, dict[str, float]] = {}
    base_out: dict[str, dict[str, float]] = {}
    for dimension in baseline:
        cur_dim = current.get(dimension, {})
        categories = set(cur_dim) | set(baseline[dimension])
        cur_out[dimension] = {c: cur_dim.get(c, 0.0) for c in categories}
        base_out[dimension] = {c: baseline[dimension].get(c, 0.0) for c in categories}
    return cur_out, base_out


def exposure_rates(sessions: Sequence[SessionRecord]) -> dict[str, float]:
    """Fraction of sessions in which each item appears at least once."""
    if not sessions:
        return {}
    counts: dict[str, int] = {}
    for session in sessions:
        for item_id in set(session.item_exposures):
            counts[item_id] = counts.get(item_id, 0) + 1
    return {item: n / len(sessions) for item, n in counts.items()}


def compute_window(
    sessions: Iterable[SessionRecord],
    week: int,
    baseline: Mapping[str, Mapping[str, float]] | None = None,
    top_n: int = 10,
) -> MonitorReport:
    """Build the weekly report; absent metrics (n too small) are None."""
    window = [s for s in sessions if s.week == week]
    if not window:
        return MonitorReport(
            week=week,
            volume=0,
            score_mean=None,
            score_sd=None,
            demographic_mix={},
            psi=None,
            top_exposures=(),
            repeater_gain=None,
        )
    scores = np.array([s.score for s in window], dtype=float)
    mean = float(np.mean(scores))
    sd = float(np.std(scores, ddof=1)) if len(scores) >= 2 else None
    mix = _demographic_mix(window)
    psi: dict[str, float] | None = None
    if baseline is not None:
        cur_aligned, base_aligned = _union_aligned(mix, baseline)
        psi = demographic_shift(cur_aligned, base_aligned)
    rates = exposure_rates(window)
    top = tuple(sorted(rates.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n])
    gains = [s.score - s.prior_score for s in window if s.repeat and s.prior_score is not None]
    gain = float(np.mean(gains)) if gains else None
    return MonitorReport(
        week=week,
        volume=len(window),
        score_mean=mean,
        score_sd=sd,
        demographic_mix=mix,
        psi=psi,
        top_exposures=top,
        repeater_gain=gain,
    )


# ---------------------------------------------------------------------------
# Alerts


@dataclass(frozen=True)
class AlertRule:
    name: str
    metric: str
    threshold: float
    direction: str = "above"
    open_review: bool = False

    def __post_init__(self) -> None:
        if self.direction not in ("above", "below"):
            raise ValueError("direction must be 'above' or 'below'")


def _metric_value(report: MonitorReport, metric: str) -> float | None:
    if metric == "volume":
        return float(report.volume)
    if metric == "score_mean":
        return report.score_mean
    if metric == "score_sd":
        return report.score_sd
    if metric == "repeater_gain":
        return report.repeater_gain
    if metric == "exposure_max":
        return max((rate for _i, rate in report.top_exposures), default=None)
    if metric.startswith("psi."):
        dimension = metric[len("psi."):]
        return None if report.psi is None else report.psi.get(dimension)
    if metric.startswith("exposure."):
        item_id = metric[len("exposure."):]
        return dict(report.top_exposures).get(item_id)
    raise ValueError(f"unknown metric {metric!r}")


def evaluate_alerts(
    report: MonitorReport,
    rules: Sequence[AlertRule],
    review_queue: ReviewQueue | None = None,
) -> list[Alert]:
    """One alert per breached rule; absent metrics never breach.

    Rules with ``open_review`` set also enqueue a single-stage review entry
    when a queue is provided.
    """
    alerts: list[Alert] = []
    for rule in rules:
        value = _metric_value(report, rule.metric)
        if value is None:
            continue
        breached = value > rule.threshold if rule.direction == "above" else value < rule.threshold
        if not breached:
            continue
        alert = Alert(rule.name, rule.metric, float(value), rule.threshold, rule.direction)
        alerts.append(alert)
        if rule.open_review and review_queue is not None:
            review_queue.enqueue(
                ReviewSubject(
                    subject_type="monitor_alert",
                    subject_id=f"week-{report.week}:{rule.metric}",
                    payload={
                        "rule": rule.name,
                        "metric": rule.metric,
                        "value": float(value),
                        "threshold": rule.threshold,
                        "direction": rule.direction,
                        "week": report.week,
                    },
                )
            )
    return alerts


def with_alerts(report: MonitorReport, alerts: Sequence[Alert]) -> MonitorReport:
    return replace(report, alerts=tuple(alerts))


# ---------------------------------------------------------------------------
# Serialization


def report_to_dict(report: MonitorReport) -> dict:
    return {
        "week": report.week,
        "volume": report.volume,
        "score_mean": report.score_mean,
        "score_sd": report.score_sd,
        "demographic_mix": {d: dict(v) for d, v in report.demographic_mix.items()},
        "psi": None if report.psi is None else dict(report.psi),
        "top_exposures": [[item, rate] for item, rate in report.top_exposures],
        "repeater_gain": report.repeater_gain,
        "alerts": [
            {
                "rule_name": a.rule_name,
                "metric": a.metric,
                "value": a.value,
                "threshold": a.threshold,
                "direction": a.direction,
            }
            for a in report.alerts
        ],
    }


def report_to_json(report: MonitorReport) -> str:
    return json.dumps(report_to_dict(report), sort_keys=True, separators=(",", ":"))


def render_report(report: MonitorReport) -> str:
    """Short human-readable summary for CLI output and emails."""
    lines = [f"week {report.week}: {report.volume} sessions"]
    if report.score_mean is not None:
        sd = f" sd={report.score_sd:.3f}" if report.score_sd is not None else ""
        lines.append(f"  score mean={report.score_mean:.3f}{sd}")
    if report.psi:
        worst = max(report.psi.items(), key=lambda kv: kv[1])
        lines.append(f"  psi max: {worst[0]}={worst[1]:.4f}")
    if report.top_exposures:
        item, rate = report.top_exposures[0]
        lines.append(f"  top exposure: {item}={rate:.3f}")
    if report.repeater_gain is not None:
        lines.append(f"  repeater gain: {report.repeater_gain:+.3f}")
    for alert in report.alerts:
        lines.append(
            f"  ALERT {alert.rule_name}: {alert.metric}={alert.value:.4f} "
            f"{alert.direction} {alert.threshold}"
        )
    return "\n".join(lines)
