"""Fairness auditing: representation, DIF, and DRF.

Representation reports compare gender × first-language cell proportions to
targets. Differential item functioning is tested two ways — Mantel-Haenszel
over ability strata and nested logistic likelihood-ratio tests — and
differential rater functioning is a least-squares regression of the machine
quantity on human consensus plus group contrasts. Flagged results route back
to human fairness review.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

__all__ = [
    "DemographicRecord",
    "RepresentationReport",
    "DifRecord",
    "DifResult",
    "LogisticDifResult",
    "DrfResult",
    "ReviewFlag",
    "DEFAULT_GENDERS",
    "DEFAULT_L1S",
    "representation_report",
    "dif_mantel_haenszel",
    "dif_logistic",
    "drf_analysis",
    "route_flags",
]

DEFAULT_GENDERS = ("female", "male")
DEFAULT_L1S = (
    "Arabic",
    "Mandarin Chinese",
    "Telugu",
    "English",
    "Spanish",
    "Gujarati",
    "Bengali",
    "other",
)

# Delta-scale flagging thresholds (configurable; see DifThresholds).
_DELTA_NEGLIGIBLE = 1.0
_DELTA_LARGE = 1.5
_ALPHA = 0.05


@dataclass(frozen=True)
class DemographicRecord:
    gender: str
    l1: str


@dataclass(frozen=True)
class RepresentationReport:
    total: int
    counts: Mapping[tuple[str, str], int]
    proportions: Mapping[tuple[str, str], float]
    targets: Mapping[tuple[str, str], float]
    deviations: Mapping[tuple[str, str], float]
    tolerance: float
    failing_cells: tuple[tuple[str, str], ...]

    @property
    def passed(self) -> bool:
        return not self.failing_cells


def representation_report(
    records: Sequence[DemographicRecord],
    targets: Mapping[tuple[str, str], float],
    tolerance: float,
    genders: Sequence[str] = DEFAULT_GENDERS,
    l1s: Sequence[str] = DEFAULT_L1S,
) -> RepresentationReport:
    """Compare observed gender × L1 proportions against target proportions."""
    if not records:
        raise ValueError("no records")
    if abs(sum(targets.values()) - 1.0) > 1e-9:
        raise ValueError("target proportions must sum to 1")
    cells = [(g, l1) for g in genders for l1 in l1s]
    counts = {cell: 0 for cell in cells}
    for i, rec in enumerate(records):
        if rec.gender not in genders or rec.l1 not in l1s:
            raise ValueError(
                f"record {i}: unknown category gender={rec.gender!r} l1={rec.l1!r}"
            )
        counts[(rec.gender, rec.l1)] += 1
    n = len(records)
    proportions = {cell: counts[cell] / n for cell in cells}
    deviations = {
        cell: abs(proportions[cell] - targets.get(cell, 0.0)) for cell in cells
    }
    failing = tuple(cell for cell in cells if deviations[cell] > tolerance)
    return RepresentationReport(
        total=n,
        counts=counts,
        proportions=proportions,
        targets={cell: targets.get(cell, 0.0) for cell in cells},
        deviations=deviations,
        tolerance=tolerance,
        failing_cells=failing,
    )


# ---------------------------------------------------------------------------
# Mantel-Haenszel DIF


@dataclass(frozen=True)
class DifRecord:
    """One taker's outcome on one item: correct flag, group, ability score."""

    correct: bool
    group: str  # "focal" or "reference"
    ability: float

    def __post_init__(self) -> None:
        if self.group not in ("focal", "reference"):
            raise ValueError(f"group must be focal/reference, got {self.group!r}")


@dataclass(frozen=True)
class DifResult:
    item_id: str
    status: str  # "ok" | "insufficient_data" | "degenerate"
    mh_chi_square: float | None = None
    common_odds_ratio: float | None = None
    delta_mh: float | None = None
    p_value: float | None = None
    classification: str | None = None  # "A" | "B" | "C"
    n_strata: int = 0
    lr_uniform_p: float | None = None
    lr_nonuniform_p: float | None = None


def _stratify(records: Sequence[DifRecord], n_strata: int) -> list[list[DifRecord]]:
    """Ability-quantile strata, merged upward until each has both groups."""
    scores = np.array([r.ability for r in records])
    distinct = np.unique(scores)
    if len(distinct) <= n_strata:
        # Few distinct score levels: one stratum per level beats interpolated
        # quantile edges, which lump tied levels together.
        n_strata = len(distinct)
        assignment = np.searchsorted(distinct, scores, side="left")
    else:
        qs = np.quantile(scores, np.linspace(0, 1, n_strata + 1)[1:-1])
        assignment = np.searchsorted(qs, scores, side="left")
    buckets: list[list[DifRecord]] = [[] for _ in range(n_strata)]
    for rec, k in zip(records, assignment):
        buckets[int(k)].append(rec)

    merged: list[list[DifRecord]] = []
    carry: list[DifRecord] = []
    for bucket in buckets:
        bucket = carry + bucket
        carry = []
        groups = {r.group for r in bucket}
        if groups == {"focal", "reference"}:
            merged.append(bucket)
        else:
            carry = bucket
    if carry:
        if merged:
            merged[-1].extend(carry)
        elif {r.group for r in carry} == {"focal", "reference"}:
            merged.append(carry)
    return merged


def dif_mantel_haenszel(
    item_id: str, records: Sequence[DifRecord], n_strata: int = 10
) -> DifResult:
    """Mantel-Haenszel DIF over ability strata.

    Per stratum k, the 2×2 table is (reference × focal) by (correct ×
    incorrect): A=ref-correct, B=ref-wrong, C=focal-correct, D=focal-wrong.
    The common odds ratio is Σ(A·D/T)/Σ(B·C/T); the chi-square uses the 0.5
    continuity correction (clamped at zero); delta = −2.35·ln(OR); flags use
    the delta thresholds: A when |Δ|<1 or p≥α, C when |Δ|>1.5 and p<α, else B.
    Strata with a zero margin are dropped.
    """
    strata = _stratify(records, n_strata)
    sum_ad = sum_bc = sum_a = sum_e = sum_var = 0.0
    used = 0
    for bucket in strata:
        a = sum(1 for r in bucket if r.group == "reference" and r.correct)
        b = sum(1 for r in bucket if r.group == "reference" and not r.correct)
        c = sum(1 for r in bucket if r.group == "focal" and r.correct)
        d = sum(1 for r in bucket if r.group == "focal" and not r.correct)
        n_ref, n_foc = a + b, c + d
        m_correct, m_wrong = a + c, b + d
        t = n_ref + n_foc
        if min(n_ref, n_foc, m_correct, m_wrong) == 0 or t < 2:
            continue
        used += 1
        sum_ad += a * d / t
        sum_bc += b * c / t
        sum_a += a
        sum_e += n_ref * m_correct / t
        sum_var += n_ref * n_foc * m_correct * m_wrong / (t * t * (t - 1))

    if used < 2:
        return DifResult(item_id=item_id, status="insufficient_data", n_strata=used)
    if sum_ad == 0.0 or sum_bc == 0.0 or sum_var == 0.0:
        return DifResult(item_id=item_id, status="degenerate", n_strata=used)

    odds_ratio = sum_ad / sum_bc
    correction = max(0.0, abs(sum_a - sum_e) - 0.5)
    chi_square = correction * correction / sum_var
    p = float(stats.chi2.sf(chi_square, df=1))
    delta = -2.35 * math.log(odds_ratio)
    if abs(delta) < _DELTA_NEGLIGIBLE or p >= _ALPHA:
        label = "A"
    elif abs(delta) > _DELTA_LARGE and p < _ALPHA:
        label = "C"
    else:
        label = "B"
    return DifResult(
        item_id=item_id,
        status="ok",
        mh_chi_square=chi_square,
        common_odds_ratio=odds_ratio,
        delta_mh=delta,
        p_value=p,
        classification=label,
        n_strata=used,
    )


# ---------------------------------------------------------------------------
# logistic DIF


@dataclass(frozen=True)
class LogisticDifResult:
    item_id: str
    status: str  # "ok" | "non_converged" | "insufficient_data"
    lr_uniform_p: float | None = None
    lr_nonuniform_p: float | None = None
    group_coefficient: float | None = None
    group_se: float | None = None
    interaction_coefficient: float | None = None
    log_likelihoods: tuple[float, float, float] | None = None


def _logistic_fit(
    X: np.ndarray, y: np.ndarray, max_iter: int = 50, tol: float = 1e-10
) -> tuple[np.ndarray, float, bool]:
    """Newton-Raphson maximum-likelihood logistic fit.

    Returns (coefficients, log-likelihood, converged).
    """
    beta = np.zeros(X.shape[1])
    converged = False
    for _ in range(max_iter):
        eta = np.clip(X @ beta, -30, 30)
        p = 1.0 / (1.0 + np.exp(-eta))
        grad = X.T @ (y - p)
        w = p * (1.0 - p)
        hess = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            converged = True
            break
    if np.max(np.abs(beta)) > 1e4:
        converged = False
    eta = np.clip(X @ beta, -30, 30)
    p = 1.0 / (1.0 + np.exp(-eta))
    eps = 1e-12
    ll = float(np.sum(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
    return beta, ll, converged


def dif_logistic(item_id: str, records: Sequence[DifRecord]) -> LogisticDifResult:
    """Nested logistic DIF tests: ability, +group, +group×ability.

    Likelihood-ratio chi-square(1) p-values for the group increment (uniform
    DIF) and the interaction increment (non-uniform DIF).
    """
    if len(records) < 10 or len({r.group for r in records}) < 2:
        return LogisticDifResult(item_id=item_id, status="insufficient_data")
    y = np.array([1.0 if r.correct else 0.0 for r in records])
    ability = np.array([r.ability for r in records])
    group = np.array([1.0 if r.group == "focal" else 0.0 for r in records])
    ones = np.ones(len(records))

    x0 = np.column_stack([ones, ability])
    x1 = np.column_stack([ones, ability, group])
    x2 = np.column_stack([ones, ability, group, group * ability])
    fits = [_logistic_fit(x, y) for x in (x0, x1, x2)]
    if not all(ok for _, _, ok in fits):
        return LogisticDifResult(item_id=item_id, status="non_converged")
    (b0, ll0, _), (b1, ll1, _), (b2, ll2, _) = fits
    lr_uniform = max(0.0, 2.0 * (ll1 - ll0))
    lr_nonuniform = max(0.0, 2.0 * (ll2 - ll1))

    p1 = 1.0 / (1.0 + np.exp(-np.clip(x1 @ b1, -30, 30)))
    w1 = p1 * (1.0 - p1)
    try:
        cov1 = np.linalg.inv(x1.T @ (x1 * w1[:, None]))
        group_se = float(math.sqrt(max(cov1[2, 2], 0.0)))
    except np.linalg.LinAlgError:
        group_se = None
    return LogisticDifResult(
        item_id=item_id,
        status="ok",
        lr_uniform_p=float(stats.chi2.sf(lr_uniform, df=1)),
        lr_nonuniform_p=float(stats.chi2.sf(lr_nonuniform, df=1)),
        group_coefficient=float(b1[2]),
        group_se=group_se,
        interaction_coefficient=float(b2[3]),
        log_likelihoods=(ll0, ll1, ll2),
    )


# ---------------------------------------------------------------------------
# DRF


@dataclass(frozen=True)
class GroupEffect:
    group: str
    coefficient: float
    std_error: float
    p_value: float
    flagged: bool


@dataclass(frozen=True)
class DrfResult:
    scope: str  # "score" or "feature:<name>"
    status: str  # "ok" | "insufficient_groups"
    reference_group: str | None = None
    consensus_coefficient: float | None = None
    effects: tuple[GroupEffect, ...] = ()

    @property
    def flagged_groups(self) -> tuple[str, ...]:
        return tuple(e.group for e in self.effects if e.flagged)


def drf_analysis(
    machine: Sequence[float],
    consensus: Sequence[float],
    groups: Sequence[str],
    scope: str = "score",
    flag_threshold: float = 0.1,
    alpha: float = _ALPHA,
    reference_group: str | None = None,
) -> DrfResult:
    """Regress the machine quantity on consensus plus group contrasts.

    The reference group (largest by default) is absorbed into the intercept;
    each other group gets a dummy coefficient. Groups whose coefficient
    exceeds the flag threshold in magnitude with p < alpha are flagged.
    """
    y = np.asarray(machine, dtype=float)
    c = np.asarray(consensus, dtype=float)
    if not (len(y) == len(c) == len(groups)) or len(y) == 0:
        raise ValueError("machine, consensus, and groups must be equal-length")
    labels = sorted(set(groups))
    if len(labels) < 2:
        return DrfResult(scope=scope, status="insufficient_groups")
    if reference_group is None:
        counts = {g: 0 for g in labels}
        for g in groups:
            counts[g] += 1
        reference_group = max(labels, key=lambda g: (counts[g], g))
    elif reference_group not in labels:
        raise ValueError(f"reference group {reference_group!r} not present")
    others = [g for g in labels if g != reference_group]

    X = np.column_stack(
        [np.ones(len(y)), c]
        + [np.array([1.0 if g == other else 0.0 for g in groups]) for other in others]
    )
    n, p = X.shape
    if n <= p:
        return DrfResult(scope=scope, status="insufficient_groups")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    residuals = y - X @ beta
    dof = n - p
    sigma2 = float(residuals @ residuals) / dof
    try:
        cov = sigma2 * np.linalg.inv(X.T @ X)
    except np.linalg.LinAlgError:
        return DrfResult(scope=scope, status="insufficient_groups")
    ses = np.sqrt(np.maximum(np.diag(cov), 0.0))

    effects = []
    for i, other in enumerate(others):
        coef = float(beta[2 + i])
        se = float(ses[2 + i])
        if se == 0.0:
            pv = 0.0 if coef != 0 else 1.0
        else:
            pv = float(2.0 * stats.t.sf(abs(coef) / se, dof))
        effects.append(
            GroupEffect(
                group=other,
                coefficient=coef,
                std_error=se,
                p_value=pv,
                flagged=abs(coef) > flag_threshold and pv < alpha,
            )
        )
    return DrfResult(
        scope=scope,
        status="ok",
        reference_group=reference_group,
        consensus_coefficient=float(beta[1]),
        effects=tuple(effects),
    )


# ---------------------------------------------------------------------------
# routing


@dataclass(frozen=True)
class ReviewFlag:
    """A fairness finding to be queued for human FAB review."""

    source: str  # "dif" | "drf"
    target_id: str
    reason: str
    statistics: Mapping[str, object] = field(default_factory=dict)


def route_flags(
    dif_results: Iterable[DifResult] = (),
    drf_results: Iterable[DrfResult] = (),
) -> list[ReviewFlag]:
    """Turn class-C DIF items and flagged DRF groups into FAB review flags."""
    flags: list[ReviewFlag] = []
    for res in dif_results:
        if res.status == "ok" and res.classification == "C":
            flags.append(
                ReviewFlag(
                    source="dif",
                    target_id=res.item_id,
                    reason=f"class C DIF (delta={res.delta_mh:.3f})",
                    statistics={
                        "mh_chi_square": res.mh_chi_square,
                        "common_odds_ratio": res.common_odds_ratio,
                        "delta_mh": res.delta_mh,
                        "p_value": res.p_value,
                    },
                )
            )
    for res in drf_results:
        if res.status != "ok":
            continue
        for effect in res.effects:
            if effect.flagged:
                flags.append(
                    ReviewFlag(
                        source="drf",
                        target_id=f"{res.scope}:{effect.group}",
                        reason=(
                            f"group {effect.group} deviates by "
                            f"{effect.coefficient:+.3f} after controlling consensus"
                        ),
                        statistics={
                            "scope": res.scope,
                            "group": effect.group,
                            "coefficient": effect.coefficient,
                            "std_error": effect.std_error,
                            "p_value": effect.p_value,
                        },
                    )
                )
    return flags
