"""Explainable writing scorer.

Rating ingestion with consensus labels, inter-rater agreement metrics
(exact/adjacent/QWK/Pearson), a from-scratch squared-error gradient-boosted
tree ensemble, interventional Shapley explanations computed exactly by a
per-tree path-walk algorithm, and the score→CEFR band mapping.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .features import SUBCONSTRUCTS, FeatureVector

__all__ = [
    "RatingRecord",
    "RatingsIngest",
    "IngestError",
    "AgreementReport",
    "Hyperparams",
    "Tree",
    "TrainedScorer",
    "TrainingReport",
    "ScoreExplanation",
    "CEFR_BANDS",
    "ingest_ratings",
    "rater_agreement",
    "train_scorer",
    "predict",
    "explain",
    "aggregate_subconstructs",
    "to_band",
    "scorer_to_json",
    "scorer_from_json",
]

CEFR_BANDS = ("A1", "A2", "B1", "B2", "C1", "C2")

_MIN_GAIN = 1e-12


# ---------------------------------------------------------------------------
# ratings


@dataclass(frozen=True)
class RatingRecord:
    response_id: str
    rater_id: str
    score: int

    def __post_init__(self) -> None:
        if not 1 <= self.score <= 6:
            raise ValueError(f"score {self.score} outside 1..6")


class IngestError(ValueError):
    """Raised for malformed rating files; carries per-record messages."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class RatingsIngest:
    """Consensus labels plus the records and rejects behind them."""

    records: tuple[RatingRecord, ...]
    consensus: Mapping[str, float]
    rejected: Mapping[str, str]


def ingest_ratings(source: str | Path | Iterable[RatingRecord], min_raters: int = 2) -> RatingsIngest:
    """Read ratings (JSON-lines {"response_id","rater_id","score"} or records).

    Consensus is the mean rater score per response; responses with fewer than
    ``min_raters`` raters are rejected with a reason rather than silently kept.
    """
    records: list[RatingRecord] = []
    problems: list[str] = []
    if isinstance(source, (str, Path)):
        with Path(source).open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    raw = json.loads(line)
                    records.append(
                        RatingRecord(
                            response_id=str(raw["response_id"]),
                            rater_id=str(raw["rater_id"]),
                            score=int(raw["score"]),
                        )
                    )
                except (ValueError, KeyError, TypeError) as exc:
                    problems.append(f"line {lineno}: {exc}")
    else:
        records = list(source)
    if problems:
        raise IngestError(problems)

    by_response: dict[str, list[RatingRecord]] = {}
    for rec in records:
        by_response.setdefault(rec.response_id, []).append(rec)

    consensus: dict[str, float] = {}
    rejected: dict[str, str] = {}
    for rid, recs in by_response.items():
        raters = {r.rater_id for r in recs}
        if len(raters) < min_raters:
            rejected[rid] = f"only {len(raters)} rater(s); minimum is {min_raters}"
        else:
            consensus[rid] = sum(r.score for r in recs) / len(recs)
    return RatingsIngest(tuple(records), consensus, rejected)


@dataclass(frozen=True)
class AgreementReport:
    exact_agreement: float
    adjacent_agreement: float
    quadratic_weighted_kappa: float | None
    qwk_status: str  # "ok" | "undefined"
    pearson_r: float | None
    n_pairs: int


def _qwk_from_pairs(first: np.ndarray, second: np.ndarray, n_levels: int = 6) -> float:
    observed = np.zeros((n_levels, n_levels))
    for a, b in zip(first, second):
        observed[int(a) - 1, int(b) - 1] += 1
    n = observed.sum()
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0)) / n
    idx = np.arange(n_levels)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (n_levels - 1) ** 2
    return float(1.0 - (weights * observed).sum() / (weights * expected).sum())


def rater_agreement(ratings: Iterable[RatingRecord]) -> AgreementReport:
    """Pairwise agreement over all rater pairs within each response.

    Within a response, each unordered rater pair contributes one (a, b) score
    pair ordered by rater id. QWK is computed over the 6x6 contingency of
    those pairs; it is reported as undefined when either side has zero
    variance.
    """
    by_response: dict[str, list[RatingRecord]] = {}
    for rec in ratings:
        by_response.setdefault(rec.response_id, []).append(rec)

    first: list[int] = []
    second: list[int] = []
    for recs in by_response.values():
        recs = sorted(recs, key=lambda r: r.rater_id)
        for i in range(len(recs)):
            for j in range(i + 1, len(recs)):
                first.append(recs[i].score)
                second.append(recs[j].score)
    if not first:
        raise ValueError("no response has two or more raters")

    a = np.array(first, dtype=float)
    b = np.array(second, dtype=float)
    exact = float(np.mean(a == b))
    adjacent = float(np.mean(np.abs(a - b) <= 1))
    if a.std() == 0.0 or b.std() == 0.0:
        qwk, status, pearson = None, "undefined", None
    else:
        qwk, status = _qwk_from_pairs(a, b), "ok"
        pearson = float(np.corrcoef(a, b)[0, 1])
    return AgreementReport(exact, adjacent, qwk, status, pearson, len(first))


# ---------------------------------------------------------------------------
# gradient-boosted trees


@dataclass(frozen=True)
class Tree:
    """A binary regression tree in parallel-array form; feature -1 marks leaves."""

    feature: tuple[int, ...]
    threshold: tuple[float, ...]
    left: tuple[int, ...]
    right: tuple[int, ...]
    value: tuple[float, ...]

    def predict_one(self, x: np.ndarray) -> float:
        node = 0
        while self.feature[node] >= 0:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return self.value[node]

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        stack = [(0, np.arange(len(X)))]
        while stack:
            node, rows = stack.pop()
            if self.feature[node] < 0:
                out[rows] = self.value[node]
                continue
            go_left = X[rows, self.feature[node]] <= self.threshold[node]
            stack.append((self.left[node], rows[go_left]))
            stack.append((self.right[node], rows[~go_left]))
        return out


@dataclass(frozen=True)
class Hyperparams:
    n_trees: int = 200
    max_depth: int = 3
    learning_rate: float = 0.1
    min_leaf: int = 5
    seed: int = 0
    holdout_fraction: float = 0.2
    background_size: int = 64


@dataclass(frozen=True)
class TrainingReport:
    n_train: int
    n_holdout: int
    holdout_qwk: float | None
    holdout_pearson: float | None
    constant_labels: bool


@dataclass(frozen=True)
class TrainedScorer:
    trees: tuple[Tree, ...]
    learning_rate: float
    base_score: float
    background: np.ndarray
    schema: tuple[str, ...]
    grouping: Mapping[str, str] | None = None
    report: TrainingReport | None = None


class _TreeBuilder:
    """Greedy exact-split regression tree on residuals."""

    def __init__(self, X: np.ndarray, g: np.ndarray, max_depth: int, min_leaf: int):
        self.X = X
        self.g = g
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def build(self) -> Tree:
        self._node(np.arange(len(self.g)), 0)
        return Tree(
            tuple(self.feature),
            tuple(self.threshold),
            tuple(self.left),
            tuple(self.right),
            tuple(self.value),
        )

    def _add(self, feature: int, threshold: float, value: float) -> int:
        idx = len(self.feature)
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return idx

    def _best_split(self, rows: np.ndarray) -> tuple[float, int, float] | None:
        g = self.g[rows]
        n = len(rows)
        total = g.sum()
        parent = total * total / n
        best: tuple[float, int, float] | None = None
        for j in range(self.X.shape[1]):
            xs = self.X[rows, j]
            order = np.argsort(xs, kind="mergesort")
            xs_sorted = xs[order]
            gs = g[order]
            csum = np.cumsum(gs)
            n_left = np.arange(1, n)
            valid = (
                (xs_sorted[:-1] < xs_sorted[1:])
                & (n_left >= self.min_leaf)
                & (n - n_left >= self.min_leaf)
            )
            if not valid.any():
                continue
            s_left = csum[:-1]
            s_right = total - s_left
            gain = s_left * s_left / n_left + s_right * s_right / (n - n_left) - parent
            gain[~valid] = -np.inf
            k = int(np.argmax(gain))
            if best is None or gain[k] > best[0]:
                thr = (xs_sorted[k] + xs_sorted[k + 1]) / 2.0
                best = (float(gain[k]), j, thr)
        if best is None or best[0] <= _MIN_GAIN:
            return None
        return best

    def _node(self, rows: np.ndarray, depth: int) -> int:
        mean = float(self.g[rows].mean())
        if depth >= self.max_depth or len(rows) < 2 * self.min_leaf:
            return self._add(-1, 0.0, mean)
        split = self._best_split(rows)
        if split is None:
            return self._add(-1, 0.0, mean)
        _, j, thr = split
        idx = self._add(j, thr, mean)
        go_left = self.X[rows, j] <= thr
        left_child = self._node(rows[go_left], depth + 1)
        right_child = self._node(rows[~go_left], depth + 1)
        self.feature[idx] = j
        self.left[idx] = left_child
        self.right[idx] = right_child
        self.value[idx] = 0.0
        return idx


def _raw_predict_batch(scorer: TrainedScorer, X: np.ndarray) -> np.ndarray:
    out = np.full(len(X), scorer.base_score)
    for tree in scorer.trees:
        out += scorer.learning_rate * tree.predict_batch(X)
    return out


def train_scorer(
    X: np.ndarray | Sequence[Sequence[float]],
    y: np.ndarray | Sequence[float],
    schema: Sequence[str],
    params: Hyperparams = Hyperparams(),
    grouping: Mapping[str, str] | None = None,
) -> TrainedScorer:
    """Fit a squared-error gradient-boosted ensemble, deterministically per seed.

    A seeded holdout split is carved off for the system-human agreement report;
    the model and its background sample come from the training split only.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ValueError("X must be (n, m) with matching non-empty y")
    if X.shape[1] != len(schema):
        raise ValueError("schema length must match feature count")

    rng = np.random.default_rng(params.seed)
    perm = rng.permutation(len(y))
    n_holdout = int(len(y) * params.holdout_fraction)
    holdout_idx, train_idx = perm[:n_holdout], perm[n_holdout:]
    if len(train_idx) == 0:
        train_idx, holdout_idx = perm, perm[:0]
        n_holdout = 0
    Xt, yt = X[train_idx], y[train_idx]

    base = float(yt.mean())
    constant = bool(np.all(yt == yt[0]))
    trees: list[Tree] = []
    current = np.full(len(yt), base)
    for _ in range(params.n_trees):
        residual = yt - current
        tree = _TreeBuilder(Xt, residual, params.max_depth, params.min_leaf).build()
        trees.append(tree)
        current += params.learning_rate * tree.predict_batch(Xt)

    bg_size = min(params.background_size, len(train_idx))
    bg_rows = rng.choice(len(train_idx), size=bg_size, replace=False)
    background = Xt[np.sort(bg_rows)].copy()

    scorer = TrainedScorer(
        trees=tuple(trees),
        learning_rate=params.learning_rate,
        base_score=base,
        background=background,
        schema=tuple(schema),
        grouping=dict(grouping) if grouping else None,
    )

    holdout_qwk: float | None = None
    holdout_pearson: float | None = None
    if n_holdout >= 2:
        preds = _raw_predict_batch(scorer, X[holdout_idx])
        truth = y[holdout_idx]
        pred_bands = np.array([to_band(p)[0] for p in preds], dtype=float)
        true_bands = np.array([to_band(t)[0] for t in truth], dtype=float)
        if pred_bands.std() > 0 and true_bands.std() > 0:
            holdout_qwk = _qwk_from_pairs(pred_bands, true_bands)
        if preds.std() > 0 and truth.std() > 0:
            holdout_pearson = float(np.corrcoef(preds, truth)[0, 1])
    report = TrainingReport(len(train_idx), n_holdout, holdout_qwk, holdout_pearson, constant)
    return replace(scorer, report=report)


def _as_array(scorer: TrainedScorer, fv: FeatureVector | Sequence[float] | np.ndarray) -> np.ndarray:
    if isinstance(fv, FeatureVector):
        if set(fv.names) != set(scorer.schema):
            raise ValueError("feature vector does not match the scorer schema")
        return np.array([fv.values[name] for name in scorer.schema], dtype=float)
    arr = np.asarray(fv, dtype=float)
    if arr.shape != (len(scorer.schema),):
        raise ValueError("feature vector does not match the scorer schema")
    return arr


def predict(scorer: TrainedScorer, fv: FeatureVector | Sequence[float] | np.ndarray) -> float:
    """Raw ensemble output: base + learning-rate-weighted leaf sum (unclamped)."""
    x = _as_array(scorer, fv)
    total = scorer.base_score
    for tree in scorer.trees:
        total += scorer.learning_rate * tree.predict_one(x)
    return float(total)


# ---------------------------------------------------------------------------
# Shapley explanations


@dataclass(frozen=True)
class ScoreExplanation:
    base_value: float
    contributions: Mapping[str, float]
    subconstruct_totals: Mapping[str, float]


def _tree_phi(
    tree: Tree,
    x: np.ndarray,
    z: np.ndarray,
    weights: np.ndarray,
    binom: np.ndarray,
    n_features: int,
) -> np.ndarray:
    """Exact interventional Shapley values for one tree and one background row.

    Walking every root-leaf path with per-feature satisfiability flags for x
    and z: a leaf is reached by the hybrid input (x on S, z off S) iff S
    contains all its x-only features (A) and none of its z-only features (B).
    Summing the closed-form coalition weights per leaf gives each feature's
    exact contribution.
    """
    phi = np.zeros(n_features)
    # stack holds (node, {feature: (x_satisfies, z_satisfies)})
    stack: list[tuple[int, dict[int, tuple[bool, bool]]]] = [(0, {})]
    while stack:
        node, sat = stack.pop()
        feat = tree.feature[node]
        if feat < 0:
            a_set = [f for f, (sx, sz) in sat.items() if sx and not sz]
            b_set = [f for f, (sx, sz) in sat.items() if sz and not sx]
            if not a_set and not b_set:
                continue
            a, b = len(a_set), len(b_set)
            f_free = n_features - a - b
            leaf_value = tree.value[node]
            if a_set:
                pa = sum(binom[f_free, t] * weights[a - 1 + t] for t in range(f_free + 1))
                for j in a_set:
                    phi[j] += leaf_value * pa
            if b_set:
                qb = sum(binom[f_free, t] * weights[a + t] for t in range(f_free + 1))
                for j in b_set:
                    phi[j] -= leaf_value * qb
            continue
        thr = tree.threshold[node]
        sx_prev, sz_prev = sat.get(feat, (True, True))
        for child, cond_x, cond_z in (
            (tree.left[node], x[feat] <= thr, z[feat] <= thr),
            (tree.right[node], x[feat] > thr, z[feat] > thr),
        ):
            sx = sx_prev and cond_x
            sz = sz_prev and cond_z
            if sx or sz:
                branch = dict(sat)
                branch[feat] = (sx, sz)
                stack.append((child, branch))
    return phi


def explain(
    scorer: TrainedScorer,
    fv: FeatureVector | Sequence[float] | np.ndarray,
    grouping: Mapping[str, str] | None = None,
) -> ScoreExplanation:
    """Exact interventional Shapley decomposition against the background sample.

    base_value is the mean model output over the background; contributions sum
    to prediction − base_value (efficiency).
    """
    if scorer.background is None or len(scorer.background) == 0:
        raise ValueError("scorer has an empty background sample")
    x = _as_array(scorer, fv)
    m = len(scorer.schema)
    weights = np.array(
        [math.factorial(s) * math.factorial(m - 1 - s) / math.factorial(m) for s in range(m)]
    )
    binom = np.zeros((m + 1, m + 1))
    for i in range(m + 1):
        binom[i, 0] = 1.0
        for t in range(1, i + 1):
            binom[i, t] = binom[i - 1, t - 1] + binom[i - 1, t]

    phi = np.zeros(m)
    for z in np.asarray(scorer.background, dtype=float):
        for tree in scorer.trees:
            phi += _tree_phi(tree, x, z, weights, binom, m)
    phi *= scorer.learning_rate / len(scorer.background)

    base_value = float(np.mean(_raw_predict_batch(scorer, np.asarray(scorer.background, dtype=float))))
    contributions = {name: float(phi[i]) for i, name in enumerate(scorer.schema)}

    group = grouping
    if group is None and isinstance(fv, FeatureVector):
        group = fv.grouping
    if group is None:
        group = scorer.grouping
    totals: dict[str, float] = {}
    if group is not None:
        totals = aggregate_subconstructs(contributions, group)
    return ScoreExplanation(base_value, contributions, totals)


def aggregate_subconstructs(
    contributions: Mapping[str, float] | ScoreExplanation,
    grouping: Mapping[str, str],
) -> dict[str, float]:
    """Sum per-feature contributions into the four sub-construct totals."""
    if isinstance(contributions, ScoreExplanation):
        contributions = contributions.contributions
    totals = {group: 0.0 for group in SUBCONSTRUCTS}
    for name, value in contributions.items():
        if name not in grouping:
            raise ValueError(f"feature {name!r} is missing from the grouping")
        group = grouping[name]
        if group not in totals:
            raise ValueError(f"unknown sub-construct {group!r}")
        totals[group] += value
    return totals


# ---------------------------------------------------------------------------
# bands


def to_band(raw: float) -> tuple[int, str]:
    """Clamp to [1, 6] and round to the nearest band; .5 ties round up."""
    if not math.isfinite(raw):
        raise ValueError("raw score must be finite")
    clamped = min(6.0, max(1.0, float(raw)))
    band = int(math.floor(clamped + 0.5))
    band = min(6, max(1, band))
    return band, CEFR_BANDS[band - 1]


# ---------------------------------------------------------------------------
# persistence


def scorer_to_json(scorer: TrainedScorer) -> str:
    """Serialize a scorer to a versioned JSON document (bit-exact round-trip)."""
    doc = {
        "version": 1,
        "schema": list(scorer.schema),
        "grouping": dict(scorer.grouping) if scorer.grouping else None,
        "learning_rate": scorer.learning_rate,
        "base_score": scorer.base_score,
        "background": [list(map(float, row)) for row in scorer.background],
        "trees": [
            {
                "feature": list(t.feature),
                "threshold": list(t.threshold),
                "left": list(t.left),
                "right": list(t.right),
                "value": list(t.value),
            }
            for t in scorer.trees
        ],
    }
    return json.dumps(doc)


def scorer_from_json(text: str) -> TrainedScorer:
    doc = json.loads(text)
    if doc.get("version") != 1:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    trees = tuple(
        Tree(
            tuple(t["feature"]),
            tuple(t["threshold"]),
            tuple(t["left"]),
            tuple(t["right"]),
            tuple(t["value"]),
        )
        for t in doc["trees"]
    )
    return TrainedScorer(
        trees=trees,
        learning_rate=doc["learning_rate"],
        base_score=doc["base_score"],
        background=np.array(doc["background"], dtype=float).reshape(
            len(doc["background"]), len(doc["schema"])
        ),
        schema=tuple(doc["schema"]),
        grouping=doc.get("grouping"),
    )
