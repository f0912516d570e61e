"""Predictor evaluation: correlation criteria and classification criteria.

Correlation side: rank criteria (Spearman, Kendall tau-b) are computed on raw
predictions; Pearson and RMSE are computed after fitting the five-parameter
logistic map

    f(p) = xi1 * (1/2 - 1/(1 + exp(xi2 * (p - xi3)))) + xi4 * p + xi5

to the MOS. The affine family is nested at xi1 = 0, and the fit always starts
from both a documented sigmoid guess and the closed-form affine solution, so
the mapped RMSE can never exceed the affine RMSE.

Classification side: video pairs are split by a two-sample Welch test on the
per-video rescaled scores into "different" and "similar"; a predictor is
scored by how well |delta prediction| separates the two (AUC), and on the
different pairs by how well the signed delta picks the better video (AUC over
a symmetric two-class construction). Competing predictors are compared with a
correlated-AUC z-test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence, Union

import numpy as np
from scipy import stats as sstats
from scipy.optimize import least_squares
from scipy.special import expit

from .subjective import MosTable, RatingsMatrix

Z_975 = float(sstats.norm.ppf(0.975))


class DegenerateFitError(ValueError):
    """Predictions carry no usable signal (constant input)."""


class UndefinedAucError(ValueError):
    """A classification task has an empty class, so its AUC does not exist."""


@dataclass(frozen=True)
class LogisticParams:
    xi1: float
    xi2: float
    xi3: float
    xi4: float
    xi5: float

    def as_array(self) -> np.ndarray:
        return np.array([self.xi1, self.xi2, self.xi3, self.xi4, self.xi5])


def logistic_map(params: LogisticParams, pred: np.ndarray) -> np.ndarray:
    """Evaluate f(p); the inner logistic goes through expit so large |p| cannot overflow."""
    p = np.asarray(pred, dtype=float)
    g = expit(-params.xi2 * (p - params.xi3))  # = 1/(1+exp(xi2*(p-xi3)))
    return params.xi1 * (0.5 - g) + params.xi4 * p + params.xi5


def _residual_and_jac(x: np.ndarray, p: np.ndarray, y: np.ndarray):
    xi1, xi2, xi3, xi4, xi5 = x
    g = expit(-xi2 * (p - xi3))
    f = xi1 * (0.5 - g) + xi4 * p + xi5
    gg = g * (1.0 - g)
    jac = np.empty((p.size, 5))
    jac[:, 0] = 0.5 - g
    jac[:, 1] = xi1 * gg * (p - xi3)
    jac[:, 2] = -xi1 * gg * xi2
    jac[:, 3] = p
    jac[:, 4] = 1.0
    return f - y, jac


@dataclass(frozen=True)
class LogisticFit:
    params: LogisticParams
    rmse: float
    iterations: int
    gradient_norm: float
    restarts: int


def _affine_lsq(pred: np.ndarray, mos: np.ndarray) -> tuple[float, float, float]:
    """Closed-form least-squares line; returns (slope, intercept, rmse)."""
    a = np.vstack([pred, np.ones_like(pred)]).T
    coef, *_ = np.linalg.lstsq(a, mos, rcond=None)
    rmse = float(np.sqrt(np.mean((a @ coef - mos) ** 2)))
    return float(coef[0]), float(coef[1]), rmse


def fit_logistic(pred: Sequence[float], mos: Sequence[float]) -> LogisticFit:
    """Least-squares fit of the logistic map, robust to start-point choice.

    Initialization: xi3 at the prediction median, xi2 = 4/range(pred),
    xi1 = range(mos), affine terms from the least-squares line. A second start
    is the pure affine solution (xi1 = 0); if neither beats the affine RMSE,
    three jittered variants of the sigmoid start (flipped and rescaled xi2)
    run as well. Best final cost wins, so rmse <= affine rmse always.
    """
    p = np.asarray(pred, dtype=float)
    y = np.asarray(mos, dtype=float)
    if p.size != y.size:
        raise ValueError(f"length mismatch: {p.size} predictions vs {y.size} mos")
    if p.size < 6:
        raise ValueError(f"need >= 6 samples to fit 5 parameters, got {p.size}")
    if not (np.isfinite(p).all() and np.isfinite(y).all()):
        raise ValueError("predictions and mos must be finite")
    span = float(p.max() - p.min())
    if span == 0.0:
        raise DegenerateFitError("constant predictions cannot be fitted")

    slope, intercept, affine_rmse = _affine_lsq(p, y)
    xi2_0 = 4.0 / span
    sig_start = np.array([float(y.max() - y.min()), xi2_0, float(np.median(p)), slope, intercept])
    affine_start = np.array([0.0, xi2_0, float(np.median(p)), slope, intercept])

    def run(x0: np.ndarray):
        return least_squares(
            lambda x: _residual_and_jac(x, p, y)[0],
            x0,
            jac=lambda x: _residual_and_jac(x, p, y)[1],
            method="lm",
            gtol=1e-8,
            ftol=1e-12,
            xtol=1e-12,
            max_nfev=500,
        )

    starts = [sig_start, affine_start]
    best = None
    total_nfev = 0
    used = 0
    for x0 in starts:
        res = run(x0)
        total_nfev += res.nfev
        used += 1
        if best is None or res.cost < best.cost:
            best = res
    best_rmse = math.sqrt(2.0 * best.cost / p.size)
    if best_rmse > affine_rmse + 1e-9:
        for mul in (-1.0, 0.25, 4.0):
            x0 = sig_start.copy()
            x0[1] *= mul
            res = run(x0)
            total_nfev += res.nfev
            used += 1
            if res.cost < best.cost:
                best = res
        best_rmse = math.sqrt(2.0 * best.cost / p.size)

    params = LogisticParams(*best.x)
    return LogisticFit(
        params=params,
        rmse=best_rmse,
        iterations=total_nfev,
        gradient_norm=float(best.optimality),
        restarts=used,
    )


@dataclass(frozen=True)
class CorrelationReport:
    plcc: float
    srcc: float
    krcc: float
    rmse: float
    fit: LogisticFit


def correlations(pred: Sequence[float], mos: Sequence[float]) -> CorrelationReport:
    """Standard criteria set: SRCC/KRCC on raw predictions, PLCC/RMSE after mapping."""
    p = np.asarray(pred, dtype=float)
    y = np.asarray(mos, dtype=float)
    fit = fit_logistic(p, y)
    mapped = logistic_map(fit.params, p)
    plcc = float(sstats.pearsonr(mapped, y).statistic)
    srcc = float(sstats.spearmanr(p, y).statistic)
    krcc = float(sstats.kendalltau(p, y).statistic)
    return CorrelationReport(plcc=plcc, srcc=srcc, krcc=krcc, rmse=fit.rmse, fit=fit)


DIFFERENT = "different"
SIMILAR = "similar"
A_BETTER = "a_better"
B_BETTER = "b_better"
NO_DIRECTION = "none"


@dataclass(frozen=True)
class VideoPair:
    video_a: str
    video_b: str
    significance: str  # different | similar
    direction: str  # a_better | b_better | none
    p_value: float
    delta_mos: float
    delta_pred: float | None = None


@dataclass(frozen=True)
class PairPartition:
    pairs: tuple[VideoPair, ...]
    alpha: float

    @property
    def different_count(self) -> int:
        return sum(1 for p in self.pairs if p.significance == DIFFERENT)

    @property
    def similar_count(self) -> int:
        return sum(1 for p in self.pairs if p.significance == SIMILAR)

    def with_predictions(self, scores: Mapping[str, float]) -> "PairPartition":
        missing = sorted(
            {p.video_a for p in self.pairs if p.video_a not in scores}
            | {p.video_b for p in self.pairs if p.video_b not in scores}
        )
        if missing:
            raise ValueError(f"no prediction for video(s): {missing[:3]}{'...' if len(missing) > 3 else ''}")
        pairs = tuple(
            replace(p, delta_pred=float(scores[p.video_a]) - float(scores[p.video_b])) for p in self.pairs
        )
        return PairPartition(pairs, self.alpha)


def welch_p_value(mean_a, std_a, n_a, mean_b, std_b, n_b) -> float:
    """Two-sided Welch t-test p from summary statistics (Satterthwaite df).

    Degenerate spread (both variances zero) gives p = 1.0 for equal means and
    0.0 otherwise.
    """
    if n_a < 2 or n_b < 2:
        raise ValueError("welch test needs >= 2 ratings per video")
    va = (std_a * std_a) / n_a
    vb = (std_b * std_b) / n_b
    if va + vb == 0.0:
        return 1.0 if mean_a == mean_b else 0.0
    t = (mean_a - mean_b) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va * va / (n_a - 1) + vb * vb / (n_b - 1))
    return float(2.0 * sstats.t.sf(abs(t), df))


def partition_pairs(table: Union[MosTable, RatingsMatrix], alpha: float = 0.05) -> PairPartition:
    """Split all unordered video pairs into perceptually different vs similar.

    Accepts a MosTable (summary stats ready) or a raw RatingsMatrix (stats are
    taken over present scores per video, unnormalized). Direction on different
    pairs follows the sign of the mean difference.
    """
    if isinstance(table, RatingsMatrix):
        videos = table.videos
        means, stds, counts = [], [], []
        for j in range(len(videos)):
            col = table.scores[:, j]
            present = col[~np.isnan(col)]
            means.append(float(present.mean()) if present.size else math.nan)
            stds.append(float(present.std(ddof=1)) if present.size > 1 else 0.0)
            counts.append(int(present.size))
    else:
        videos = table.videos
        means = [float(m) for m in table.mos]
        stds = [float(s) for s in table.stddev]
        counts = [int(n) for n in table.rater_count]
    shallow = [v for v, n in zip(videos, counts) if n < 2]
    if shallow:
        raise ValueError(f"video(s) with < 2 ratings: {shallow[:3]}{'...' if len(shallow) > 3 else ''}")

    pairs: list[VideoPair] = []
    for a in range(len(videos)):
        for b in range(a + 1, len(videos)):
            p = welch_p_value(means[a], stds[a], counts[a], means[b], stds[b], counts[b])
            delta = means[a] - means[b]
            if p < alpha:
                significance = DIFFERENT
                direction = A_BETTER if delta > 0 else B_BETTER
            else:
                significance, direction = SIMILAR, NO_DIRECTION
            pairs.append(VideoPair(videos[a], videos[b], significance, direction, p, delta))
    return PairPartition(tuple(pairs), alpha)


def mann_whitney_auc(pos: Sequence[float], neg: Sequence[float]) -> float:
    """AUC as the normalized Mann-Whitney U statistic, ties counted half."""
    pos = np.asarray(pos, dtype=float)
    neg = np.asarray(neg, dtype=float)
    if pos.size == 0 or neg.size == 0:
        raise UndefinedAucError("both classes must be non-empty")
    ranks = sstats.rankdata(np.concatenate([pos, neg]))
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def _task_classes(partition: PairPartition, task: str) -> tuple[np.ndarray, np.ndarray]:
    """Positive/negative class score arrays for a classification task."""
    for p in partition.pairs:
        if p.delta_pred is None:
            raise ValueError("partition has no predictions attached; call with_predictions() first")
    if task == "different_vs_similar":
        pos = np.array([abs(p.delta_pred) for p in partition.pairs if p.significance == DIFFERENT])
        neg = np.array([abs(p.delta_pred) for p in partition.pairs if p.significance == SIMILAR])
        if pos.size == 0 or neg.size == 0:
            raise UndefinedAucError(f"{task}: need both different and similar pairs")
        return pos, neg
    if task == "better_vs_worse":
        oriented = np.array(
            [
                p.delta_pred if p.direction == A_BETTER else -p.delta_pred
                for p in partition.pairs
                if p.significance == DIFFERENT
            ]
        )
        if oriented.size == 0:
            raise UndefinedAucError(f"{task}: no different pairs")
        return oriented, -oriented
    raise ValueError(f"unknown task {task!r}")


@dataclass(frozen=True)
class AucReport:
    auc_different_vs_similar: float
    auc_better_vs_worse: float
    n_different: int
    n_similar: int
    alpha: float


def auc_analysis(partition: PairPartition) -> AucReport:
    """Both classification AUCs for one predictor on a prediction-bearing partition."""
    ds_pos, ds_neg = _task_classes(partition, "different_vs_similar")
    bw_pos, bw_neg = _task_classes(partition, "better_vs_worse")
    return AucReport(
        auc_different_vs_similar=mann_whitney_auc(ds_pos, ds_neg),
        auc_better_vs_worse=mann_whitney_auc(bw_pos, bw_neg),
        n_different=partition.different_count,
        n_similar=partition.similar_count,
        alpha=partition.alpha,
    )


def auc_standard_error(auc: float, n_pos: int, n_neg: int) -> float:
    """Classic AUC standard error via Q1 = A/(2-A), Q2 = 2A^2/(1+A)."""
    a = auc
    q1 = a / (2.0 - a)
    q2 = 2.0 * a * a / (1.0 + a)
    var = (a * (1.0 - a) + (n_pos - 1) * (q1 - a * a) + (n_neg - 1) * (q2 - a * a)) / (n_pos * n_neg)
    return math.sqrt(max(var, 0.0))


def _safe_corr(x: np.ndarray, y: np.ndarray) -> float:
    if x.size < 2 or np.std(x) == 0.0 or np.std(y) == 0.0:
        return 0.0
    return float(np.corrcoef(x, y)[0, 1])


@dataclass(frozen=True)
class ModelComparison:
    task: str
    models: tuple[str, ...]
    auc: dict
    verdict: dict  # (model_row, model_col) -> better | worse | indistinguishable
    z: dict


def compare_models(
    partition: PairPartition,
    scores_by_model: Mapping[str, Mapping[str, float]],
    task: str = "different_vs_similar",
    alpha: float = 0.05,
) -> ModelComparison:
    """Pairwise correlated-AUC z-test between predictors on one shared partition.

    The correlation term is the mean of the positive-class and negative-class
    Pearson correlations between the two models' classifier scores. Verdicts
    are from the row model's perspective: better / worse / indistinguishable.
    """
    names = tuple(scores_by_model)
    classes = {}
    for name in names:
        attached = partition.with_predictions(scores_by_model[name])
        classes[name] = _task_classes(attached, task)
    aucs = {name: mann_whitney_auc(*classes[name]) for name in names}
    ses = {name: auc_standard_error(aucs[name], classes[name][0].size, classes[name][1].size) for name in names}

    threshold = float(sstats.norm.ppf(1.0 - alpha / 2.0))
    verdict: dict = {}
    zs: dict = {}
    for row in names:
        for col in names:
            if row == col:
                continue
            a1, a2 = aucs[row], aucs[col]
            if abs(a1 - a2) < 1e-12:
                verdict[(row, col)] = "indistinguishable"
                zs[(row, col)] = 0.0
                continue
            r = 0.5 * (
                _safe_corr(classes[row][0], classes[col][0]) + _safe_corr(classes[row][1], classes[col][1])
            )
            var = ses[row] ** 2 + ses[col] ** 2 - 2.0 * r * ses[row] * ses[col]
            if var <= 0.0:
                verdict[(row, col)] = "better" if a1 > a2 else "worse"
                zs[(row, col)] = math.inf if a1 > a2 else -math.inf
                continue
            z = (a1 - a2) / math.sqrt(var)
            zs[(row, col)] = z
            if abs(z) > threshold:
                verdict[(row, col)] = "better" if z > 0 else "worse"
            else:
                verdict[(row, col)] = "indistinguishable"
    return ModelComparison(task=task, models=names, auc=aucs, verdict=verdict, z=zs)
