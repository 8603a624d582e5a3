"""Classification statistics: confusion matrices, per-class and macro
precision/recall/F1, micro-averaged ROC-AUC and average precision, the
chi-square independence check on a confusion matrix, and the multi-view
versus single-view evaluation harness.

Multi-class aggregates use macro averaging (unweighted class mean); curve
metrics use micro-averaged one-vs-rest scoring.  Undefined 0/0 ratios are
reported as 0.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .datagen import VIEWS, LabeledImage


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (k, k) ints, rows = true class, cols = predicted

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValueError("confusion matrix entries must be non-negative")

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class MetricsReport:
    accuracy: float
    precision: np.ndarray  # per class
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    support: np.ndarray
    n: int
    auc: float | None = None
    ap: float | None = None
    averaging: str = "macro"

    def to_dict(self) -> dict:
        out = {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_class": {
                str(c): {
                    "precision": float(self.precision[c]),
                    "recall": float(self.recall[c]),
                    "f1": float(self.f1[c]),
                    "support": int(self.support[c]),
                }
                for c in range(len(self.precision))
            },
            "n": self.n,
            "averaging": self.averaging,
        }
        if self.auc is not None:
            out["auc"] = self.auc
        if self.ap is not None:
            out["ap"] = self.ap
        return out


def confusion(predictions, labels, k: int) -> ConfusionMatrix:
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValueError(
            f"predictions {predictions.shape} and labels {labels.shape} differ"
        )
    for name, arr in (("predictions", predictions), ("labels", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise ValueError(f"{name} contain classes outside [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (labels, predictions), 1)
    return ConfusionMatrix(counts)


def metrics_from_confusion(cm: ConfusionMatrix) -> MetricsReport:
    counts = cm.counts
    total = cm.total
    if total == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(counts).astype(np.float64)
    fp = counts.sum(axis=0) - tp  # predicted as c but true class differs
    fn = counts.sum(axis=1) - tp  # true class c predicted as something else

    def ratio(num, den):
        out = np.zeros_like(num)
        nz = den > 0
        out[nz] = num[nz] / den[nz]
        return out

    precision = ratio(tp, tp + fp)
    recall = ratio(tp, tp + fn)
    f1 = ratio(2 * precision * recall, precision + recall)
    return MetricsReport(
        accuracy=float(tp.sum() / total),
        precision=precision,
        recall=recall,
        f1=f1,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        support=counts.sum(axis=1),
        n=total,
    )


# ---------------------------------------------------------------------------
# curve metrics (micro-averaged one-vs-rest)


def _flatten_ovr(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if np.unique(labels).size < 2:
        raise ValueError("labels contain a single class; curve metrics undefined")
    if scores.ndim == 1:  # binary positive-class scores, swept as-is
        if scores.shape != labels.shape:
            raise ValueError(f"scores {scores.shape} incompatible with labels {labels.shape}")
        if labels.min() < 0 or labels.max() > 1:
            raise ValueError("binary score vectors need labels in {0, 1}")
        return scores, labels == 1
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise ValueError(f"scores {scores.shape} incompatible with labels {labels.shape}")
    if np.abs(scores.sum(axis=1) - 1.0).max() > 1e-6:
        raise ValueError("probability rows must sum to 1")
    onehot = np.zeros_like(scores, dtype=bool)
    onehot[np.arange(labels.size), labels] = True
    return scores.ravel(), onehot.ravel()


def roc_auc(scores, labels) -> float:
    """Micro-averaged one-vs-rest AUC via average ranks (ties averaged)."""
    s, y = _flatten_ovr(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    ranks = stats.rankdata(s)  # average rank on ties = Mann-Whitney convention
    auc = (ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return float(auc)


def roc_curve_points(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) swept over score thresholds, for external plotting."""
    s, y = _flatten_ovr(scores, labels)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    distinct = np.nonzero(np.diff(s))[0]
    cut = np.concatenate([distinct, [y.size - 1]])
    tps = np.cumsum(y)[cut]
    fps = np.cumsum(~y)[cut]
    tpr = np.concatenate([[0.0], tps / tps[-1]])
    fpr = np.concatenate([[0.0], fps / fps[-1]])
    return fpr, tpr


def pr_ap(scores, labels) -> float:
    """Micro-averaged average precision: sum of (R_n - R_{n-1}) * P_n."""
    s, y = _flatten_ovr(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("no positive samples; average precision undefined")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # group tied scores into a single threshold step
    distinct = np.nonzero(np.diff(s))[0]
    cut = np.concatenate([distinct, [y.size - 1]])
    tps = np.cumsum(y)[cut].astype(np.float64)
    fps = np.cumsum(~y)[cut].astype(np.float64)
    precision = tps / (tps + fps)
    recall = tps / n_pos
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(((recall - prev) * precision).sum())


def pr_curve_points(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s, y = _flatten_ovr(scores, labels)
    order = np.argsort(-s, kind="stable")
    y = y[order]
    s = s[order]
    distinct = np.nonzero(np.diff(s))[0]
    cut = np.concatenate([distinct, [y.size - 1]])
    tps = np.cumsum(y)[cut].astype(np.float64)
    fps = np.cumsum(~y)[cut].astype(np.float64)
    return tps / y.sum(), tps / (tps + fps)  # (recall, precision)


# ---------------------------------------------------------------------------
# chi-square validation


def chi_square(cm: ConfusionMatrix) -> tuple[float, int]:
    """Independence statistic over the confusion matrix and its (k-1)^2 dof.

    Expected counts come from the row/column marginal product; cells with
    zero expectation are skipped.
    """
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total == 0:
        raise ValueError("all-zero confusion matrix")
    expected = np.outer(counts.sum(axis=1), counts.sum(axis=0)) / total
    mask = expected > 0
    stat = float((((counts - expected) ** 2)[mask] / expected[mask]).sum())
    dof = (cm.k - 1) ** 2
    return stat, dof


def chi_square_pvalue(stat: float, dof: int) -> float:
    return float(stats.chi2.sf(stat, dof))


# ---------------------------------------------------------------------------
# multi-view vs single-view harness


@dataclass
class ViewReport:
    scope: str  # "all_views" or a view name
    report: MetricsReport
    matrix: ConfusionMatrix
    chi2: float
    dof: int
    p_value: float


def evaluate_predictions(preds, labels, k, scores=None) -> tuple[MetricsReport, ConfusionMatrix]:
    cm = confusion(preds, labels, k)
    report = metrics_from_confusion(cm)
    if scores is not None:
        try:
            report.auc = roc_auc(scores, labels)
            report.ap = pr_ap(scores, labels)
        except ValueError:
            pass  # degenerate single-class subsets keep curve metrics unset
    return report, cm


def per_view_report(
    predict: Callable[[list[LabeledImage]], np.ndarray],
    images: Sequence[LabeledImage],
    k: int,
    score: Callable[[list[LabeledImage]], np.ndarray] | None = None,
) -> dict[str, ViewReport]:
    """Evaluate one frozen model on the pooled set and on each view subset.

    `predict` maps images to class indices; optional `score` maps images to
    probability rows for curve metrics.  Views absent from `images` are
    omitted with a warning.
    """
    images = list(images)
    if not images:
        raise ValueError("nothing to evaluate")
    out: dict[str, ViewReport] = {}
    scopes = [("all_views", images)]
    for view in VIEWS:
        subset = [im for im in images if im.view == view]
        if not subset:
            warnings.warn(f"view {view!r} has no samples; omitted", RuntimeWarning)
            continue
        scopes.append((view, subset))
    for scope, subset in scopes:
        labels = np.array([im.label for im in subset])
        preds = np.asarray(predict(subset))
        scores = np.asarray(score(subset)) if score is not None else None
        report, cm = evaluate_predictions(preds, labels, k, scores)
        stat, dof = chi_square(cm)
        out[scope] = ViewReport(
            scope=scope,
            report=report,
            matrix=cm,
            chi2=stat,
            dof=dof,
            p_value=chi_square_pvalue(stat, dof),
        )
    return out


# ---------------------------------------------------------------------------
# serialization


def reports_to_json(reports: dict[str, ViewReport]) -> str:
    payload = {
        scope: {
            "metrics": vr.report.to_dict(),
            "confusion": vr.matrix.counts.tolist(),
            "chi2": vr.chi2,
            "dof": vr.dof,
            "p_value": vr.p_value,
        }
        for scope, vr in reports.items()
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def write_reports_csv(reports: dict[str, ViewReport], path) -> None:
    """Long-form rows: scope, class, metric, value."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["scope", "class", "metric", "value"])
        for scope, vr in reports.items():
            r = vr.report
            for name, value in (
                ("accuracy", r.accuracy),
                ("macro_precision", r.macro_precision),
                ("macro_recall", r.macro_recall),
                ("macro_f1", r.macro_f1),
                ("chi2", vr.chi2),
                ("dof", vr.dof),
                ("p_value", vr.p_value),
                ("n", r.n),
            ):
                out.writerow([scope, "", name, value])
            if r.auc is not None:
                out.writerow([scope, "", "auc", r.auc])
            if r.ap is not None:
                out.writerow([scope, "", "ap", r.ap])
            for c in range(len(r.precision)):
                out.writerow([scope, c, "precision", float(r.precision[c])])
                out.writerow([scope, c, "recall", float(r.recall[c])])
                out.writerow([scope, c, "f1", float(r.f1[c])])
                out.writerow([scope, c, "support", int(r.support[c])])
