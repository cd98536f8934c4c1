"""Closed-set accuracy/confusion metrics, open-set ROC / EER, run summaries."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .detectors import ScoreSet
from .errors import EvaluationError


@dataclass
class EvalReport:
    model: str
    features: str
    accuracy: float
    confusion: np.ndarray  # rows = true class, columns = predicted class
    precision: np.ndarray
    recall: np.ndarray
    classes: tuple[str, ...]
    train_seconds: float = 0.0
    seed: int | None = None
    config: dict = field(default_factory=dict)
    eer_mean: float | None = None


def accuracy_report(
    model,
    test: Dataset,
    train_seconds: float = 0.0,
    seed: int | None = None,
    features: str = "All",
) -> EvalReport:
    """Score argmax predictions of ``model`` on ``test``.

    The confusion matrix is indexed by the model's class roster, which must
    cover every subject present in the test set.
    """
    import dataclasses

    classes = tuple(model.classes)
    index = {c: i for i, c in enumerate(classes)}
    missing = sorted(set(test.subjects) - set(classes))
    if missing:
        raise EvaluationError("test subjects missing from model roster: %s" % ", ".join(missing))
    true_idx = np.array([index[s] for s in test.subjects])
    pred_idx = np.argmax(model.predict_proba(test.features), axis=1)
    n = len(classes)
    confusion = np.zeros((n, n), dtype=np.int64)
    np.add.at(confusion, (true_idx, pred_idx), 1)
    accuracy = float(np.trace(confusion) / confusion.sum())
    col = confusion.sum(axis=0)
    row = confusion.sum(axis=1)
    diag = np.diag(confusion)
    precision = np.divide(diag, col, out=np.zeros(n, float), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros(n, float), where=row > 0)
    config = dataclasses.asdict(model.config) if hasattr(model, "config") else {}
    return EvalReport(
        model=model.family,
        features=features,
        accuracy=accuracy,
        confusion=confusion,
        precision=precision,
        recall=recall,
        classes=classes,
        train_seconds=train_seconds,
        seed=seed,
        config=config,
    )


@dataclass(frozen=True)
class RocCurve:
    """Operating points swept over the sorted union of observed scores.

    Acceptance means score <= threshold, so FAR rises and FRR falls as the
    threshold loosens (moves up). The EER interpolates linearly between the
    two thresholds bracketing the FAR/FRR crossing.
    """

    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    eer: float
    eer_threshold: float


def _roc_single(genuine: np.ndarray, impostor: np.ndarray) -> RocCurve:
    g = np.sort(genuine)
    im = np.sort(impostor)
    thresholds = np.unique(np.concatenate([g, im]))
    far = np.searchsorted(im, thresholds, side="right") / len(im)
    frr = 1.0 - np.searchsorted(g, thresholds, side="right") / len(g)
    # virtual operating point below every score: reject all
    t_lo = thresholds[0] - 1.0
    thresholds = np.concatenate([[t_lo], thresholds])
    far = np.concatenate([[0.0], far])
    frr = np.concatenate([[1.0], frr])
    d = far - frr
    k = int(np.argmax(d >= 0.0))  # first crossing; exists since d[-1] = 1
    if d[k] == 0.0:
        eer = float(far[k])
        eer_t = float(thresholds[k])
    else:
        alpha = -d[k - 1] / (d[k] - d[k - 1])
        eer = float(far[k - 1] + alpha * (far[k] - far[k - 1]))
        eer_t = float(thresholds[k - 1] + alpha * (thresholds[k] - thresholds[k - 1]))
    return RocCurve(thresholds, far, frr, eer, eer_t)


def roc_and_eer(scores: ScoreSet) -> tuple[dict[str, RocCurve], float]:
    """Per-subject ROC curves plus the unweighted mean EER."""
    curves: dict[str, RocCurve] = {}
    for subject in scores.subjects:
        genuine = scores.genuine(subject)
        impostor = scores.impostor(subject)
        if len(genuine) == 0 or len(impostor) == 0:
            raise EvaluationError(
                "subject %r has empty %s score set"
                % (subject, "genuine" if len(genuine) == 0 else "impostor")
            )
        curves[subject] = _roc_single(genuine, impostor)
    mean_eer = float(np.mean([c.eer for c in curves.values()]))
    return curves, mean_eer


def summary(reports: list[EvalReport]) -> list[EvalReport]:
    """Reports sorted by accuracy descending (stable for equal accuracies)."""
    if not reports:
        raise EvaluationError("summary needs at least one report")
    return sorted(reports, key=lambda r: -r.accuracy)


def format_summary_text(reports: list[EvalReport]) -> str:
    rows = summary(reports)
    width = max(len("%s/%s" % (r.model, r.features)) for r in rows)
    lines = ["%-*s  accuracy  eer_mean  train_s" % (width, "model")]
    for r in rows:
        eer = "%.4f" % r.eer_mean if r.eer_mean is not None else "-"
        lines.append(
            "%-*s  %.4f    %-8s  %.1f"
            % (width, "%s/%s" % (r.model, r.features), r.accuracy, eer, r.train_seconds)
        )
    return "\n".join(lines)


def write_summary_csv(reports: list[EvalReport], path: str | Path, command: str | None = None) -> None:
    """Summary CSV: model,features,accuracy,eer_mean,train_seconds."""
    rows = summary(reports)
    with open(path, "w", newline="") as fh:
        if command:
            fh.write("# command: %s\n" % command)
        writer = csv.writer(fh)
        writer.writerow(["model", "features", "accuracy", "eer_mean", "train_seconds"])
        for r in rows:
            writer.writerow([
                r.model, r.features, repr(r.accuracy),
                "" if r.eer_mean is None else repr(r.eer_mean),
                "%.3f" % r.train_seconds,
            ])


def write_report(report: EvalReport, path: str | Path, command: str | None = None) -> None:
    """JSON report document with the declared field set."""
    doc = {
        "model": report.model,
        "features": report.features,
        "accuracy": report.accuracy,
        "eer_mean": report.eer_mean,
        "confusion": report.confusion.tolist(),
        "classes": list(report.classes),
        "precision": report.precision.tolist(),
        "recall": report.recall.tolist(),
        "train_seconds": report.train_seconds,
        "seed": report.seed,
        "config": report.config,
    }
    if command:
        doc["command"] = command
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_report(path: str | Path) -> EvalReport:
    doc = json.loads(Path(path).read_text())
    return EvalReport(
        model=doc["model"],
        features=doc["features"],
        accuracy=doc["accuracy"],
        confusion=np.array(doc["confusion"], dtype=np.int64),
        precision=np.array(doc["precision"]),
        recall=np.array(doc["recall"]),
        classes=tuple(doc["classes"]),
        train_seconds=doc.get("train_seconds", 0.0),
        seed=doc.get("seed"),
        config=doc.get("config", {}),
        eer_mean=doc.get("eer_mean"),
    )
