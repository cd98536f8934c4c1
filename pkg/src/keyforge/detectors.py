"""Per-user template detectors scoring how far a sample sits from a profile.

A template condenses a user's training rows into a mean vector, a mean
absolute deviation vector and a regularized covariance matrix. Four distance
metrics score test rows against a claimed template; lower always means more
genuine, so one threshold convention serves every ROC sweep.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .errors import InsufficientDataError

METRICS = ("euclidean", "manhattan", "scaled_manhattan", "mahalanobis")

MAD_FLOOR = 1e-6  # seconds; keeps scaled Manhattan finite on constant columns
RIDGE_SCALE = 1e-6  # lambda = scale * trace(cov) / dim
RIDGE_ABS_FLOOR = 1e-12  # keeps the ridge SPD even when cov is all zeros


@dataclass(frozen=True)
class UserTemplate:
    """Fitted per-subject profile. ``cov_chol`` is the lower Cholesky factor
    of the ridge-regularized covariance, proving it positive definite."""

    subject: str
    mean: np.ndarray
    mad: np.ndarray
    cov_reg: np.ndarray
    ridge: float
    cov_chol: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_template(
    subject: str,
    rows: np.ndarray,
    mad_floor: float = MAD_FLOOR,
    ridge_scale: float = RIDGE_SCALE,
) -> UserTemplate:
    """Fit one template from a (records, features) block of training rows."""
    if rows.shape[0] < 2:
        raise InsufficientDataError(
            "subject %r has %d training record(s); need >= 2" % (subject, rows.shape[0])
        )
    mean = rows.mean(axis=0)
    mad = np.maximum(np.abs(rows - mean).mean(axis=0), mad_floor)
    cov = np.cov(rows, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    ridge = max(ridge_scale * np.trace(cov) / cov.shape[0], RIDGE_ABS_FLOOR)
    cov_reg = cov + ridge * np.eye(cov.shape[0])
    chol = np.linalg.cholesky(cov_reg)  # raises LinAlgError if not SPD
    return UserTemplate(subject, mean, mad, cov_reg, ridge, chol)


def fit_templates(
    train: Dataset,
    mad_floor: float = MAD_FLOOR,
    ridge_scale: float = RIDGE_SCALE,
) -> dict[str, UserTemplate]:
    """Fit one template per roster subject from the training partition."""
    out = {}
    for subject in train.roster:
        rows = train.features[train.indices_of(subject)]
        out[subject] = fit_template(subject, rows, mad_floor, ridge_scale)
    return out


def score(template: UserTemplate, x: np.ndarray, metric: str) -> float:
    """Distance of one feature vector from the template under ``metric``."""
    return float(score_rows(template, np.asarray(x, dtype=np.float64)[None, :], metric)[0])


def score_rows(template: UserTemplate, rows: np.ndarray, metric: str) -> np.ndarray:
    """Vectorized :func:`score` over a (records, features) block."""
    metric = metric.replace("-", "_")
    if rows.ndim != 2 or rows.shape[1] != template.dim:
        raise ValueError(
            "feature rows have shape %s, template dimension is %d" % (rows.shape, template.dim)
        )
    diff = rows - template.mean
    if metric == "euclidean":
        return np.sqrt((diff**2).sum(axis=1))
    if metric == "manhattan":
        return np.abs(diff).sum(axis=1)
    if metric == "scaled_manhattan":
        return (np.abs(diff) / template.mad).sum(axis=1)
    if metric == "mahalanobis":
        z = np.linalg.solve(template.cov_chol, diff.T)
        return np.sqrt((z**2).sum(axis=0))
    raise ValueError("unknown metric %r (expected one of %s)" % (metric, ", ".join(METRICS)))


@dataclass(frozen=True)
class ScoreSet:
    """Scores of every test record against every claimed identity.

    ``matrix[i, j]`` is the distance of test record j from subject i's
    template; ``true_labels[j]`` names record j's actual subject. Each record
    therefore contributes one genuine score and N-1 impostor scores.
    """

    metric: str
    subjects: tuple[str, ...]
    matrix: np.ndarray
    true_labels: tuple[str, ...]

    def genuine(self, subject: str) -> np.ndarray:
        i = self.subjects.index(subject)
        mask = np.array([t == subject for t in self.true_labels])
        return self.matrix[i, mask]

    def impostor(self, subject: str) -> np.ndarray:
        i = self.subjects.index(subject)
        mask = np.array([t != subject for t in self.true_labels])
        return self.matrix[i, mask]


def score_dataset(templates: dict[str, UserTemplate], test: Dataset, metric: str) -> ScoreSet:
    """Score all test records against all templates under one metric."""
    subjects = tuple(templates)
    matrix = np.empty((len(subjects), len(test)))
    for i, s in enumerate(subjects):
        matrix[i] = score_rows(templates[s], test.features, metric)
    return ScoreSet(metric.replace("-", "_"), subjects, matrix, tuple(test.subjects))


def dump_scores(scores: ScoreSet, path: str | Path, command: str | None = None) -> None:
    """Write the score table as CSV: claimed_subject,true_subject,metric,score."""
    with open(path, "w", newline="") as fh:
        if command:
            fh.write("# command: %s\n" % command)
        writer = csv.writer(fh)
        writer.writerow(["claimed_subject", "true_subject", "metric", "score"])
        for i, claimed in enumerate(scores.subjects):
            for j, true in enumerate(scores.true_labels):
                writer.writerow([claimed, true, scores.metric, repr(float(scores.matrix[i, j]))])
