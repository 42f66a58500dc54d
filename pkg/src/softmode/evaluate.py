"""Scoring soft clusterings against ground-truth classes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .membership import MembershipMatrix

__all__ = ["EvalReport", "accuracy", "hard_accuracy", "mean_lower_membership", "confusion_matrix"]


@dataclass(frozen=True, eq=False)
class EvalReport:
    accuracy: float
    label_mapping: dict
    confusion: np.ndarray
    mean_lower_membership: float
    classes: np.ndarray

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "label_mapping": {str(k): int(v) for k, v in self.label_mapping.items()},
            "confusion": self.confusion.tolist(),
            "classes": self.classes.tolist(),
            "mean_lower_membership": self.mean_lower_membership,
        }


def confusion_matrix(clusters: np.ndarray, labels: np.ndarray, k: int, classes: np.ndarray) -> np.ndarray:
    """k x c counts; ``clusters`` are 0-based, negatives (unassigned) are left out."""
    col = np.searchsorted(classes, labels)
    keep = clusters >= 0
    out = np.zeros((k, len(classes)), dtype=np.int64)
    np.add.at(out, (clusters[keep], col[keep]), 1)
    return out


def _optimal_match(confusion: np.ndarray, classes: np.ndarray) -> tuple[int, dict]:
    if confusion.size == 0:
        return 0, {}
    rows, cols = linear_sum_assignment(confusion, maximize=True)
    mapping = {int(r): int(classes[c]) for r, c in zip(rows, cols)}
    return int(confusion[rows, cols].sum()), mapping


def mean_lower_membership(mu: np.ndarray) -> float:
    """Mean over points of the second-largest cluster membership (columns 1..k)."""
    clusters = mu[:, 1:]
    if clusters.shape[1] < 2:
        return 0.0
    part = np.partition(clusters, -2, axis=1)
    return float(part[:, -2].mean())


def hard_accuracy(assignment: np.ndarray, labels: np.ndarray, k: int | None = None) -> float:
    """Accuracy of a hard assignment (negative = unassigned) under the best cluster-to-class map."""
    assignment = np.asarray(assignment)
    labels = np.asarray(labels)
    if k is None:
        k = int(assignment.max()) + 1 if np.any(assignment >= 0) else 0
    classes = np.unique(labels)
    conf = confusion_matrix(assignment, labels, k, classes)
    matched, _ = _optimal_match(conf, classes)
    return matched / len(labels)


def accuracy(membership: MembershipMatrix | np.ndarray, labels) -> EvalReport:
    """Classification accuracy of the argmax cluster.

    The hard label of a point is its most likely cluster among columns
    1..k (ties to the lower index). Points whose never-absorbed mass is at
    least as large as every cluster membership count as misclassified. Clusters are mapped
    to classes by a maximum-weight matching of the confusion matrix;
    clusters or classes left without a partner contribute no matches.
    """
    if labels is None:
        raise ValueError("accuracy needs ground-truth labels")
    mu = membership.mu if isinstance(membership, MembershipMatrix) else np.asarray(membership, dtype=float)
    labels = np.asarray(labels)
    if len(labels) != mu.shape[0]:
        raise ValueError("labels and memberships differ in length")
    k = mu.shape[1] - 1
    if k < 1:
        raise ValueError("at least one cluster is required")
    best = np.argmax(mu[:, 1:], axis=1)
    unassigned = mu[:, 0] >= mu[np.arange(len(mu)), best + 1]
    clusters = np.where(unassigned, -1, best)
    classes = np.unique(labels)
    conf = confusion_matrix(clusters, labels, k, classes)
    matched, mapping = _optimal_match(conf, classes)
    return EvalReport(matched / len(labels), mapping, conf, mean_lower_membership(mu), classes)
