"""Score a trained forest on a held-out set and write the report files.

Per-class "accuracy" in the per-device report is recall: the fraction of
that class's test instances predicted as that class.  Overall accuracy is
the confusion-matrix trace over the test size.  RMSE compares the forest's
vote fractions against the one-hot truth across all classes:
sqrt( (1/(n*k)) * sum_instances sum_classes (p_c - y_c)^2 ).

Classes that never occur in the test set get recall ``None`` (written as
``NA`` in the CSV), never a silent zero, so a pathological split cannot
masquerade as a bad classifier.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from math import sqrt

import numpy as np

from .dataset import Dataset
from .fingerprint import LabeledInstance, fingerprint_from_values
from .forest import RandomForest, vote_counts
from .rng import Xoshiro256StarStar


@dataclass(frozen=True)
class ConfusionMatrix:
    labels: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]  # counts[i][j]: true i predicted j

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def trace(self) -> int:
        return sum(self.counts[i][i] for i in range(len(self.labels)))


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    per_class_recall: dict[str, float | None]
    per_class_precision: dict[str, float | None]
    rmse: float
    matrix: ConfusionMatrix
    n_test: int


def evaluate(forest: RandomForest, test: Dataset) -> EvalReport:
    """Deterministic accuracy/recall/precision/RMSE of ``forest`` on ``test``."""
    if len(test) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    vocab = forest.label_vocabulary
    index = {label: i for i, label in enumerate(vocab)}
    unknown = sorted(set(test.labels) - set(vocab))
    if unknown:
        raise ValueError(f"test label(s) not in the model vocabulary: {', '.join(unknown)}")
    k = len(vocab)
    n = len(test)
    n_trees = forest.params.n_trees
    counts = np.zeros((k, k), dtype=np.int64)
    squared_error = 0.0
    for inst in test.instances:
        votes = vote_counts(forest, inst.fingerprint)
        predicted = int(np.argmax(votes))
        truth = index[inst.label]
        counts[truth, predicted] += 1
        p = votes / n_trees
        p[truth] -= 1.0
        squared_error += float(np.dot(p, p))
    rmse = sqrt(squared_error / (n * k))
    matrix = ConfusionMatrix(labels=vocab, counts=tuple(tuple(int(v) for v in row) for row in counts))
    row_sums = counts.sum(axis=1)
    col_sums = counts.sum(axis=0)
    recall = {
        label: (int(counts[i, i]) / int(row_sums[i]) if row_sums[i] else None)
        for i, label in enumerate(vocab)
    }
    precision = {
        label: (int(counts[i, i]) / int(col_sums[i]) if col_sums[i] else None)
        for i, label in enumerate(vocab)
    }
    return EvalReport(
        accuracy=matrix.trace() / n,
        per_class_recall=recall,
        per_class_precision=precision,
        rmse=rmse,
        matrix=matrix,
        n_test=n,
    )


def _metric_cell(value: float | None) -> str:
    return "NA" if value is None else repr(value)


def per_device_report(report: EvalReport, path: str) -> None:
    """Write ``label,n_test,recall,precision`` rows sorted by label.

    Recall here is the per-device accuracy one would plot as a bar chart;
    ``NA`` marks classes with no test instances.
    """
    row_total = {label: sum(row) for label, row in zip(report.matrix.labels, report.matrix.counts)}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("label", "n_test", "recall", "precision"))
        for label in sorted(report.matrix.labels):
            writer.writerow(
                (
                    label,
                    row_total[label],
                    _metric_cell(report.per_class_recall[label]),
                    _metric_cell(report.per_class_precision[label]),
                )
            )


def write_confusion_csv(report: EvalReport, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("label", *report.matrix.labels))
        for label, row in zip(report.matrix.labels, report.matrix.counts):
            writer.writerow((label, *row))


def write_summary(report: EvalReport, forest: RandomForest, path: str) -> None:
    params = forest.params
    lines = [
        f"accuracy: {report.accuracy!r}",
        f"rmse: {report.rmse!r}",
        f"n_test: {report.n_test}",
        f"classes: {len(report.matrix.labels)}",
        f"trees: {params.n_trees}",
        f"mtry: {params.mtry}",
        f"min_leaf: {params.min_leaf}",
        f"max_depth: {'unlimited' if params.max_depth is None else params.max_depth}",
        f"seed: {forest.seed}",
        "note: per-class figures report recall (correct fraction of that class's test instances)",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True, slots=True)
class SyntheticProfile:
    """Gaussian packet model of one device for generated test data."""

    label: str
    iplen_mean: float
    iplen_sigma: float
    win_mean: float
    win_sigma: float
    n_instances: int

    def __post_init__(self) -> None:
        if self.iplen_sigma < 0 or self.win_sigma < 0:
            raise ValueError("profile sigmas must be >= 0")
        if self.n_instances < 1:
            raise ValueError("profile needs at least one instance")


def make_synthetic(
    profiles: list[SyntheticProfile],
    seed: int,
    packets_per_instance: int = 5,
) -> Dataset:
    """Deterministic synthetic dataset drawn from per-device packet models.

    Each instance fingerprints ``packets_per_instance`` simulated packets:
    ip lengths and window values are Gaussian draws from the profile,
    clamped at zero to stay in valid range.
    """
    rng = Xoshiro256StarStar.from_seed(seed)
    instances: list[LabeledInstance] = []
    for profile in profiles:
        for _ in range(profile.n_instances):
            iplens = [
                max(0.0, rng.gauss(profile.iplen_mean, profile.iplen_sigma))
                for _ in range(packets_per_instance)
            ]
            wins = [
                max(0.0, rng.gauss(profile.win_mean, profile.win_sigma))
                for _ in range(packets_per_instance)
            ]
            instances.append(LabeledInstance(fingerprint_from_values(iplens, wins), profile.label))
    return Dataset(instances)
