"""Labeled instance collections: cleaning, relabeling, splitting, CSV I/O.

The train/test split shuffles with a Fisher-Yates pass driven by
xoshiro256** (state expanded from the seed with SplitMix64, see ``rng``)
and sizes the training set with round-half-away-from-zero of
``train_fraction * n``, so identical seeds give identical membership in any
conforming implementation.

The instance CSV is ``label,iplen_mu,iplen_sigma,tcpwin_mu,tcpwin_sigma``
with floats printed at 17 significant digits, which round-trips float64
losslessly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import ClassVar

from .errors import FormatError
from .fingerprint import FEATURE_NAMES, Fingerprint, LabeledInstance
from .rng import Xoshiro256StarStar

CategoryMap = dict[str, str]


@dataclass(frozen=True)
class Dataset:
    """An immutable list of labeled instances plus its label vocabulary."""

    instances: tuple[LabeledInstance, ...]
    labels: tuple[str, ...] = field(init=False)

    feature_names: ClassVar[tuple[str, ...]] = FEATURE_NAMES

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "labels", tuple(sorted({i.label for i in self.instances})))

    def __len__(self) -> int:
        return len(self.instances)


@dataclass(frozen=True, slots=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def train_size(n_instances: int, train_fraction: float) -> int:
    """Training-set size: round-half-away-from-zero of ``train_fraction * n``."""
    return int(math.floor(train_fraction * n_instances + 0.5))


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Deterministic uniform shuffle-and-cut into train and test sets."""
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    order = list(range(n))
    Xoshiro256StarStar.from_seed(spec.seed).shuffle(order)
    cut = train_size(n, spec.train_fraction)
    train = Dataset(dataset.instances[i] for i in order[:cut])
    test = Dataset(dataset.instances[i] for i in order[cut:])
    return train, test


def split_stratified(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Per-label shuffle-and-cut; class proportions carry over to both sides.

    Uses one generator across label groups in sorted-label order, applying
    the same rounding rule within each label, so overall sizes may differ
    from the unstratified cut by rounding.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    rng = Xoshiro256StarStar.from_seed(spec.seed)
    by_label: dict[str, list[int]] = {label: [] for label in dataset.labels}
    for i, inst in enumerate(dataset.instances):
        by_label[inst.label].append(i)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for label in dataset.labels:
        group = by_label[label]
        rng.shuffle(group)
        cut = train_size(len(group), spec.train_fraction)
        train_idx.extend(group[:cut])
        test_idx.extend(group[cut:])
    train = Dataset(dataset.instances[i] for i in train_idx)
    test = Dataset(dataset.instances[i] for i in test_idx)
    return train, test


def relabel(dataset: Dataset, mapping: CategoryMap) -> Dataset:
    """Replace device labels by their categories, e.g. for the IoT/non-IoT task."""
    missing = [label for label in dataset.labels if label not in mapping]
    if missing:
        raise ValueError(f"category map does not cover label(s): {', '.join(missing)}")
    return Dataset(
        LabeledInstance(inst.fingerprint, mapping[inst.label]) for inst in dataset.instances
    )


def dedupe(dataset: Dataset) -> tuple[Dataset, int]:
    """Drop instances whose (label, features) exactly repeat an earlier one."""
    seen: set[tuple] = set()
    kept: list[LabeledInstance] = []
    for inst in dataset.instances:
        key = (inst.label, *inst.fingerprint.as_tuple())
        if key in seen:
            continue
        seen.add(key)
        kept.append(inst)
    return Dataset(kept), len(dataset) - len(kept)


def _format_float(x: float) -> str:
    return format(x, ".17g")


def write_instances(dataset: Dataset, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("label", *FEATURE_NAMES))
        for inst in dataset.instances:
            writer.writerow((inst.label, *map(_format_float, inst.fingerprint.as_tuple())))


def read_instances(path: str) -> Dataset:
    """Read an instance CSV; raises ``FormatError`` with the offending row number."""
    with open(path, "r", encoding="utf-8-sig", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: missing header row") from None
        if tuple(h.strip() for h in header) != ("label", *FEATURE_NAMES):
            raise FormatError(
                f"{path}: expected header 'label,{','.join(FEATURE_NAMES)}', got {','.join(header)}"
            )
        instances: list[LabeledInstance] = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise FormatError(f"{path}:{row_no}: expected 5 fields, got {len(row)}")
            label = row[0]
            if not label:
                raise FormatError(f"{path}:{row_no}: empty label")
            try:
                values = [float(v) for v in row[1:]]
            except ValueError:
                raise FormatError(f"{path}:{row_no}: unparseable feature value") from None
            try:
                instances.append(LabeledInstance(Fingerprint(*values), label))
            except ValueError as exc:
                raise FormatError(f"{path}:{row_no}: {exc}") from None
    return Dataset(instances)


def read_category_map(path: str) -> CategoryMap:
    """Read a two-column CSV ``device_label,category`` (header required)."""
    mapping: CategoryMap = {}
    with open(path, "r", encoding="utf-8-sig", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: missing header row") from None
        names = [h.strip() for h in header]
        if names[:2] != ["device_label", "category"]:
            raise FormatError(f"{path}: expected header 'device_label,category'")
        for row_no, row in enumerate(reader, start=2):
            if len(row) < 2 or not row[0].strip() or not row[1].strip():
                raise FormatError(f"{path}:{row_no}: expected 'device_label,category'")
            mapping[row[0].strip()] = row[1].strip()
    return mapping
