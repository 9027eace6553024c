"""Seeded random forest over the four fingerprint features.

Trees are CART classifiers grown on bootstrap samples with a fresh random
feature subset at every node; the forest classifies by plurality vote.
Determinism is a hard contract: the master seed expands (SplitMix64) into
one seed per tree, each tree owns an independent xoshiro256** stream, and
every tie anywhere (split search, leaf vote, forest vote) breaks toward the
lower feature index / threshold / label, so the same inputs produce the
same serialized bytes no matter how training is scheduled.

Split quality is the Gini impurity decrease.  Candidate thresholds are
midpoints between consecutive distinct sorted values of a feature, demoted
to the lower value when float rounding would collapse the midpoint onto the
upper one (keeping "value <= threshold goes left" consistent with the
scored partition).  Candidates are compared in exact integer arithmetic, so
the winner never depends on summation order.
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from hashlib import blake2b
from math import floor
from typing import Sequence

import numpy as np

from .dataset import Dataset
from .errors import FormatError
from .fingerprint import FEATURE_NAMES, Fingerprint
from .rng import SplitMix64, Xoshiro256StarStar

FORMAT_VERSION = 1
_MAGIC = b"NFPT"

N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True, slots=True)
class ForestParams:
    n_trees: int = 100
    mtry: int = 2  # floor(sqrt(4)) features considered per node
    min_leaf: int = 1
    max_depth: int | None = None
    bootstrap_fraction: float = 1.0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if not 1 <= self.mtry <= N_FEATURES:
            raise ValueError(f"mtry must be in 1..{N_FEATURES}, got {self.mtry}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")
        if not 0.0 < self.bootstrap_fraction <= 1.0:
            raise ValueError(f"bootstrap_fraction must be in (0, 1], got {self.bootstrap_fraction}")


@dataclass(eq=True, slots=True)
class Leaf:
    """Terminal node; ``counts`` maps label index -> training instances."""

    counts: dict[int, int]
    vote: int  # argmax of counts, ties to the lowest label index

    @classmethod
    def from_counts(cls, counts: dict[int, int]) -> "Leaf":
        vote = min(counts, key=lambda i: (-counts[i], i))
        return cls(counts=counts, vote=vote)


@dataclass(eq=True, slots=True)
class Internal:
    """Split node; value <= threshold routes left, > threshold routes right."""

    feature_index: int
    threshold: float
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None


TreeNode = Leaf | Internal


@dataclass(frozen=True)
class RandomForest:
    params: ForestParams
    seed: int
    label_vocabulary: tuple[str, ...]
    trees: tuple[TreeNode, ...]
    format_version: int = FORMAT_VERSION

    def __post_init__(self) -> None:
        if len(self.trees) != self.params.n_trees:
            raise ValueError(
                f"forest has {len(self.trees)} trees but params say {self.params.n_trees}"
            )


def best_split(
    instances: Sequence[tuple[Sequence[float], object]],
    feature_subset: Sequence[int],
) -> tuple[int, float, float] | None:
    """Best (feature_index, threshold, gini_gain) over the given features.

    Scans every midpoint between consecutive distinct sorted values of each
    feature in the subset and returns the split with the largest Gini
    impurity decrease, ties broken by lower feature index then lower
    threshold.  Returns None when no candidate has a strictly positive gain.
    """
    if len(instances) < 2:
        return None
    X = np.asarray([tuple(feat) for feat, _ in instances], dtype=np.float64)
    labels: dict[object, int] = {}
    y = np.asarray([labels.setdefault(label, len(labels)) for _, label in instances])
    return _best_split_arrays(X, y, len(labels), feature_subset)


def _best_split_arrays(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    feature_subset: Sequence[int],
    min_child: int = 1,
) -> tuple[int, float, float] | None:
    n = y.shape[0]
    parent_counts = np.bincount(y, minlength=n_classes).astype(np.int64)
    parent_sq = int((parent_counts**2).sum())
    if parent_sq == n * n:  # pure node: no split can gain
        return None

    # Pass 1: float penalties (n_left*gini_left + n_right*gini_right) for
    # every candidate of every feature; exact arithmetic only on the
    # near-minimal shortlist in pass 2.
    per_feature: list[tuple[int, np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
    best_float = np.inf
    for f in sorted(set(int(i) for i in feature_subset)):
        col = X[:, f]
        order = np.argsort(col, kind="stable")
        sv = col[order]
        sy = y[order]
        boundary = np.nonzero(sv[1:] != sv[:-1])[0]
        if boundary.size == 0:
            continue
        n_left = (boundary + 1).astype(np.int64)
        n_right = n - n_left
        if min_child > 1:
            ok = (n_left >= min_child) & (n_right >= min_child)
            boundary, n_left, n_right = boundary[ok], n_left[ok], n_right[ok]
            if boundary.size == 0:
                continue
        sq_left = np.zeros(boundary.shape[0], dtype=np.int64)
        sq_right = np.zeros(boundary.shape[0], dtype=np.int64)
        for c in range(n_classes):
            left_c = np.cumsum(sy == c)[boundary]
            right_c = parent_counts[c] - left_c
            sq_left += left_c * left_c
            sq_right += right_c * right_c
        penalty = (n_left * n_left - sq_left) / n_left + (n_right * n_right - sq_right) / n_right
        lo = sv[boundary]
        hi = sv[boundary + 1]
        thresholds = (lo + hi) / 2.0
        thresholds = np.where(thresholds == hi, lo, thresholds)
        per_feature.append((f, penalty, thresholds, np.stack([n_left, sq_left], 1), sq_right))
        fmin = penalty.min()
        if fmin < best_float:
            best_float = fmin
    if not per_feature:
        return None

    # Pass 2: exact comparison of the shortlist; penalties are ratios of
    # integers, so ranking them as Fractions is independent of float
    # rounding and the tie rule applies to true ties only.
    tol = best_float * 1e-9 + 1e-12
    best_key: tuple[Fraction, int, float] | None = None
    for f, penalty, thresholds, left_ns, sq_right in per_feature:
        for i in np.nonzero(penalty <= best_float + tol)[0]:
            n_left, sq_left = int(left_ns[i, 0]), int(left_ns[i, 1])
            n_right = n - n_left
            exact = Fraction(n_left * n_left - sq_left, n_left) + Fraction(
                n_right * n_right - int(sq_right[i]), n_right
            )
            key = (exact, f, float(thresholds[i]))
            if best_key is None or key < best_key:
                best_key = key
    assert best_key is not None
    exact_penalty, feature, threshold = best_key
    gain = Fraction(n * n - parent_sq, n * n) - exact_penalty / n
    if gain <= 0:
        return None
    return feature, threshold, float(gain)


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    rng: Xoshiro256StarStar,
    params: ForestParams,
) -> TreeNode:
    """Depth-first growth, left subtree before right (fixed RNG order)."""
    root: TreeNode | None = None
    # Stack of (row indices, depth, parent, attach-as-right); popping after
    # pushing right-then-left yields the left child first.
    stack: list[tuple[np.ndarray, int, Internal | None, bool]] = [
        (np.arange(y.shape[0]), 0, None, False)
    ]
    while stack:
        idx, depth, parent, is_right = stack.pop()
        node = _decide_node(X, y, idx, n_classes, depth, rng, params)
        if parent is None:
            root = node
        elif is_right:
            parent.right = node
        else:
            parent.left = node
        if isinstance(node, Internal):
            mask = X[idx, node.feature_index] <= node.threshold
            stack.append((idx[~mask], depth + 1, node, True))
            stack.append((idx[mask], depth + 1, node, False))
    assert root is not None
    return root


def _decide_node(
    X: np.ndarray,
    y: np.ndarray,
    idx: np.ndarray,
    n_classes: int,
    depth: int,
    rng: Xoshiro256StarStar,
    params: ForestParams,
) -> TreeNode:
    counts = np.bincount(y[idx], minlength=n_classes)
    n = idx.shape[0]
    splittable = (
        n >= 2 * params.min_leaf
        and (counts != n).all()
        and (params.max_depth is None or depth < params.max_depth)
    )
    if splittable:
        subset = rng.sample_indices(N_FEATURES, params.mtry)
        found = _best_split_arrays(X[idx], y[idx], n_classes, subset, min_child=params.min_leaf)
        if found is not None:
            feature, threshold, _gain = found
            return Internal(feature_index=feature, threshold=threshold)
    return Leaf.from_counts({int(c): int(counts[c]) for c in np.nonzero(counts)[0]})


def _train_one_tree(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    tree_seed: int,
    params: ForestParams,
) -> TreeNode:
    rng = Xoshiro256StarStar.from_seed(tree_seed)
    n = y.shape[0]
    n_draws = max(1, floor(params.bootstrap_fraction * n + 0.5))
    sample = np.fromiter((rng.below(n) for _ in range(n_draws)), dtype=np.intp, count=n_draws)
    return _grow_tree(X[sample], y[sample], n_classes, rng, params)


def _resolve_jobs(n_jobs: int | None) -> int:
    if n_jobs is None:
        n_jobs = int(os.environ.get("NETPRINT_THREADS", "1") or "1")
    return max(1, n_jobs)


def dataset_arrays(dataset: Dataset) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    """Feature matrix, label indices and the sorted label vocabulary."""
    vocab = dataset.labels
    index = {label: i for i, label in enumerate(vocab)}
    X = np.asarray([inst.fingerprint.as_tuple() for inst in dataset.instances], dtype=np.float64)
    y = np.asarray([index[inst.label] for inst in dataset.instances], dtype=np.intp)
    return X, y, vocab


def train(
    train_set: Dataset,
    params: ForestParams = ForestParams(),
    seed: int = 1,
    n_jobs: int | None = None,
) -> RandomForest:
    """Grow the forest; identical inputs give an identical model.

    ``n_jobs`` > 1 trains trees on a thread pool (``None`` reads the
    NETPRINT_THREADS environment variable, default 1); scheduling cannot
    change the result because every tree derives its own generator from
    the master seed.
    """
    n = len(train_set)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if n < params.min_leaf:
        raise ValueError(f"min_leaf={params.min_leaf} exceeds the {n} available instance(s)")
    X, y, vocab = dataset_arrays(train_set)
    master = SplitMix64(seed)
    tree_seeds = [master.next_u64() for _ in range(params.n_trees)]
    jobs = _resolve_jobs(n_jobs)
    if jobs == 1:
        trees = [_train_one_tree(X, y, len(vocab), s, params) for s in tree_seeds]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trees = list(
                pool.map(lambda s: _train_one_tree(X, y, len(vocab), s, params), tree_seeds)
            )
    return RandomForest(params=params, seed=seed, label_vocabulary=vocab, trees=tuple(trees))


def _leaf_for(tree: TreeNode, x: Sequence[float]) -> Leaf:
    node = tree
    while isinstance(node, Internal):
        node = node.left if x[node.feature_index] <= node.threshold else node.right
    assert isinstance(node, Leaf)
    return node


def vote_counts(forest: RandomForest, fingerprint: Fingerprint) -> np.ndarray:
    """Number of trees voting each vocabulary index; sums to n_trees."""
    x = fingerprint.as_tuple()
    votes = np.zeros(len(forest.label_vocabulary), dtype=np.int64)
    for tree in forest.trees:
        votes[_leaf_for(tree, x).vote] += 1
    return votes


def predict(forest: RandomForest, fingerprint: Fingerprint) -> str:
    """Plurality vote over trees; ties go to the lexicographically smallest label."""
    votes = vote_counts(forest, fingerprint)
    return forest.label_vocabulary[int(np.argmax(votes))]


def predict_proba(forest: RandomForest, fingerprint: Fingerprint) -> dict[str, float]:
    """Vote fraction per vocabulary label (denominator is the tree count)."""
    votes = vote_counts(forest, fingerprint)
    n = forest.params.n_trees
    return {label: int(votes[i]) / n for i, label in enumerate(forest.label_vocabulary)}


def _serialize_tree(tree: TreeNode, out: bytearray) -> int:
    """Append preorder nodes; returns the node count."""
    count = 0
    stack = [tree]
    while stack:
        node = stack.pop()
        count += 1
        if isinstance(node, Internal):
            out += struct.pack("<BB", 1, node.feature_index)
            out += struct.pack("<d", node.threshold)
            stack.append(node.right)  # type: ignore[arg-type]
            stack.append(node.left)  # type: ignore[arg-type]
        else:
            entries = sorted(node.counts.items())
            out += struct.pack("<BI", 2, len(entries))
            for label_index, count_value in entries:
                out += struct.pack("<IQ", label_index, count_value)
    return count


def serialize_model(forest: RandomForest) -> bytes:
    body = bytearray()
    body += _MAGIC
    body += struct.pack("<III", forest.format_version, forest.params.n_trees, forest.params.mtry)
    max_depth = -1 if forest.params.max_depth is None else forest.params.max_depth
    body += struct.pack("<Ii", forest.params.min_leaf, max_depth)
    body += struct.pack("<dQ", forest.params.bootstrap_fraction, forest.seed)
    body += struct.pack("<I", len(forest.label_vocabulary))
    for label in forest.label_vocabulary:
        raw = label.encode("utf-8")
        body += struct.pack("<I", len(raw))
        body += raw
    for tree in forest.trees:
        nodes = bytearray()
        count = _serialize_tree(tree, nodes)
        body += struct.pack("<I", count)
        body += nodes
    body += blake2b(bytes(body), digest_size=8).digest()
    return bytes(body)


def save_model(forest: RandomForest, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_model(forest))


class _Cursor:
    __slots__ = ("data", "pos", "name")

    def __init__(self, data: bytes, name: str) -> None:
        self.data = data
        self.pos = 0
        self.name = name

    def take(self, fmt: str) -> tuple:
        size = struct.calcsize(fmt)
        end = self.pos + size
        if end > len(self.data):
            raise FormatError(f"{self.name}: truncated model file")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos = end
        return out

    def take_bytes(self, size: int) -> bytes:
        end = self.pos + size
        if end > len(self.data):
            raise FormatError(f"{self.name}: truncated model file")
        out = self.data[self.pos : end]
        self.pos = end
        return out


def deserialize_model(blob: bytes, name: str = "<model>") -> RandomForest:
    if len(blob) < len(_MAGIC) + 8:
        raise FormatError(f"{name}: not a model file (too short)")
    body, digest = blob[:-8], blob[-8:]
    if blake2b(body, digest_size=8).digest() != digest:
        raise FormatError(f"{name}: checksum mismatch (corrupted model file)")
    cur = _Cursor(body, name)
    if cur.take_bytes(4) != _MAGIC:
        raise FormatError(f"{name}: bad magic, not a model file")
    (version, n_trees, mtry) = cur.take("<III")
    if version != FORMAT_VERSION:
        raise FormatError(f"{name}: unsupported format version {version}")
    (min_leaf, max_depth) = cur.take("<Ii")
    (bootstrap_fraction, seed) = cur.take("<dQ")
    (n_labels,) = cur.take("<I")
    labels = []
    for _ in range(n_labels):
        (length,) = cur.take("<I")
        try:
            labels.append(cur.take_bytes(length).decode("utf-8"))
        except UnicodeDecodeError:
            raise FormatError(f"{name}: malformed label bytes") from None
    params = ForestParams(
        n_trees=n_trees,
        mtry=mtry,
        min_leaf=min_leaf,
        max_depth=None if max_depth < 0 else max_depth,
        bootstrap_fraction=bootstrap_fraction,
    )
    trees = tuple(_deserialize_tree(cur, n_labels) for _ in range(n_trees))
    if cur.pos != len(body):
        raise FormatError(f"{name}: trailing bytes after last tree")
    return RandomForest(
        params=params,
        seed=seed,
        label_vocabulary=tuple(labels),
        trees=trees,
        format_version=version,
    )


def _read_one_node(cur: _Cursor, n_labels: int) -> TreeNode:
    (tag,) = cur.take("<B")
    if tag == 1:
        (feature_index,) = cur.take("<B")
        if feature_index >= N_FEATURES:
            raise FormatError(f"{cur.name}: feature index {feature_index} out of range")
        (threshold,) = cur.take("<d")
        return Internal(feature_index=feature_index, threshold=threshold)
    if tag == 2:
        (n_entries,) = cur.take("<I")
        counts: dict[int, int] = {}
        for _ in range(n_entries):
            (label_index, count_value) = cur.take("<IQ")
            if label_index >= n_labels:
                raise FormatError(f"{cur.name}: label index {label_index} out of range")
            counts[label_index] = count_value
        if not counts:
            raise FormatError(f"{cur.name}: empty leaf")
        return Leaf.from_counts(counts)
    raise FormatError(f"{cur.name}: unknown node tag {tag}")


def _deserialize_tree(cur: _Cursor, n_labels: int) -> TreeNode:
    """Rebuild one tree from its preorder node list."""
    (declared,) = cur.take("<I")
    root: TreeNode | None = None
    pending: list[Internal] = []  # internal nodes still missing a child
    for _ in range(declared):
        node = _read_one_node(cur, n_labels)
        if root is None:
            root = node
        elif not pending:
            raise FormatError(f"{cur.name}: node after the tree was already complete")
        else:
            top = pending[-1]
            if top.left is None:
                top.left = node
            else:
                top.right = node
                pending.pop()
        if isinstance(node, Internal):
            pending.append(node)
    if root is None or pending:
        raise FormatError(f"{cur.name}: tree node list is incomplete")
    return root


def load_model(path: str) -> RandomForest:
    """Load a model written by ``save_model``; any corruption is an error."""
    with open(path, "rb") as fh:
        return deserialize_model(fh.read(), name=path)
