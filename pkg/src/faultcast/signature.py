"""Failure signatures: window encoding, classifiers, and cross-validation.

A window of anomalous KPIs is flattened to a binary feature vector over a
fixed KPI vocabulary; signature classifiers map those vectors to failure
classes with a confidence distribution.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import (
    AnomalousKpi,
    AnomalyKind,
    FailureClass,
    FaultType,
    KpiId,
    NORMAL_CLASS,
    SchemaVersionError,
    WindowSample,
)
from .metrics import Contingency

logger = logging.getLogger(__name__)

SIGNATURE_KIND = "faultcast-signature"
SIGNATURE_SCHEMA_VERSION = 1

DEFAULT_MIN_LEAF = 2
DEFAULT_ALPHA = 1.0

#: Gains below this are treated as zero when growing trees.
_GAIN_EPS = 1e-12


class Vocabulary:
    """The fixed, ordered KPI vocabulary feature vectors are built over.

    One bit per KPI by default; with ``split_kinds`` the univariate and
    multivariate detections of a KPI get separate bits.  Anomalies for KPIs
    outside the vocabulary are ignored and counted on :attr:`ignored`.
    """

    __slots__ = ("kpis", "split_kinds", "_index", "ignored")

    def __init__(self, kpis: Iterable[KpiId], split_kinds: bool = False):
        self.kpis: Tuple[KpiId, ...] = tuple(sorted(set(kpis)))
        if not self.kpis:
            raise ValueError("vocabulary must contain at least one KPI")
        self.split_kinds = bool(split_kinds)
        self._index = {kpi: i for i, kpi in enumerate(self.kpis)}
        self.ignored = 0

    @property
    def dimension(self) -> int:
        return len(self.kpis) * (2 if self.split_kinds else 1)

    def feature_name(self, bit: int) -> str:
        if self.split_kinds:
            kpi = self.kpis[bit // 2]
            kind = "uni" if bit % 2 == 0 else "multi"
            return f"{kpi} [{kind}]"
        return str(self.kpis[bit])

    def encode(self, anomalies: Iterable[AnomalousKpi]) -> np.ndarray:
        bits = np.zeros(self.dimension, dtype=np.uint8)
        for anomaly in anomalies:
            idx = self._index.get(anomaly.kpi)
            if idx is None:
                self.ignored += 1
                logger.debug("encode: %s not in vocabulary, ignored", anomaly.kpi)
                continue
            if self.split_kinds:
                offset = 0 if anomaly.kind is AnomalyKind.UNIVARIATE else 1
                bits[2 * idx + offset] = 1
            else:
                bits[idx] = 1
        return bits

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self.kpis == other.kpis
            and self.split_kinds == other.split_kinds
        )


def encode_window(anomalies: Iterable[AnomalousKpi], vocab: Vocabulary) -> np.ndarray:
    """Binary feature vector of a window's anomalous KPI set."""
    return vocab.encode(anomalies)


def windowize_events(events, windows, label_fn=None) -> List[WindowSample]:
    """Group anomaly events into sliding windows.

    ``windows`` is a list of (start, end) pairs; an event belongs to every
    window whose range contains its interval start, so anomalies persist
    across overlapping windows until they slide out.  ``label_fn`` maps
    (start, end) to an optional FailureClass.
    """
    out = []
    for start, end in windows:
        first_seen: Dict[Tuple[KpiId, AnomalyKind], int] = {}
        for event in events:
            if start <= event.interval_start < end:
                key = (event.kpi, event.kind)
                seen = first_seen.get(key)
                if seen is None or event.interval_start < seen:
                    first_seen[key] = event.interval_start
        anomalies = frozenset(
            AnomalousKpi(kpi, kind, seen) for (kpi, kind), seen in first_seen.items()
        )
        label = label_fn(start, end) if label_fn is not None else None
        out.append(WindowSample(start, end, anomalies, label))
    return out


@dataclass(frozen=True)
class ClassDistribution:
    """Probabilities over the model's failure classes; sums to one."""

    probabilities: Dict[FailureClass, float]

    def top(self) -> Tuple[FailureClass, float]:
        """The most likely class; ties break toward the smallest class."""
        best = None
        best_p = -1.0
        for cls in sorted(self.probabilities):
            p = self.probabilities[cls]
            if p > best_p:
                best, best_p = cls, p
        return best, best_p

    def __getitem__(self, cls: FailureClass) -> float:
        return self.probabilities.get(cls, 0.0)


# ---------------------------------------------------------------------------
# decision tree


@dataclass(frozen=True)
class TreeNode:
    """Either a decision on one feature bit or a leaf with its class counts.

    Leaves carry the (total, correct) pair of training samples that reached
    them, plus the full per-class counts used to spread residual mass.
    """

    feature: Optional[int] = None
    nominal: Optional["TreeNode"] = None
    anomalous: Optional["TreeNode"] = None
    class_index: Optional[int] = None
    total: int = 0
    correct: int = 0
    counts: Tuple[int, ...] = ()

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {
                "class_index": self.class_index,
                "total": self.total,
                "correct": self.correct,
                "counts": list(self.counts),
            }
        return {
            "feature": self.feature,
            "nominal": self.nominal.to_dict(),
            "anomalous": self.anomalous.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TreeNode":
        if "feature" in data:
            return cls(
                feature=int(data["feature"]),
                nominal=cls.from_dict(data["nominal"]),
                anomalous=cls.from_dict(data["anomalous"]),
            )
        return cls(
            class_index=int(data["class_index"]),
            total=int(data["total"]),
            correct=int(data["correct"]),
            counts=tuple(int(c) for c in data["counts"]),
        )


def _entropy(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


@dataclass(frozen=True)
class DecisionTreeModel:
    """A plain binary decision tree over anomaly bits."""

    classes: Tuple[FailureClass, ...]
    n_features: int
    min_leaf: int
    max_depth: Optional[int]
    root: TreeNode

    def predict_proba(self, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits)
        if bits.shape != (self.n_features,):
            raise ValueError(
                f"feature vector has dimension {bits.shape}, model expects {self.n_features}"
            )
        node = self.root
        while not node.is_leaf:
            node = node.anomalous if bits[node.feature] else node.nominal
        k = len(self.classes)
        probs = np.zeros(k)
        confidence = node.correct / node.total
        probs[node.class_index] = confidence
        remainder = 1.0 - confidence
        if remainder > 0.0:
            others = np.asarray(node.counts, dtype=float)
            others[node.class_index] = 0.0
            mass = others.sum()
            if mass > 0.0:
                probs += remainder * others / mass
            elif k > 1:
                spread = remainder / (k - 1)
                for i in range(k):
                    if i != node.class_index:
                        probs[i] += spread
            else:
                probs[node.class_index] = 1.0
        return probs

    def depth(self) -> int:
        def walk(node: TreeNode) -> int:
            if node.is_leaf:
                return 0
            return 1 + max(walk(node.nominal), walk(node.anomalous))

        return walk(self.root)


def _grow_tree(
    x: np.ndarray,
    y: np.ndarray,
    indices: np.ndarray,
    n_classes: int,
    min_leaf: int,
    max_depth: Optional[int],
    depth: int,
) -> TreeNode:
    counts = np.bincount(y[indices], minlength=n_classes)
    majority = int(np.argmax(counts))

    def leaf() -> TreeNode:
        return TreeNode(
            class_index=majority,
            total=int(counts.sum()),
            correct=int(counts[majority]),
            counts=tuple(int(c) for c in counts),
        )

    n = len(indices)
    if counts.max() == n:  # pure node
        return leaf()
    if n < 2 * min_leaf:
        return leaf()
    if max_depth is not None and depth >= max_depth:
        return leaf()

    parent_entropy = _entropy(counts)
    best_gain = 0.0
    best_feature = None
    sub = x[indices]
    for f in range(x.shape[1]):
        mask = sub[:, f] == 1
        n_on = int(mask.sum())
        n_off = n - n_on
        if n_on < min_leaf or n_off < min_leaf:
            continue
        on_counts = np.bincount(y[indices[mask]], minlength=n_classes)
        off_counts = counts - on_counts
        child = (n_on * _entropy(on_counts) + n_off * _entropy(off_counts)) / n
        gain = parent_entropy - child
        if gain > best_gain + _GAIN_EPS:
            best_gain = gain
            best_feature = f
    if best_feature is None or best_gain <= _GAIN_EPS:
        return leaf()
    mask = sub[:, best_feature] == 1
    return TreeNode(
        feature=best_feature,
        nominal=_grow_tree(x, y, indices[~mask], n_classes, min_leaf, max_depth, depth + 1),
        anomalous=_grow_tree(x, y, indices[mask], n_classes, min_leaf, max_depth, depth + 1),
    )


def train_tree(
    x: np.ndarray,
    y: np.ndarray,
    classes: Sequence[FailureClass],
    min_leaf: int = DEFAULT_MIN_LEAF,
    max_depth: Optional[int] = None,
) -> DecisionTreeModel:
    """Grow a tree by greedy information gain over binary anomaly bits.

    Splits must leave at least ``min_leaf`` samples on each side; growth stops
    on pure nodes, the optional depth cap, or when no split improves entropy.
    Ties between features break toward the lowest bit index.  Single-class
    input yields a single-leaf tree.
    """
    x = np.asarray(x, dtype=np.uint8)
    y = np.asarray(y, dtype=np.intp)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("x must be (n_samples, n_features) aligned with y")
    if len(x) == 0:
        raise ValueError("cannot train a tree on an empty sample set")
    if min_leaf < 1:
        raise ValueError("min_leaf must be at least 1")
    classes = tuple(classes)
    if y.max(initial=-1) >= len(classes):
        raise ValueError("label index out of range for the class list")
    root = _grow_tree(
        x, y, np.arange(len(y)), len(classes), min_leaf, max_depth, depth=0
    )
    return DecisionTreeModel(
        classes=classes,
        n_features=int(x.shape[1]),
        min_leaf=min_leaf,
        max_depth=max_depth,
        root=root,
    )


# ---------------------------------------------------------------------------
# Bernoulli naive Bayes


@dataclass(frozen=True)
class NaiveBayesModel:
    """Bernoulli naive Bayes with Laplace-smoothed priors and likelihoods."""

    classes: Tuple[FailureClass, ...]
    n_features: int
    alpha: float
    priors: np.ndarray
    theta: np.ndarray  # (n_classes, n_features) P(bit = 1 | class)

    def predict_proba(self, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits)
        if bits.shape != (self.n_features,):
            raise ValueError(
                f"feature vector has dimension {bits.shape}, model expects {self.n_features}"
            )
        probs = self.priors.copy()
        for j in range(self.n_features):
            probs = probs * (self.theta[:, j] if bits[j] else 1.0 - self.theta[:, j])
            if probs.max() < 1e-100:
                # rescale by an exact power of two: the normalization below
                # cancels it without introducing rounding error
                probs = np.ldexp(probs, 340)
        total = probs.sum()
        if total == 0.0:
            return np.full(len(self.classes), 1.0 / len(self.classes))
        return probs / total


def train_nb(
    x: np.ndarray,
    y: np.ndarray,
    classes: Sequence[FailureClass],
    alpha: float = DEFAULT_ALPHA,
) -> NaiveBayesModel:
    """Estimate smoothed priors (n_c + a) / (N + aK) and Bernoulli parameters
    (ones_c + a) / (n_c + 2a).  An empty sample set is an error."""
    x = np.asarray(x, dtype=np.uint8)
    y = np.asarray(y, dtype=np.intp)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("x must be (n_samples, n_features) aligned with y")
    if len(x) == 0:
        raise ValueError("cannot train naive Bayes on an empty sample set")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    classes = tuple(classes)
    k = len(classes)
    if y.max(initial=-1) >= k:
        raise ValueError("label index out of range for the class list")
    n_c = np.bincount(y, minlength=k).astype(float)
    priors = (n_c + alpha) / (len(y) + alpha * k)
    ones = np.zeros((k, x.shape[1]))
    for c in range(k):
        rows = x[y == c]
        if len(rows):
            ones[c] = rows.sum(axis=0)
    theta = (ones + alpha) / (n_c[:, None] + 2.0 * alpha)
    priors.setflags(write=False)
    theta.setflags(write=False)
    return NaiveBayesModel(
        classes=classes,
        n_features=int(x.shape[1]),
        alpha=float(alpha),
        priors=priors,
        theta=theta,
    )


# ---------------------------------------------------------------------------
# the packaged signature model


@dataclass
class SignatureModel:
    """A trained classifier plus the vocabulary and window length it expects."""

    vocabulary: Vocabulary
    algorithm: str  # "tree" | "nb"
    window_min: int
    model: Union[DecisionTreeModel, NaiveBayesModel]

    @property
    def classes(self) -> Tuple[FailureClass, ...]:
        return self.model.classes

    def classify_bits(self, bits: np.ndarray) -> ClassDistribution:
        probs = self.model.predict_proba(bits)
        return ClassDistribution({cls: float(p) for cls, p in zip(self.classes, probs)})

    def classify_window(self, anomalies: Iterable[AnomalousKpi]) -> ClassDistribution:
        return self.classify_bits(self.vocabulary.encode(anomalies))

    def to_dict(self) -> dict:
        if self.algorithm == "tree":
            tree: DecisionTreeModel = self.model
            payload = {
                "min_leaf": tree.min_leaf,
                "max_depth": tree.max_depth,
                "root": tree.root.to_dict(),
            }
        elif self.algorithm == "nb":
            nb: NaiveBayesModel = self.model
            payload = {
                "alpha": nb.alpha,
                "priors": [float(p) for p in nb.priors],
                "theta": [[float(t) for t in row] for row in nb.theta],
            }
        else:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        return {
            "kind": SIGNATURE_KIND,
            "schema_version": SIGNATURE_SCHEMA_VERSION,
            "algorithm": self.algorithm,
            "window_min": self.window_min,
            "split_kinds": self.vocabulary.split_kinds,
            "vocabulary": [[kpi.resource, kpi.metric] for kpi in self.vocabulary.kpis],
            "classes": [[cls.fault_type.value, cls.resource] for cls in self.classes],
            "model": payload,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SignatureModel":
        if data.get("kind") != SIGNATURE_KIND:
            raise SchemaVersionError(f"not a signature model: kind={data.get('kind')!r}")
        if data.get("schema_version") != SIGNATURE_SCHEMA_VERSION:
            raise SchemaVersionError(
                f"unsupported signature schema_version {data.get('schema_version')!r}"
            )
        vocab = Vocabulary(
            (KpiId(r, m) for r, m in data["vocabulary"]),
            split_kinds=bool(data["split_kinds"]),
        )
        classes = tuple(FailureClass(FaultType(ft), res) for ft, res in data["classes"])
        algorithm = data["algorithm"]
        payload = data["model"]
        model: Union[DecisionTreeModel, NaiveBayesModel]
        if algorithm == "tree":
            model = DecisionTreeModel(
                classes=classes,
                n_features=vocab.dimension,
                min_leaf=int(payload["min_leaf"]),
                max_depth=payload["max_depth"],
                root=TreeNode.from_dict(payload["root"]),
            )
        elif algorithm == "nb":
            priors = np.asarray(payload["priors"], dtype=float)
            theta = np.asarray(payload["theta"], dtype=float)
            priors.setflags(write=False)
            theta.setflags(write=False)
            model = NaiveBayesModel(
                classes=classes,
                n_features=vocab.dimension,
                alpha=float(payload["alpha"]),
                priors=priors,
                theta=theta,
            )
        else:
            raise SchemaVersionError(f"unknown signature algorithm {algorithm!r}")
        return cls(vocabulary=vocab, algorithm=algorithm, window_min=int(data["window_min"]), model=model)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SignatureModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _encode_dataset(
    samples: Sequence[WindowSample], vocab: Vocabulary
) -> Tuple[np.ndarray, np.ndarray, Tuple[FailureClass, ...]]:
    if not samples:
        raise ValueError("no window samples to train on")
    for s in samples:
        if s.label is None:
            raise ValueError("every training window must carry a label")
    classes = tuple(sorted({s.label for s in samples}))
    index = {cls: i for i, cls in enumerate(classes)}
    x = np.stack([vocab.encode(s.anomalies) for s in samples])
    y = np.asarray([index[s.label] for s in samples], dtype=np.intp)
    return x, y, classes


def train_signature(
    samples: Sequence[WindowSample],
    vocab: Vocabulary,
    algorithm: str = "tree",
    window_min: int = 90,
    *,
    min_leaf: int = DEFAULT_MIN_LEAF,
    max_depth: Optional[int] = None,
    alpha: float = DEFAULT_ALPHA,
) -> SignatureModel:
    """Train a signature classifier from labeled window samples."""
    x, y, classes = _encode_dataset(samples, vocab)
    if algorithm == "tree":
        model = train_tree(x, y, classes, min_leaf=min_leaf, max_depth=max_depth)
    elif algorithm == "nb":
        model = train_nb(x, y, classes, alpha=alpha)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected 'tree' or 'nb'")
    return SignatureModel(vocabulary=vocab, algorithm=algorithm, window_min=window_min, model=model)


# ---------------------------------------------------------------------------
# cross-validation


@dataclass
class CrossValidationResult:
    """Aggregated one-vs-rest counts per class plus the raw fold predictions."""

    per_class: Dict[FailureClass, Contingency]
    predictions: List[Tuple[FailureClass, FailureClass]]  # (truth, predicted)
    fold_sizes: List[int]

    @property
    def n_correct(self) -> int:
        return sum(1 for truth, pred in self.predictions if truth == pred)


def stratified_folds(
    labels: Sequence[FailureClass], k: int, seed: int
) -> List[np.ndarray]:
    """Deterministic stratified k-fold assignment.

    Samples are shuffled by the seed, grouped by class, and dealt to folds
    round-robin with a cursor that carries across classes, so fold sizes
    differ by at most one overall and per class.  Classes with fewer than k
    samples cannot be represented in every fold; they degrade to plain
    round-robin placement and are reported with a warning.
    """
    n = len(labels)
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise ValueError(f"need at least {k} samples for {k}-fold validation")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    by_class: Dict[FailureClass, List[int]] = {}
    for idx in order:
        by_class.setdefault(labels[idx], []).append(int(idx))
    small = sorted(str(cls) for cls, idxs in by_class.items() if len(idxs) < k)
    if small:
        logger.warning(
            "cross-validation: classes with fewer than %d samples fall back to "
            "unstratified assignment: %s",
            k,
            ", ".join(small),
        )
    folds: List[List[int]] = [[] for _ in range(k)]
    cursor = 0
    for cls in sorted(by_class):
        for idx in by_class[cls]:
            folds[cursor].append(idx)
            cursor = (cursor + 1) % k
    return [np.asarray(sorted(fold), dtype=np.intp) for fold in folds]


def cross_validate(
    samples: Sequence[WindowSample],
    vocab: Vocabulary,
    k: int = 10,
    seed: int = 0,
    algorithm: str = "tree",
    *,
    min_leaf: int = DEFAULT_MIN_LEAF,
    max_depth: Optional[int] = None,
    alpha: float = DEFAULT_ALPHA,
) -> CrossValidationResult:
    """Seeded stratified k-fold evaluation of a signature algorithm.

    Per-class one-vs-rest TP/FP/FN/TN counts are aggregated over all folds;
    each held-out sample is predicted by the top class of the distribution.
    """
    x, y, classes = _encode_dataset(samples, vocab)
    labels = [s.label for s in samples]
    folds = stratified_folds(labels, k, seed)
    preds = np.full(len(y), -1, dtype=np.intp)
    all_indices = np.arange(len(y))
    for fold in folds:
        mask = np.ones(len(y), dtype=bool)
        mask[fold] = False
        train_idx = all_indices[mask]
        sub_classes = classes  # keep global class list so indices line up
        if algorithm == "tree":
            model = train_tree(x[train_idx], y[train_idx], sub_classes, min_leaf=min_leaf, max_depth=max_depth)
        elif algorithm == "nb":
            model = train_nb(x[train_idx], y[train_idx], sub_classes, alpha=alpha)
        else:
            raise ValueError(f"unknown algorithm {algorithm!r}; expected 'tree' or 'nb'")
        for idx in fold:
            probs = model.predict_proba(x[idx])
            preds[idx] = int(np.argmax(probs))
    per_class: Dict[FailureClass, Contingency] = {}
    for ci, cls in enumerate(classes):
        tp = int(np.sum((preds == ci) & (y == ci)))
        fp = int(np.sum((preds == ci) & (y != ci)))
        fn = int(np.sum((preds != ci) & (y == ci)))
        tn = int(np.sum((preds != ci) & (y != ci)))
        per_class[cls] = Contingency(tp=tp, fp=fp, fn=fn, tn=tn)
    predictions = [(classes[t], classes[p]) for t, p in zip(y, preds)]
    return CrossValidationResult(
        per_class=per_class,
        predictions=predictions,
        fold_sizes=[len(f) for f in folds],
    )
