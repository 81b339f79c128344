"""Window encoding, the two classifiers, and cross-validation plumbing."""

import logging
import math

import numpy as np
import pytest

from faultcast.core import (
    NORMAL_CLASS,
    AnomalousKpi,
    AnomalyKind,
    FailureClass,
    FaultType,
    KpiId,
    SchemaVersionError,
    WindowSample,
)
from faultcast.detect import AnomalyEvent
from faultcast.signature import (
    ClassDistribution,
    SignatureModel,
    Vocabulary,
    cross_validate,
    stratified_folds,
    train_nb,
    train_signature,
    train_tree,
    windowize_events,
)

K = [KpiId("Homer", f"m{i}") for i in range(8)]
LOSS_HOMER = FailureClass(FaultType.PACKET_LOSS, "Homer")
LOSS_SPROUT = FailureClass(FaultType.PACKET_LOSS, "Sprout")
HOG_HOMER = FailureClass(FaultType.CPU_HOG, "Homer")


def anomaly(kpi, kind=AnomalyKind.UNIVARIATE, first_seen=0):
    return AnomalousKpi(kpi, kind, first_seen)


def proba(model, fv):
    """class -> probability map from a raw classifier."""
    probs = model.predict_proba(np.asarray(fv, dtype=np.uint8))
    return {cls: float(p) for cls, p in zip(model.classes, probs)}


# ---------------------------------------------------------------------------
# vocabulary and encoding


def test_vocabulary_is_sorted_and_deduplicated():
    vocab = Vocabulary([K[3], K[1], K[3], K[0]])
    assert vocab.kpis == (K[0], K[1], K[3])
    assert vocab.dimension == 3
    with pytest.raises(ValueError):
        Vocabulary([])


def test_encode_matches_membership_oracle():
    vocab = Vocabulary(K)
    rng = np.random.default_rng(31)
    for _ in range(1000):
        chosen = {kpi for kpi in K if rng.random() < 0.4}
        anomalies = frozenset(
            anomaly(kpi, AnomalyKind.UNIVARIATE if rng.random() < 0.5 else AnomalyKind.MULTIVARIATE)
            for kpi in chosen
        )
        bits = vocab.encode(anomalies)
        assert bits.dtype == np.uint8 and bits.shape == (len(K),)
        for i, kpi in enumerate(vocab.kpis):
            assert bits[i] == (1 if kpi in chosen else 0), f"bit {i} wrong"


def test_encode_merges_detector_kinds_by_default():
    vocab = Vocabulary([K[0], K[1]])
    uni = vocab.encode(frozenset([anomaly(K[0], AnomalyKind.UNIVARIATE)]))
    multi = vocab.encode(frozenset([anomaly(K[0], AnomalyKind.MULTIVARIATE)]))
    both = vocab.encode(
        frozenset(
            [anomaly(K[0], AnomalyKind.UNIVARIATE), anomaly(K[0], AnomalyKind.MULTIVARIATE)]
        )
    )
    assert uni.tolist() == multi.tolist() == both.tolist() == [1, 0]


def test_encode_split_kinds_doubles_the_dimension():
    vocab = Vocabulary([K[0], K[1]], split_kinds=True)
    assert vocab.dimension == 4
    uni = vocab.encode(frozenset([anomaly(K[0], AnomalyKind.UNIVARIATE)]))
    multi = vocab.encode(frozenset([anomaly(K[0], AnomalyKind.MULTIVARIATE)]))
    assert uni.tolist() == [1, 0, 0, 0]
    assert multi.tolist() == [0, 1, 0, 0]
    names = [vocab.feature_name(i) for i in range(4)]
    assert len(set(names)) == 4
    assert all("m0" in n for n in names[:2])


def test_encode_ignores_unknown_kpis():
    vocab = Vocabulary([K[0]])
    stranger = KpiId("Sprout", "other")
    bits = vocab.encode(frozenset([anomaly(stranger)]))
    assert bits.tolist() == [0]


# ---------------------------------------------------------------------------
# events -> windows


def test_windowize_membership_boundaries():
    events = [
        AnomalyEvent(0, K[0], AnomalyKind.UNIVARIATE, 4.0),
        AnomalyEvent(300, K[0], AnomalyKind.UNIVARIATE, 5.0),
        AnomalyEvent(600, K[1], AnomalyKind.MULTIVARIATE, 4.0),
    ]
    windows = [(0, 600), (300, 900)]
    samples = windowize_events(events, windows)
    assert len(samples) == 2
    first, second = samples
    # an event exactly on the window start belongs to it; one exactly on the
    # end does not
    assert {(a.kpi, a.kind) for a in first.anomalies} == {(K[0], AnomalyKind.UNIVARIATE)}
    assert first.label is None
    # repeated (kpi, kind) sightings collapse to the earliest one
    k0 = next(a for a in first.anomalies if a.kpi == K[0])
    assert k0.first_seen == 0
    assert {(a.kpi, a.kind) for a in second.anomalies} == {
        (K[0], AnomalyKind.UNIVARIATE),
        (K[1], AnomalyKind.MULTIVARIATE),
    }


def test_windowize_applies_label_fn():
    samples = windowize_events([], [(0, 600)], label_fn=lambda s, e: LOSS_HOMER)
    assert samples[0].label == LOSS_HOMER
    assert samples[0].anomalies == frozenset()


# ---------------------------------------------------------------------------
# class distributions


def test_distribution_top_breaks_ties_toward_the_smaller_class():
    dist = ClassDistribution({LOSS_HOMER: 0.5, NORMAL_CLASS: 0.5})
    # "Normal" sorts before "PacketLoss", so the tie resolves to Normal
    cls, conf = dist.top()
    assert cls == NORMAL_CLASS and conf == 0.5
    dist = ClassDistribution({LOSS_HOMER: 0.5, LOSS_SPROUT: 0.5})
    assert dist.top()[0] == LOSS_HOMER
    assert dist[HOG_HOMER] == 0.0


# ---------------------------------------------------------------------------
# naive Bayes: hand-computed fixtures


def test_nb_posterior_matches_bayes_rule_exactly():
    # two features, two samples per class; every quantity is a dyadic
    # rational, so float arithmetic is exact and == is legitimate
    x = np.array([[1, 0], [1, 1], [0, 0], [0, 1]], dtype=np.uint8)
    y = np.array([1, 1, 0, 0])  # index into classes below
    classes = (NORMAL_CLASS, LOSS_HOMER)
    model = train_nb(x, y, classes)
    # smoothed estimates: priors (2+1)/(4+2) each, theta_loss = (3/4, 1/2),
    # theta_normal = (1/4, 1/2)
    dist = proba(model, [1, 0])
    # posterior for the loss class: (1/2 * 3/4 * 1/2) over the same plus
    # (1/2 * 1/4 * 1/2) -> (3/16) / (4/16)
    assert dist[LOSS_HOMER] == 0.75
    assert dist[NORMAL_CLASS] == 0.25


def test_nb_smoothed_priors():
    x = np.zeros((4, 2), dtype=np.uint8)
    y = np.array([1, 1, 1, 0])
    classes = (NORMAL_CLASS, LOSS_HOMER)
    model = train_nb(x, y, classes)
    assert model.priors[1] == pytest.approx(4 / 6)
    assert model.priors[0] == pytest.approx(2 / 6)


def test_nb_uninformative_features_return_the_priors():
    # balanced classes with identical feature rows: the likelihood terms
    # cancel and the posterior equals the (smoothed) prior
    x = np.tile(np.array([1, 0, 1], dtype=np.uint8), (4, 1))
    y = np.array([1, 1, 0, 0])
    model = train_nb(x, y, (NORMAL_CLASS, LOSS_HOMER))
    for fv in ([1, 0, 1], [0, 0, 0], [1, 1, 1]):
        dist = proba(model, fv)
        assert dist[LOSS_HOMER] == pytest.approx(0.5)
        assert dist[NORMAL_CLASS] == pytest.approx(0.5)


def test_nb_is_invariant_to_sample_order():
    rng = np.random.default_rng(13)
    x = (rng.random((40, 6)) < 0.3).astype(np.uint8)
    y = np.array([1 if i % 3 else 0 for i in range(40)])
    classes = (NORMAL_CLASS, LOSS_HOMER)
    model = train_nb(x, y, classes)
    perm = rng.permutation(40)
    shuffled = train_nb(x[perm], y[perm], classes)
    assert np.array_equal(model.priors, shuffled.priors)
    assert np.array_equal(model.theta, shuffled.theta)


def test_nb_survives_many_features_without_underflow():
    # 800 features would underflow a double if the per-feature probabilities
    # were multiplied naively without rescaling
    rng = np.random.default_rng(8)
    x = (rng.random((20, 800)) < 0.5).astype(np.uint8)
    y = np.array([0] * 10 + [1] * 10)
    model = train_nb(x, y, (NORMAL_CLASS, LOSS_HOMER))
    dist = proba(model, x[0])
    assert dist[NORMAL_CLASS] + dist[LOSS_HOMER] == pytest.approx(1.0, abs=1e-9)
    assert dist[NORMAL_CLASS] > 0.0


def test_nb_input_gates():
    x = np.array([[1]], dtype=np.uint8)
    with pytest.raises(ValueError):
        train_nb(np.empty((0, 2), dtype=np.uint8), np.array([], dtype=int), (NORMAL_CLASS,))
    with pytest.raises(ValueError):
        train_nb(x, np.array([0]), (NORMAL_CLASS,), alpha=0.0)


# ---------------------------------------------------------------------------
# decision tree: fixtures with known shape


def test_tree_single_leaf_distribution():
    # no informative feature: a single leaf carrying 4 windows of which 3
    # agree -> confidence 3/4, remainder to the minority class
    x = np.ones((4, 3), dtype=np.uint8)
    y = np.array([1, 1, 1, 0])
    model = train_tree(x, y, (NORMAL_CLASS, LOSS_HOMER))
    assert model.root.is_leaf
    assert model.root.total == 4 and model.root.correct == 3
    dist = proba(model, [1, 1, 1])
    assert dist[LOSS_HOMER] == pytest.approx(0.75)
    assert dist[NORMAL_CLASS] == pytest.approx(0.25)


def test_tree_separable_fixture_yields_one_split():
    # feature 1 alone separates the classes; features 0 and 2 are constant
    x = np.array([[1, 1, 0], [1, 1, 0], [1, 0, 0], [1, 0, 0]], dtype=np.uint8)
    y = np.array([1, 1, 0, 0])
    model = train_tree(x, y, (NORMAL_CLASS, LOSS_HOMER), min_leaf=1)
    assert model.depth() == 1
    assert model.root.feature == 1
    for leaf in (model.root.nominal, model.root.anomalous):
        assert leaf.is_leaf
        assert (leaf.total, leaf.correct) == (2, 2)
    assert proba(model, x[0])[LOSS_HOMER] == 1.0
    assert proba(model, x[3])[NORMAL_CLASS] == 1.0


def entropy(labels):
    counts = {}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    total = len(labels)
    return -sum(c / total * math.log2(c / total) for c in counts.values())


def best_split_oracle(x, y):
    """(feature, gain) the root must use: highest information gain, ties to
    the lowest feature index."""
    base = entropy(y)
    best = (None, 0.0)
    for j in range(x.shape[1]):
        on = [y[i] for i in range(len(y)) if x[i, j]]
        off = [y[i] for i in range(len(y)) if not x[i, j]]
        if not on or not off:
            continue
        gain = base - (len(on) / len(y)) * entropy(on) - (len(off) / len(y)) * entropy(off)
        if gain > best[1] + 1e-12:
            best = (j, gain)
    return best


def test_tree_root_matches_gain_oracle():
    rng = np.random.default_rng(23)
    classes = (NORMAL_CLASS, LOSS_HOMER, HOG_HOMER)
    for trial in range(30):
        x = (rng.random((60, 7)) < 0.5).astype(np.uint8)
        y = rng.integers(0, 3, size=60)
        expected, gain = best_split_oracle(x, y.tolist())
        model = train_tree(x, y, classes, min_leaf=1)
        if expected is None or gain <= 1e-12:
            assert model.root.is_leaf, f"trial {trial}: split without gain"
        else:
            assert model.root.feature == expected, f"trial {trial}"


def test_tree_tie_break_prefers_the_lower_feature():
    # columns 1 and 3 are identical copies of the separating feature
    x = np.array(
        [[0, 1, 0, 1], [0, 1, 1, 1], [0, 0, 0, 0], [0, 0, 1, 0]], dtype=np.uint8
    )
    y = np.array([1, 1, 0, 0])
    model = train_tree(x, y, (NORMAL_CLASS, LOSS_HOMER), min_leaf=1)
    assert model.root.feature == 1


def collect_leaves(model):
    leaves = []

    def walk(node):
        if node.is_leaf:
            leaves.append(node)
        else:
            walk(node.nominal)
            walk(node.anomalous)

    walk(model.root)
    return leaves


def test_tree_respects_min_leaf():
    rng = np.random.default_rng(5)
    x = (rng.random((50, 6)) < 0.5).astype(np.uint8)
    y = rng.integers(0, 2, size=50)
    model = train_tree(x, y, (NORMAL_CLASS, LOSS_HOMER), min_leaf=5)
    assert all(leaf.total >= 5 for leaf in collect_leaves(model))


def test_tree_max_depth_caps_growth():
    rng = np.random.default_rng(6)
    x = (rng.random((80, 8)) < 0.5).astype(np.uint8)
    y = rng.integers(0, 2, size=80)
    model = train_tree(x, y, (NORMAL_CLASS, LOSS_HOMER), min_leaf=1, max_depth=2)
    assert model.depth() <= 2


def test_tree_distributions_sum_to_one():
    rng = np.random.default_rng(40)
    classes = (NORMAL_CLASS, LOSS_HOMER, LOSS_SPROUT, HOG_HOMER)
    x = (rng.random((120, 9)) < 0.4).astype(np.uint8)
    y = rng.integers(0, 4, size=120)
    model = train_tree(x, y, classes)
    for _ in range(100):
        fv = (rng.random(9) < 0.5).astype(np.uint8)
        total = float(model.predict_proba(fv).sum())
        assert total == pytest.approx(1.0, abs=1e-9)


def test_tree_input_gates():
    with pytest.raises(ValueError):
        train_tree(np.empty((0, 3), dtype=np.uint8), np.array([], dtype=int), (NORMAL_CLASS,))
    with pytest.raises(ValueError):
        train_tree(np.array([[1]], dtype=np.uint8), np.array([0]), (NORMAL_CLASS,), min_leaf=0)


# ---------------------------------------------------------------------------
# the packaged signature model


def window_fixture():
    """Two fault locations with disjoint marker KPIs, plus quiet windows."""
    k_homer, k_sprout = KpiId("Homer", "TcpRetransPerSec"), KpiId("Sprout", "TcpRetransPerSec")
    other = KpiId("Bono", "CpuIdlePct")
    vocab = Vocabulary([k_homer, k_sprout, other])
    samples = []
    for i in range(6):
        samples.append(
            WindowSample(
                i * 300,
                i * 300 + 5400,
                frozenset([anomaly(k_homer, first_seen=i * 300)]),
                label=LOSS_HOMER,
            )
        )
        samples.append(
            WindowSample(
                i * 300,
                i * 300 + 5400,
                frozenset([anomaly(k_sprout, first_seen=i * 300)]),
                label=LOSS_SPROUT,
            )
        )
        samples.append(WindowSample(i * 300, i * 300 + 5400, frozenset(), label=NORMAL_CLASS))
    return vocab, samples


def test_signature_model_separates_fault_locations():
    vocab, samples = window_fixture()
    model = train_signature(samples, vocab, algorithm="tree", window_min=90)
    # one level per location marker
    assert model.model.depth() == 2
    assert model.classify_window(samples[0].anomalies).top()[0] == LOSS_HOMER
    assert model.classify_window(samples[1].anomalies).top()[0] == LOSS_SPROUT
    assert model.classify_window(frozenset()).top()[0] == NORMAL_CLASS


def test_signature_round_trip_is_byte_stable(tmp_path):
    vocab, samples = window_fixture()
    for algorithm in ("tree", "nb"):
        model = train_signature(samples, vocab, algorithm=algorithm, window_min=90)
        path = tmp_path / f"{algorithm}.json"
        model.save(path)
        again = SignatureModel.load(path)
        assert again.to_dict() == model.to_dict()
        second = tmp_path / f"{algorithm}-again.json"
        again.save(second)
        assert second.read_bytes() == path.read_bytes()
        # behaviour survives the round trip
        for sample in samples[:3]:
            assert (
                again.classify_window(sample.anomalies).top()
                == model.classify_window(sample.anomalies).top()
            )


def test_signature_rejects_wrong_payload(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"kind": "something-else", "schema_version": 1}')
    with pytest.raises(SchemaVersionError):
        SignatureModel.load(path)
    vocab, samples = window_fixture()
    with pytest.raises(ValueError):
        train_signature(samples, vocab, algorithm="forest")
    unlabeled = [WindowSample(0, 600, frozenset())]
    with pytest.raises(ValueError):
        train_signature(unlabeled, vocab)


# ---------------------------------------------------------------------------
# cross-validation


def test_stratified_folds_partition_the_dataset():
    rng = np.random.default_rng(77)
    labels = [LOSS_HOMER] * 23 + [NORMAL_CLASS] * 41 + [LOSS_SPROUT] * 16
    rng.shuffle(labels)
    folds = stratified_folds(labels, 10, seed=4)
    assert len(folds) == 10
    flat = sorted(i for fold in folds for i in fold)
    assert flat == list(range(80)), "folds must partition the index set"
    sizes = sorted(len(fold) for fold in folds)
    assert sizes[-1] - sizes[0] <= 1
    # same seed, same folds
    again = stratified_folds(labels, 10, seed=4)
    assert all(np.array_equal(a, b) for a, b in zip(folds, again))
    other = stratified_folds(labels, 10, seed=5)
    assert not all(np.array_equal(a, b) for a, b in zip(folds, other))


def test_stratified_folds_spread_every_class():
    labels = [LOSS_HOMER] * 50 + [NORMAL_CLASS] * 50
    folds = stratified_folds(labels, 10, seed=0)
    for fold in folds:
        fold_labels = {labels[i] for i in fold}
        assert fold_labels == {LOSS_HOMER, NORMAL_CLASS}


def test_stratified_folds_warn_on_rare_classes(caplog):
    labels = [LOSS_HOMER] * 30 + [NORMAL_CLASS] * 3
    with caplog.at_level(logging.WARNING):
        folds = stratified_folds(labels, 10, seed=1)
    assert sorted(i for fold in folds for i in fold) == list(range(33))
    assert "unstratified" in caplog.text


def test_stratified_folds_input_gates():
    labels = [NORMAL_CLASS] * 5
    with pytest.raises(ValueError):
        stratified_folds(labels, 1, seed=0)
    with pytest.raises(ValueError):
        stratified_folds(labels, 6, seed=0)


def test_cross_validation_on_separable_data_is_perfect():
    vocab, samples = window_fixture()
    for algorithm in ("tree", "nb"):
        cv = cross_validate(samples, vocab, k=3, seed=9, algorithm=algorithm)
        assert cv.n_correct == len(samples)
        assert sum(cv.fold_sizes) == len(samples)
        for cls, table in cv.per_class.items():
            assert table.fp == 0 and table.fn == 0, f"{algorithm} confused {cls.label()}"
        assert all(truth == pred for truth, pred in cv.predictions)
