import numpy as np
import pytest

from impactfall.errors import DataError, NotFittedError
from impactfall.synth import oracle_greedy_tree, oracle_split
from impactfall.trees import (
    DecisionTree, GradientBoosting, RandomForest, TreeArrays, best_split, gini, grow_tree, sigmoid,
)


def leaf_tree(counts):
    """A one-node tree whose leaf holds the given (negatives, positives) counts."""
    n0, n1 = counts
    n = n0 + n1
    return TreeArrays(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                      np.array([n1 / n]), np.array([n]), np.array([0.0]))


def test_gini_examples():
    assert gini([10, 0]) == 0.0
    assert gini([5, 5]) == 0.5
    assert gini([7, 3]) == pytest.approx(0.42)
    with pytest.raises(DataError):
        gini([0, 0])


def test_best_split_examples():
    f, thr, gain = best_split([[1], [2], [3], [4]], [0, 0, 1, 1])
    assert (f, thr) == (0, 2.5)
    assert gain == pytest.approx(0.5)
    assert best_split([[1], [2], [3]], [1, 1, 1]) is None
    assert best_split([[1, 1], [1, 1]], [0, 1]) is None


def test_best_split_tie_goes_to_lowest_feature_then_threshold():
    X = [[1, 1], [2, 2], [3, 3], [4, 4]]
    assert best_split(X, [0, 0, 1, 1])[:2] == (0, 2.5)
    assert best_split(X, [0, 0, 1, 1], candidate_features={1})[:2] == (1, 2.5)
    # symmetric labels: thresholds 1.5 and 3.5 give equal gain
    f, thr, gain = best_split([[1], [2], [3], [4]], [1, 0, 0, 1])
    assert thr == 1.5 and gain == pytest.approx(1 / 6)


def test_fit_tree_separable_depth_one():
    t = DecisionTree().fit([[0.0], [1.0], [2.0], [3.0]], [0, 0, 1, 1])
    assert t.tree_.depth() == 1
    assert t.predict([[0.0], [1.0], [2.0], [3.0]]).tolist() == [0, 0, 1, 1]


def test_fit_tree_pure_labels_single_leaf():
    t = DecisionTree().fit(np.random.default_rng(0).normal(size=(6, 2)), [1] * 6)
    assert len(t.tree_.feature) == 1


def test_fit_tree_eight_sample_fixture_matches_oracle():
    X = np.array([[0, 1], [1, 1], [2, 0], [3, 0], [0, 3], [1, 2], [3, 3], [2, 2]], dtype=float)
    y = np.array([0, 0, 1, 1, 1, 0, 1, 0])
    t = DecisionTree().fit(X, y)
    queries = np.random.default_rng(1).uniform(-1, 4, size=(50, 2))
    assert t.predict(queries).tolist() == oracle_greedy_tree(X, y, queries)
    assert t.predict(X).tolist() == y.tolist()


def test_every_split_decreases_impurity():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(60, 3))
    y = (X[:, 0] + 0.3 * rng.normal(size=60) > 0).astype(int)
    tree = DecisionTree().fit(X, y).tree_
    for i in np.flatnonzero(tree.feature >= 0):
        l, r = tree.left[i], tree.right[i]
        child = (tree.n_samples[l] * tree.impurity[l] + tree.n_samples[r] * tree.impurity[r]) / tree.n_samples[i]
        assert child < tree.impurity[i]


def test_leaf_scores_and_tie_rule():
    t = DecisionTree()
    t.n_features_ = 1
    for counts, score, label in [((3, 1), 0.25, 0), ((0, 4), 1.0, 1), ((2, 2), 0.5, 0)]:
        t.tree_ = leaf_tree(counts)
        assert t.decision_score([[0.0]])[0] == score
        assert t.predict([[0.0]])[0] == label


def test_width_mismatch_and_unfitted():
    t = DecisionTree()
    with pytest.raises(NotFittedError):
        t.predict([[1.0]])
    t.fit([[0.0], [1.0]], [0, 1])
    with pytest.raises(DataError):
        t.predict([[1.0, 2.0]])
    with pytest.raises(DataError):
        DecisionTree().fit(np.empty((0, 1)), [])


def test_forest_single_tree_full_sample_equals_tree_on_sqrt_candidates():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 4))
    y = (X[:, 1] > 0).astype(int)
    rf = RandomForest(n_estimators=1, bootstrap=False, seed=5).fit(X, y)
    ref = grow_tree(X, y.astype(float), max_features=2, rng=np.random.default_rng(5))
    assert rf.trees_[0].to_dict() == ref.to_dict()


def test_forest_determinism_and_training_accuracy():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(80, 3))
    y = (X[:, 0] > 0).astype(int)
    a = RandomForest(n_estimators=100, seed=3).fit(X, y)
    b = RandomForest(n_estimators=100, seed=3).fit(X, y)
    np.testing.assert_array_equal(a.decision_score(X), b.decision_score(X))
    assert np.mean(a.predict(X) == y) == 1.0


def test_forest_order_independent():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 3))
    y = (X[:, 2] > 0).astype(int)
    rf = RandomForest(n_estimators=7, seed=0).fit(X, y)
    solo = [rf._fit_one(X, y.astype(float), t)[0].to_dict() for t in reversed(range(7))]
    assert solo[::-1] == [t.to_dict() for t in rf.trees_]


def test_forest_importances():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 1))
    y = (X[:, 0] > 0).astype(int)
    assert RandomForest(n_estimators=5).fit(X, y).feature_importances().tolist() == [1.0]
    for seed in range(10):
        r = np.random.default_rng(seed)
        y = r.integers(0, 2, size=60)
        X = np.column_stack([y.astype(float), r.normal(size=60)])
        imp = RandomForest(n_estimators=20, seed=seed).fit(X, y).feature_importances()
        assert imp[0] > imp[1]
        assert imp.sum() == pytest.approx(1.0, abs=1e-9)


def test_forest_importance_zero_for_unused_feature():
    rng = np.random.default_rng(4)
    y = rng.integers(0, 2, size=40)
    X = np.column_stack([y.astype(float), np.zeros(40)])
    imp = RandomForest(n_estimators=10, seed=0).fit(X, y).feature_importances()
    assert imp[1] == 0.0


def test_forest_all_zero_importances_uniform():
    X = np.arange(6.0).reshape(-1, 1)
    rf = RandomForest(n_estimators=3).fit(np.column_stack([X, X]), [1] * 6)
    assert rf.feature_importances().tolist() == [0.5, 0.5]


def hand_oob(rf, X, y):
    wrong = seen = 0
    for i in range(len(X)):
        votes = [int(t.predict_value(X[i:i + 1])[0] > 0.5) for t, m in zip(rf.trees_, rf.in_bag_) if not m[i]]
        if not votes:
            continue
        seen += 1
        wrong += int((1 if sum(votes) * 2 > len(votes) else 0) != y[i])
    return wrong / seen


@pytest.mark.parametrize("seed", range(5))
def test_oob_three_tree_hand_count(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(15, 2))
    y = (X[:, 0] + 0.5 * rng.normal(size=15) > 0).astype(int)
    rf = RandomForest(n_estimators=3, seed=seed).fit(X, y)
    assert rf.oob_error(X, y) == hand_oob(rf, X, y)


def test_oob_errors_and_perfect():
    X = np.arange(20.0).reshape(-1, 1)
    y = (X[:, 0] >= 10).astype(int)
    rf = RandomForest(n_estimators=50).fit(X, y)
    assert rf.oob_error(X, y) <= 0.1
    no_bag = RandomForest(n_estimators=2, bootstrap=False).fit(X, y)
    with pytest.raises(DataError):
        no_bag.oob_error(X, y)


def test_gboost_zero_estimators_base_rate():
    X = np.arange(8.0).reshape(-1, 1)
    gb = GradientBoosting(n_estimators=0).fit(X, [0, 0, 0, 0, 1, 1, 1, 1])
    np.testing.assert_allclose(gb.decision_score(X), 0.5)
    assert gb.predict(X).tolist() == [0] * 8
    gb = GradientBoosting(n_estimators=0).fit(X, [0, 0, 0, 0, 0, 0, 1, 1])
    np.testing.assert_allclose(gb.decision_score(X), 0.25)


def test_gboost_two_stage_hand_accumulation():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    gb = GradientBoosting(n_estimators=2, learning_rate=0.1, max_depth=1).fit(X, y)
    raw = np.zeros(4)
    for _ in range(2):
        p = sigmoid(raw)
        r = y - p
        h = p * (1 - p)
        left = X[:, 0] <= 1.5
        step = np.where(left, r[left].sum() / h[left].sum(), r[~left].sum() / h[~left].sum())
        raw = raw + 0.1 * step
    np.testing.assert_allclose(gb.raw_score(X), raw, atol=1e-12)
    np.testing.assert_allclose(gb.decision_score(X), sigmoid(raw), atol=1e-12)


def test_gboost_separable_training_accuracy_and_monotone():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(100, 3))
    y = (X[:, 0] > 0).astype(int)
    gb = GradientBoosting().fit(X, y)
    assert np.mean(gb.predict(X) == y) == 1.0
    raw, score = gb.raw_score(X), gb.decision_score(X)
    order = np.argsort(raw)
    assert np.all(np.diff(score[order]) >= 0)
    with pytest.raises(DataError):
        GradientBoosting().fit(X, np.ones(100))


def test_oracle_split_matches_best_split():
    rng = np.random.default_rng(9)
    for _ in range(30):
        X = rng.integers(0, 4, size=(10, 3)).astype(float)
        y = rng.integers(0, 2, size=10)
        got = best_split(X, y)
        want = oracle_split(X.tolist(), y.tolist())
        assert (got[:2] if got else None) == want
