import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from entseer import mlpipe as ML


# -- metrics ---------------------------------------------------------------------------


def test_accuracy_examples():
    assert ML.accuracy(["a", "b"], ["a", "b"]) == 1.0
    assert ML.accuracy(["a", "b"], ["b", "a"]) == 0.0
    assert ML.accuracy(["6"] * 49 + ["33"], ["6"] * 50) == 0.98


def test_accuracy_errors():
    with pytest.raises(ValueError):
        ML.accuracy([], [])
    with pytest.raises(ValueError):
        ML.accuracy([1, 2], [1])


@given(st.lists(st.integers(0, 3), min_size=1, max_size=50), st.integers(0, 2**32 - 1))
def test_accuracy_is_a_fraction(labels, seed):
    other = np.random.default_rng(seed).permutation(labels)
    assert 0.0 <= ML.accuracy(labels, other) <= 1.0
    assert ML.accuracy(labels, labels) == 1.0


def test_linear_fit_exact_line():
    x = np.linspace(-3, 5, 17)
    f = ML.linear_fit(x, 2 * x + 1)
    assert abs(f.slope - 2) < 1e-12 and abs(f.intercept - 1) < 1e-12 and abs(f.correlation - 1) < 1e-12


def test_linear_fit_matches_normal_equations(rng):
    x = rng.normal(size=200)
    y = 0.7 * x - 3 + rng.normal(scale=0.5, size=200)
    f = ML.linear_fit(x, y)
    design = np.column_stack([x, np.ones_like(x)])
    slope, intercept = np.linalg.solve(design.T @ design, design.T @ y)
    r = np.corrcoef(x, y)[0, 1]
    assert abs(f.slope - slope) < 1e-10 and abs(f.intercept - intercept) < 1e-10 and abs(f.correlation - r) < 1e-10


@pytest.mark.parametrize("x, y", [([1.0], [2.0]), ([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]), ([1.0, 2.0, 3.0], [4.0, 4.0, 4.0])])
def test_linear_fit_degenerate(x, y):
    with pytest.raises(ML.DegenerateDataError):
        ML.linear_fit(x, y)


# -- tree --------------------------------------------------------------------------------


def brute_best_split(x, y, min_leaf):
    def gini(lab):
        _, c = np.unique(lab, return_counts=True)
        return 1 - np.sum((c / len(lab)) ** 2)

    parent = gini(y)
    best = (0.0, -1, 0.0)
    for f in range(x.shape[1]):
        vals = np.unique(x[:, f])
        for lo, hi in zip(vals[:-1], vals[1:]):
            thr = 0.5 * (lo + hi)
            left = x[:, f] <= thr
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            g = parent - (left.sum() * gini(y[left]) + (~left).sum() * gini(y[~left])) / len(y)
            if g > best[0] + 1e-12:
                best = (g, f, thr)
    return best


@given(seed=st.integers(0, 2**32 - 1), min_leaf=st.integers(1, 4))
def test_best_split_matches_exhaustive_search(seed, min_leaf):
    r = np.random.default_rng(seed)
    x = np.round(r.normal(size=(25, 2)), 1)
    y = r.integers(0, 3, size=25)
    gain, f, thr = ML._best_split(x, y, 3, min_leaf)
    g_ref, f_ref, thr_ref = brute_best_split(x, y, min_leaf)
    assert f == f_ref
    if f >= 0:
        assert abs(gain - g_ref) < 1e-12 and abs(thr - thr_ref) < 1e-12


def test_split_ties_prefer_lower_feature():
    x = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    _, f, thr = ML._best_split(x, np.array([0, 0, 1, 1]), 2, 1)
    assert f == 0 and thr == 0.5


def test_tree_separable_data(rng):
    a = rng.normal(size=(40, 2))
    b = rng.normal(size=(40, 2)) + [20, 0]
    c = rng.normal(size=(40, 2)) + [0, 20]
    pts = np.vstack([a, b, c])
    lab = ["6"] * 40 + ["33"] * 40 + ["222"] * 40
    tree = ML.train_tree(pts, lab)
    assert ML.accuracy(tree.predict(pts), lab) == 1.0
    assert tree.depth() <= 12


def test_tree_single_class_is_constant(rng):
    tree = ML.train_tree(rng.normal(size=(10, 2)), ["15"] * 10)
    assert tree.n_leaves() == 1
    assert set(tree.predict(rng.normal(size=(20, 2)) * 100)) == {"15"}


@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), min_size=1, max_size=30))
def test_tree_prediction_is_total(points):
    r = np.random.default_rng(0)
    train = r.normal(size=(60, 2))
    tree = ML.train_tree(train, np.where(train[:, 0] > 0, "a", "b"), min_leaf=2)
    pred = tree.predict(np.array(points))
    assert len(pred) == len(points) and set(pred) <= {"a", "b"}


def test_tree_respects_depth_and_leaf_limits(rng):
    pts = rng.normal(size=(300, 2))
    lab = rng.choice(["x", "y", "z"], size=300)
    tree = ML.train_tree(pts, lab, max_depth=4, min_leaf=7)
    assert tree.depth() <= 4

    def leaf_sizes(node, rows):
        if node.is_leaf:
            return [len(rows)]
        go = pts[rows, node.feature] <= node.threshold
        return leaf_sizes(node.left, rows[go]) + leaf_sizes(node.right, rows[~go])

    assert min(leaf_sizes(tree.root, np.arange(300))) >= 7


def test_tree_json_round_trip(tmp_path, rng):
    pts = rng.normal(size=(80, 2))
    tree = ML.train_tree(pts, np.where(pts[:, 1] > 0.3, "114", "24"))
    path = tmp_path / "t.json"
    ML.save_json_model(tree, path)
    back = ML.load_json_model(path)
    q = rng.normal(size=(50, 2))
    assert list(back.predict(q)) == list(tree.predict(q))


# -- logistic ------------------------------------------------------------------------------


def test_logistic_separable_clusters(rng):
    a = np.column_stack([rng.normal(-3, 0.3, 50), np.zeros(50)])
    b = np.column_stack([rng.normal(3, 0.3, 50), np.zeros(50)])
    model = ML.train_logistic(np.vstack([a, b]), [False] * 50 + [True] * 50)
    assert ML.accuracy(model.predict(np.vstack([a, b])), [False] * 50 + [True] * 50) == 1.0
    w, c = model.raw_boundary()
    crossing = -c / w[0]
    assert a[:, 0].max() < crossing < b[:, 0].min()
    assert np.all(np.isfinite(model.weights)) and math.isfinite(model.bias)


def test_logistic_converges_on_overlapping_data(rng):
    x = rng.normal(size=(400, 2))
    y = x[:, 0] + 0.5 * x[:, 1] + rng.normal(size=400) > 0
    model = ML.train_logistic(x, y)
    assert model.grad_norm < 1e-6 and model.epochs_run < 2000


@pytest.mark.parametrize("seed", range(10))
def test_logistic_gradient_matches_finite_differences(seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=(50, 2))
    y = (r.random(50) < 0.5).astype(float)
    params = r.normal(size=3) * 2
    _, grad = ML.loss_and_grad(params, x, y, 1e-2)
    h = 1e-6
    fd = np.array([(ML.loss_and_grad(params + h * e, x, y, 1e-2)[0] - ML.loss_and_grad(params - h * e, x, y, 1e-2)[0]) / (2 * h)
                   for e in np.eye(3)])
    assert np.linalg.norm(fd - grad) / np.linalg.norm(grad) < 1e-4


def test_gradient_at_optimum_matches_finite_differences(rng):
    x = rng.normal(size=(200, 2))
    y = x[:, 1] - x[:, 0] + rng.normal(size=200) > 0
    model = ML.train_logistic(x, y)
    xs = (x - model.mean) / model.std
    params = np.append(model.weights, model.bias)
    h = 1e-5
    fd = np.array([(ML.loss_and_grad(params + h * e, xs, y.astype(float), model.l2)[0]
                    - ML.loss_and_grad(params - h * e, xs, y.astype(float), model.l2)[0]) / (2 * h) for e in np.eye(3)])
    _, grad = ML.loss_and_grad(params, xs, y.astype(float), model.l2)
    assert np.all(np.abs(fd - grad) < 1e-8)


@given(scale=st.floats(1e-3, 1e3), seed=st.integers(0, 2**32 - 1))
def test_prediction_invariant_under_positive_rescaling(scale, seed):
    r = np.random.default_rng(seed)
    model = ML.LogisticModel(r.normal(size=2), float(r.normal()))
    scaled = ML.LogisticModel(model.weights * scale, model.bias * scale)
    pts = r.normal(size=(40, 2))
    assert np.array_equal(model.predict(pts), scaled.predict(pts))


def test_logistic_needs_both_classes(rng):
    with pytest.raises(ML.DegenerateDataError):
        ML.train_logistic(rng.normal(size=(10, 2)), [True] * 10)


def test_logistic_json_round_trip(tmp_path, rng):
    x = rng.normal(size=(60, 2))
    model = ML.train_logistic(x, x[:, 0] > 0)
    path = tmp_path / "l.json"
    ML.save_json_model(model, path)
    back = ML.load_json_model(path)
    assert np.array_equal(back.decision_function(x), model.decision_function(x))


# -- purity estimator -------------------------------------------------------------------------


def test_purity_estimate_is_neighbourhood_mean():
    coords = np.array([[float(i), 0.0] for i in range(30)])
    pur = np.linspace(0.1, 1.0, 30)
    est = ML.PurityEstimator(coords, pur, k=3)
    assert abs(ML.estimate_purity(est, [10.1, 0.0]) - pur[[9, 10, 11]].mean()) < 1e-15


def test_maximally_mixed_neighbourhood_gives_inverse_dimension(rng):
    far = rng.normal(size=(20, 2)) * 0.1
    near_pure = rng.normal(size=(40, 2)) * 0.1 + [50, 50]
    pur = np.concatenate([np.full(20, 2.0**-6), rng.uniform(0.5, 1, 40)])
    est = ML.PurityEstimator(np.vstack([far, near_pure]), pur)
    assert abs(ML.estimate_purity(est, far[3]) - 2.0**-6) < 1e-15


@given(seed=st.integers(0, 2**32 - 1))
def test_purity_estimate_within_training_range(seed):
    r = np.random.default_rng(seed)
    pur = r.uniform(1 / 64, 1, 50)
    est = ML.PurityEstimator(r.normal(size=(50, 2)), pur)
    out = ML.estimate_purity(est, r.normal(size=(30, 2)) * 5)
    assert np.all((out >= pur.min() - 1e-15) & (out <= pur.max() + 1e-15))


def test_purity_estimate_permutation_invariant(rng):
    coords = rng.normal(size=(80, 2))
    pur = rng.uniform(size=80)
    q = rng.normal(size=(25, 2))
    perm = rng.permutation(80)
    a = ML.estimate_purity(ML.PurityEstimator(coords, pur), q)
    b = ML.estimate_purity(ML.PurityEstimator(coords[perm], pur[perm]), q)
    assert np.allclose(a, b, atol=1e-15)


def test_purity_estimate_is_lipschitz_in_purities(rng):
    coords = rng.normal(size=(60, 2))
    pur = rng.uniform(size=60)
    bump = rng.uniform(-0.1, 0.1, 60)
    q = rng.normal(size=(20, 2))
    a = ML.estimate_purity(ML.PurityEstimator(coords, pur), q)
    b = ML.estimate_purity(ML.PurityEstimator(coords, pur + bump), q)
    assert np.all(np.abs(a - b) <= np.abs(bump).max() + 1e-15)


def test_purity_estimator_validation(rng):
    with pytest.raises(ValueError):
        ML.PurityEstimator(rng.normal(size=(10, 2)), np.ones(10), k=11)
    with pytest.raises(ValueError):
        ML.PurityEstimator(rng.normal(size=(10, 2)), np.ones(9))


def test_purity_json_round_trip(tmp_path, rng):
    est = ML.PurityEstimator(rng.normal(size=(30, 2)), rng.uniform(size=30), k=5)
    path = tmp_path / "p.json"
    ML.save_json_model(est, path)
    q = rng.normal(size=(4, 2))
    assert np.array_equal(ML.estimate_purity(ML.load_json_model(path), q), ML.estimate_purity(est, q))


def test_unknown_model_kind(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"kind": "forest"}')
    with pytest.raises(ValueError):
        ML.load_json_model(path)


def test_write_predictions(tmp_path):
    path = tmp_path / "p.csv"
    ML.write_predictions(path, [0, 1], ["6", "33"], ["6", "6"])
    assert path.read_text() == "id,true_label,predicted_label\n0,6,6\n1,33,6\n"
