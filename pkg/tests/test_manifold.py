import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from entseer import manifold as M
from entseer.manifold import UmapParams

FAST = dict(n_epochs=200, seed=3)


def blobs(rng, n_per=60, dim=8, sep=12.0):
    a = rng.normal(size=(n_per, dim))
    b = rng.normal(size=(n_per, dim)) + sep / np.sqrt(dim)
    return np.vstack([a, b]), np.repeat([0, 1], n_per)


@pytest.fixture(scope="module")
def blob_model():
    X, y = blobs(np.random.default_rng(0))
    return M.fit(X, UmapParams(n_neighbors=10, **FAST)), X, y


# -- neighbours ------------------------------------------------------------------------


def test_knn_matches_exhaustive_oracle(rng):
    X = rng.normal(size=(100, 5))
    idx, dist = M.knn_graph(X, 7)
    for i in range(100):
        d = [(np.linalg.norm(X[i] - X[j]), j) for j in range(100) if j != i]
        d.sort()
        assert list(idx[i]) == [j for _, j in d[:7]]
        assert np.allclose(dist[i], [v for v, _ in d[:7]])


def test_knn_ties_go_to_lower_index():
    X = np.array([[0.0], [1.0], [-1.0], [2.0], [-2.0]])
    idx, dist = M.knn_graph(X, 2)
    assert list(idx[0]) == [1, 2]
    assert list(idx[3]) == [1, 0]


def test_equidistant_collinear_neighbour_is_lower_index():
    idx, _ = M.knn_graph(np.array([[0.0], [1.0], [2.0]]), 1)
    assert idx[1, 0] == 0


def test_knn_with_duplicates_excludes_only_self():
    X = np.zeros((4, 2))
    idx, dist = M.knn_graph(X, 3)
    assert list(idx[0]) == [1, 2, 3] and list(idx[2]) == [0, 1, 3]
    assert np.all(dist == 0)


def test_knn_rejects_k_too_large(rng):
    with pytest.raises(ValueError):
        M.knn_graph(rng.normal(size=(5, 2)), 5)


def test_knn_query_chunking_is_invisible(rng):
    X = rng.normal(size=(50, 3))
    a = M.knn_query(X[:20], X, 4, chunk=3)
    b = M.knn_query(X[:20], X, 4)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


# -- fuzzy graph --------------------------------------------------------------------------


@given(seed=st.integers(0, 2**32 - 1), k=st.integers(3, 20))
def test_bandwidth_solves_target_sum(seed, k):
    r = np.random.default_rng(seed)
    X = r.normal(size=(40, 4)) * r.uniform(0.01, 100)
    _, dist = M.knn_graph(X, k)
    rho, sigma = M.smooth_knn(dist, k)
    sums = M.membership(dist, rho, sigma).sum(axis=1)
    assert np.all(np.abs(sums - np.log2(k)) < 1e-4)


def test_nearest_neighbour_has_unit_membership(rng):
    X = rng.normal(size=(30, 3))
    idx, dist = M.knn_graph(X, 5)
    g = M.fuzzy_weights(idx, dist)
    assert np.allclose(M.membership(dist, g.rho, g.sigma)[:, 0], 1.0)
    assert np.allclose([g.weights[i, idx[i, 0]] for i in range(30)], 1.0)


def test_fuzzy_union_is_symmetric_and_matches_formula(rng):
    X = rng.normal(size=(40, 3))
    idx, dist = M.knn_graph(X, 6)
    g = M.fuzzy_weights(idx, dist)
    w = g.weights.toarray()
    assert np.allclose(w, w.T, atol=0)
    a = np.zeros((40, 40))
    mem = M.membership(dist, g.rho, g.sigma)
    for i in range(40):
        a[i, idx[i]] = mem[i]
    assert np.allclose(w, a + a.T - a * a.T, atol=1e-14)
    assert np.all((g.weights.data > 0) & (g.weights.data <= 1))
    assert np.all(np.diag(w) == 0)


def test_unit_membership_absorbs_in_union():
    # point 2 is point 3's nearest neighbour (weight 1) but 3 is not among 2's neighbours
    X = np.array([[0.0], [0.9], [1.0], [5.0]])
    idx, dist = M.knn_graph(X, 2)
    assert 3 not in idx[2]
    g = M.fuzzy_weights(idx, dist)
    assert g.weights[3, 2] == 1.0 and g.weights[2, 3] == 1.0


# -- curve fit ------------------------------------------------------------------------------


def ab_oracle(min_dist):
    d = np.linspace(0, 3, 300)
    target = M.target_curve(d, min_dist)

    def loss(t):
        a, b = np.exp(t)
        return np.sum((1 / (1 + a * d ** (2 * b)) - target) ** 2)

    res = minimize(loss, [0.0, 0.0], method="Nelder-Mead", options=dict(xatol=1e-10, fatol=1e-14, maxiter=5000))
    return np.exp(res.x)


@pytest.mark.parametrize("min_dist", [0.05, 0.1, 0.3, 0.6, 0.9])
def test_fit_ab_matches_independent_minimizer(min_dist):
    a, b = M.fit_ab(min_dist)
    ra, rb = ab_oracle(min_dist)
    assert abs(a - ra) < 0.15 and abs(b - rb) < 0.15


def test_fit_ab_reference_value():
    a, b = M.fit_ab(0.1)
    assert abs(a - 1.577) < 0.01 and abs(b - 0.895) < 0.01


@pytest.mark.parametrize("min_dist", [0.1, 0.3, 0.6])
def test_fitted_curve_tracks_target(min_dist):
    a, b = M.fit_ab(min_dist)
    d = np.linspace(0, 3, 301)
    assert abs(M._curve(0.0, a, b) - 1.0) < 0.05
    assert np.max(np.abs(M._curve(d, a, b) - M.target_curve(d, min_dist))) < 0.1


def test_fit_ab_a_decreases_with_min_dist():
    a_vals = [M.fit_ab(m)[0] for m in (0.05, 0.1, 0.3, 0.6, 0.9)]
    assert all(y < x for x, y in zip(a_vals, a_vals[1:]))


def test_fit_ab_rejects_non_positive():
    with pytest.raises(ValueError):
        M.fit_ab(0.0)


# -- layout -----------------------------------------------------------------------------------


def test_epochs_per_sample_scales_inverse_to_weight():
    eps = M.epochs_per_sample(np.array([1.0, 0.5, 0.25]), 100)
    assert np.allclose(eps, [1, 2, 4])


def test_two_blobs_separate(blob_model):
    model, _, y = blob_model
    c = model.coords
    c0, c1 = c[y == 0], c[y == 1]
    gap = np.linalg.norm(c0.mean(0) - c1.mean(0))
    spread = max(np.linalg.norm(c0 - c0.mean(0), axis=1).max(), np.linalg.norm(c1 - c1.mean(0), axis=1).max())
    assert gap > spread


def test_optimization_lowers_cross_entropy(blob_model):
    model, _, _ = blob_model
    init, _ = M.initial_layout(model.graph, model.params)
    before = M.cross_entropy(model.graph, init, model.a, model.b)
    after = M.cross_entropy(model.graph, model.coords, model.a, model.b)
    assert after < before


def test_fit_is_deterministic(blob_model):
    model, X, _ = blob_model
    again = M.fit(X, model.params)
    assert np.array_equal(model.coords, again.coords)


def test_seed_changes_layout(blob_model):
    model, X, _ = blob_model
    other = M.fit(X, UmapParams(n_neighbors=10, n_epochs=200, seed=4))
    assert not np.array_equal(model.coords, other.coords)


def test_duplicated_cloud_stays_finite(rng):
    X = np.vstack([np.zeros((30, 4)), rng.normal(size=(30, 4))])
    model = M.fit(X, UmapParams(n_neighbors=8, **FAST))
    assert np.all(np.isfinite(model.coords))
    assert np.all(np.isfinite(M.transform(model, X[:3])))


def test_random_fallback_when_spectral_fails(rng):
    # three disconnected cliques defeat the single-component spectral start
    X = np.vstack([rng.normal(size=(10, 2)) * 0.01 + c for c in ([0, 0], [100, 0], [0, 100])])
    idx, dist = M.knn_graph(X, 4)
    g = M.fuzzy_weights(idx, dist)
    coords, how = M.initial_layout(g, UmapParams(n_neighbors=4))
    assert coords.shape == (30, 2) and np.all(np.isfinite(coords))
    if how == "random":
        assert np.all(np.abs(coords) <= 10)


def test_params_validation():
    for bad in (dict(n_neighbors=1), dict(min_dist=0), dict(n_epochs=0), dict(embedding_dim=3)):
        with pytest.raises(ValueError):
            UmapParams(**bad)


# -- transform ---------------------------------------------------------------------------------


def test_transform_of_training_points_lands_near_fit():
    r = np.random.default_rng(0)
    frame = np.linalg.qr(r.normal(size=(8, 8)))[0][:, :2]
    X = r.uniform(0, 10, size=(150, 2)) @ frame.T
    model = M.fit(X, UmapParams(n_neighbors=10, **FAST))
    moved = np.linalg.norm(M.transform(model, X) - model.coords, axis=1)
    assert np.median(moved) < 0.5


def test_transform_equal_inputs_equal_outputs(blob_model):
    model, X, _ = blob_model
    out = M.transform(model, np.vstack([X[5], X[70], X[5]]))
    assert np.array_equal(out[0], out[2])
    assert np.array_equal(M.transform(model, X[5]), out[0])


def test_transform_places_new_points_in_their_blob(blob_model):
    model, _, y = blob_model
    Xn, yn = blobs(np.random.default_rng(9), n_per=20)
    out = M.transform(model, Xn)
    cents = np.array([model.coords[y == c].mean(0) for c in (0, 1)])
    pred = np.argmin(np.linalg.norm(out[:, None] - cents[None], axis=2), axis=1)
    assert np.mean(pred == yn) >= 0.95


def test_transform_does_not_move_training_layout(blob_model):
    model, X, _ = blob_model
    before = model.coords.copy()
    M.transform(model, X[:10] + 0.3)
    assert np.array_equal(before, model.coords)


def test_save_load_round_trip(tmp_path, blob_model):
    model, X, _ = blob_model
    path = tmp_path / "m.npz"
    M.save_model(model, path)
    back = M.load_model(path)
    assert np.array_equal(back.coords, model.coords) and back.params == model.params
    assert np.array_equal(M.transform(back, X[:7]), M.transform(model, X[:7]))


def test_load_rejects_foreign_npz(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, format=np.array("something-else"))
    with pytest.raises(ValueError):
        M.load_model(path)
