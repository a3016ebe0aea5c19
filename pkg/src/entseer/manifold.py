"""Two-dimensional UMAP written from the ground up.

Pipeline: exact Euclidean kNN graph -> per-point smooth-kNN bandwidths ->
fuzzy union of the directed memberships -> spectral initial layout ->
stochastic-gradient minimisation of the fuzzy cross-entropy with negative
sampling.  New points are placed against the frozen training layout.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numba
import numpy as np
import scipy.sparse
from scipy.optimize import curve_fit

from .qcore import NumericError

MODEL_FORMAT = "entseer-umap-v1"
SIGMA_MIN, SIGMA_MAX = 1e-12, 1e12
BANDWIDTH_TOL = 1e-5
GRAD_CLIP = 4.0


@dataclass
class UmapParams:
    n_neighbors: int = 15
    min_dist: float = 0.1
    n_epochs: int = 500
    negative_sample_rate: int = 5
    learning_rate: float = 1.0
    embedding_dim: int = 2
    seed: int = 0
    transform_epochs: int = 30

    def __post_init__(self):
        if self.n_neighbors < 2:
            raise ValueError("n_neighbors must be >= 2")
        if self.min_dist <= 0:
            raise ValueError("min_dist must be > 0")
        if self.n_epochs < 1:
            raise ValueError("n_epochs must be >= 1")
        if self.embedding_dim != 2:
            raise ValueError("only two-dimensional embeddings are supported")


# ---------------------------------------------------------------------------
# Nearest neighbours
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _sq_dists(q, x):
    out = np.empty((q.shape[0], x.shape[0]))
    for i in range(q.shape[0]):
        for j in range(x.shape[0]):
            s = 0.0
            for d in range(x.shape[1]):
                diff = q[i, d] - x[j, d]
                s += diff * diff
            out[i, j] = s
    return out


def knn_query(queries: np.ndarray, X: np.ndarray, k: int, exclude_self: bool = False, chunk: int = 512):
    """Exact k nearest rows of ``X`` for each query; ties go to the lower index."""
    queries = np.ascontiguousarray(queries, dtype=float)
    X = np.ascontiguousarray(X, dtype=float)
    n_avail = X.shape[0] - (1 if exclude_self else 0)
    if k >= X.shape[0] + (0 if exclude_self else 1) or k > n_avail:
        raise ValueError(f"k={k} too large for {X.shape[0]} points")
    m = queries.shape[0]
    idx = np.empty((m, k), dtype=np.int64)
    dist = np.empty((m, k))
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        d2 = _sq_dists(queries[start:stop], X)
        if exclude_self:
            d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        idx[start:stop] = order
        dist[start:stop] = np.sqrt(np.take_along_axis(d2, order, axis=1))
    return idx, dist


def knn_graph(X: np.ndarray, k: int):
    """Exact kNN of every row against the others (self excluded)."""
    X = np.asarray(X, dtype=float)
    if k >= X.shape[0]:
        raise ValueError(f"k={k} must be smaller than the number of points {X.shape[0]}")
    return knn_query(X, X, k, exclude_self=True)


# ---------------------------------------------------------------------------
# Fuzzy graph
# ---------------------------------------------------------------------------


def smooth_knn(dist: np.ndarray, k: int, n_iter: int = 64):
    """Per-row rho (nearest distance) and sigma with sum exp(-(d - rho)+ / sigma) = log2(k).

    Bisection runs on log(sigma) so the whole [1e-12, 1e12] range resolves.
    """
    dist = np.asarray(dist, dtype=float)
    target = math.log2(k)
    rho = dist[:, 0].copy()
    excess = np.maximum(dist - rho[:, None], 0.0)
    lo = np.full(len(rho), math.log(SIGMA_MIN))
    hi = np.full(len(rho), math.log(SIGMA_MAX))
    done = np.zeros(len(rho), dtype=bool)
    mid = (lo + hi) / 2
    for _ in range(n_iter):
        mid = np.where(done, mid, (lo + hi) / 2)
        psum = np.exp(-excess / np.exp(mid)[:, None]).sum(axis=1)
        resid = psum - target
        done |= np.abs(resid) < BANDWIDTH_TOL
        too_big = resid > 0
        hi = np.where(~done & too_big, mid, hi)
        lo = np.where(~done & ~too_big, mid, lo)
        if done.all():
            break
    return rho, np.exp(mid)


@dataclass
class FuzzyGraph:
    knn_indices: np.ndarray
    knn_dists: np.ndarray
    rho: np.ndarray
    sigma: np.ndarray
    weights: scipy.sparse.csr_matrix  # symmetric, entries in (0, 1]

    @property
    def n_points(self) -> int:
        return self.weights.shape[0]


def membership(dist: np.ndarray, rho: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    return np.exp(-np.maximum(dist - rho[:, None], 0.0) / sigma[:, None])


def fuzzy_weights(knn_indices: np.ndarray, knn_dists: np.ndarray, k: int | None = None) -> FuzzyGraph:
    """Directed memberships, then the fuzzy union v = a + b - a*b."""
    k = knn_indices.shape[1] if k is None else k
    rho, sigma = smooth_knn(knn_dists, k)
    vals = membership(knn_dists, rho, sigma)
    n = knn_indices.shape[0]
    rows = np.repeat(np.arange(n), knn_indices.shape[1])
    a = scipy.sparse.csr_matrix((vals.ravel(), (rows, knn_indices.ravel())), shape=(n, n))
    a.eliminate_zeros()
    at = a.T.tocsr()
    v = (a + at - a.multiply(at)).tocsr()
    v.eliminate_zeros()
    v.sort_indices()
    return FuzzyGraph(knn_indices, knn_dists, rho, sigma, v)


# ---------------------------------------------------------------------------
# Low-dimensional similarity curve
# ---------------------------------------------------------------------------


def _curve(d, a, b):
    return 1.0 / (1.0 + a * d ** (2 * b))


def target_curve(d: np.ndarray, min_dist: float) -> np.ndarray:
    return np.where(d <= min_dist, 1.0, np.exp(-(d - min_dist)))


def fit_ab(min_dist: float) -> tuple[float, float]:
    """Levenberg-Marquardt fit of 1 / (1 + a d^2b) to the min_dist-offset exponential."""
    if min_dist <= 0:
        raise ValueError("min_dist must be > 0")
    d = np.linspace(0, 3, 300)
    (a, b), _ = curve_fit(_curve, d, target_curve(d, min_dist), p0=(1.0, 1.0), method="lm")
    return float(a), float(b)


# ---------------------------------------------------------------------------
# Layout optimisation
# ---------------------------------------------------------------------------


def epochs_per_sample(weights: np.ndarray, n_epochs: int) -> np.ndarray:
    out = np.full(weights.shape[0], -1.0)
    n_samples = n_epochs * (weights / weights.max())
    out[n_samples > 0] = float(n_epochs) / n_samples[n_samples > 0]
    return out


@numba.njit(cache=True)
def _clip(v):
    if v > GRAD_CLIP:
        return GRAD_CLIP
    if v < -GRAD_CLIP:
        return -GRAD_CLIP
    return v


@numba.njit(cache=True)
def _seed(s):
    np.random.seed(s)


@numba.njit(cache=True)
def _sgd_layout(head_emb, tail_emb, head, tail, eps, n_epochs, a, b, alpha0, neg_rate, move_other, seed):
    _seed(seed)
    n_edges = head.shape[0]
    n_tail = tail_emb.shape[0]
    dim = head_emb.shape[1]
    eps_neg = eps / neg_rate
    next_pos = eps.copy()
    next_neg = eps_neg.copy()
    for epoch in range(n_epochs):
        alpha = alpha0 * (1.0 - epoch / n_epochs)
        for e in range(n_edges):
            if next_pos[e] > epoch:
                continue
            j = head[e]
            k = tail[e]
            d2 = 0.0
            for d in range(dim):
                diff = head_emb[j, d] - tail_emb[k, d]
                d2 += diff * diff
            if d2 > 0.0:
                coeff = -2.0 * a * b * d2 ** (b - 1.0) / (a * d2**b + 1.0)
            else:
                coeff = 0.0
            for d in range(dim):
                g = _clip(coeff * (head_emb[j, d] - tail_emb[k, d]))
                head_emb[j, d] += g * alpha
                if move_other:
                    tail_emb[k, d] -= g * alpha
            next_pos[e] += eps[e]
            n_neg = int((epoch - next_neg[e]) / eps_neg[e])
            for _ in range(n_neg):
                k = np.random.randint(n_tail)
                if move_other and k == j:
                    continue
                d2 = 0.0
                for d in range(dim):
                    diff = head_emb[j, d] - tail_emb[k, d]
                    d2 += diff * diff
                if d2 > 0.0:
                    coeff = 2.0 * b / ((0.001 + d2) * (a * d2**b + 1.0))
                else:
                    coeff = 0.0
                for d in range(dim):
                    if coeff > 0.0:
                        g = _clip(coeff * (head_emb[j, d] - tail_emb[k, d]))
                    else:
                        g = GRAD_CLIP
                    head_emb[j, d] += g * alpha
            next_neg[e] += n_neg * eps_neg[e]
    return head_emb


def spectral_layout(graph: scipy.sparse.csr_matrix, rng: np.random.Generator, max_iter: int = 1000, tol: float = 1e-6):
    """Two leading non-trivial eigenvectors of D^-1/2 V D^-1/2 by orthogonal iteration.

    Returns ``None`` if the iteration has not settled after ``max_iter`` steps.
    """
    n = graph.shape[0]
    deg = np.asarray(graph.sum(axis=1)).ravel()
    if n < 4 or np.any(deg <= 0):
        return None
    dinv = 1.0 / np.sqrt(deg)
    m = scipy.sparse.diags(dinv) @ graph @ scipy.sparse.diags(dinv)
    top = np.sqrt(deg)
    top /= np.linalg.norm(top)
    x = rng.standard_normal((n, 2))
    for _ in range(max_iter):
        # (I + M) / 2 keeps the spectrum in [0, 1]
        y = 0.5 * (x + m @ x)
        y -= np.outer(top, top @ y)
        y, _ = np.linalg.qr(y)
        converged = np.linalg.norm(y - x @ (x.T @ y)) < tol
        x = y
        if converged:
            return x * dinv[:, None]
    return None


def _noisy_scale(coords, rng, max_coord=10.0, noise=1e-4):
    span = np.abs(coords).max()
    coords = coords * (max_coord / span) if span > 0 else coords
    return coords + rng.normal(scale=noise, size=coords.shape)


def graph_edges(graph: scipy.sparse.csr_matrix, n_epochs: int):
    coo = graph.tocoo()
    w = coo.data
    keep = w >= w.max() / n_epochs
    return coo.row[keep].astype(np.int64), coo.col[keep].astype(np.int64), w[keep]


def initial_layout(graph: FuzzyGraph, params: UmapParams) -> tuple[np.ndarray, str]:
    rng = np.random.default_rng(params.seed)
    coords = spectral_layout(graph.weights, rng)
    if coords is None:
        return rng.uniform(-10, 10, size=(graph.n_points, 2)), "random"
    return _noisy_scale(coords, rng), "spectral"


def optimize_embedding(graph: FuzzyGraph, params: UmapParams, a: float, b: float, init: np.ndarray | None = None) -> np.ndarray:
    """SGD on the fuzzy cross-entropy; edges sampled in proportion to their weight."""
    coords = initial_layout(graph, params)[0] if init is None else np.array(init, dtype=float)
    head, tail, w = graph_edges(graph.weights, params.n_epochs)
    eps = epochs_per_sample(w, params.n_epochs)
    coords = np.ascontiguousarray(coords)
    _sgd_layout(coords, coords, head, tail, eps, params.n_epochs, a, b, float(params.learning_rate),
                float(params.negative_sample_rate), True, int(params.seed) % (2**32))
    if not np.all(np.isfinite(coords)):
        raise NumericError("embedding produced non-finite coordinates")
    return coords


def cross_entropy(graph: FuzzyGraph, coords: np.ndarray, a: float, b: float, eps: float = 1e-12) -> float:
    """Fuzzy cross-entropy summed over the graph's edges (i != j)."""
    coo = scipy.sparse.triu(graph.weights, k=1).tocoo()
    v = np.clip(coo.data, eps, 1 - eps)
    d = np.linalg.norm(coords[coo.row] - coords[coo.col], axis=1)
    w = np.clip(_curve(d, a, b), eps, 1 - eps)
    return float(2 * np.sum(v * np.log(v / w) + (1 - v) * np.log((1 - v) / (1 - w))))


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


@dataclass
class EmbeddingModel:
    params: UmapParams
    mean: np.ndarray
    std: np.ndarray
    X: np.ndarray  # standardized training features
    graph: FuzzyGraph
    coords: np.ndarray
    a: float
    b: float
    init_method: str = "spectral"

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std


def fit(X: np.ndarray, params: UmapParams, scaler: tuple | None = None) -> EmbeddingModel:
    """Standardize ``X`` (with its own statistics unless ``scaler`` is given) and embed it."""
    X = np.asarray(X, dtype=float)
    if scaler is None:
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std < 1e-12] = 1.0
    else:
        mean, std = (np.asarray(s, dtype=float) for s in scaler)
    xs = (X - mean) / std
    k = min(params.n_neighbors, xs.shape[0] - 1)
    idx, dist = knn_graph(xs, k)
    graph = fuzzy_weights(idx, dist, k)
    a, b = fit_ab(params.min_dist)
    init, how = initial_layout(graph, params)
    coords = optimize_embedding(graph, params, a, b, init)
    return EmbeddingModel(params, mean, std, xs, graph, coords, a, b, how)


def transform(model: EmbeddingModel, x_new: np.ndarray, standardized: bool = False) -> np.ndarray:
    """Place new points against the frozen training layout.

    Each point starts at the membership-weighted mean of its neighbours'
    coordinates and is then refined alone for ``transform_epochs`` epochs.
    Every point reuses the same random stream, so equal inputs map equally.
    """
    x_new = np.asarray(x_new, dtype=float)
    single = x_new.ndim == 1
    xq = np.atleast_2d(x_new)
    if not standardized:
        xq = model.standardize(xq)
    p = model.params
    k = min(p.n_neighbors, model.X.shape[0])
    idx, dist = knn_query(xq, model.X, k)
    rho, sigma = smooth_knn(dist, k)
    w = membership(dist, rho, sigma)
    init = np.einsum("ij,ijk->ik", w, model.coords[idx]) / w.sum(axis=1, keepdims=True)
    out = np.empty_like(init)
    tail_emb = model.coords.copy()
    n_ep = max(int(p.transform_epochs), 1)
    for i in range(xq.shape[0]):
        keep = w[i] >= w[i].max() / n_ep
        head = np.zeros(int(keep.sum()), dtype=np.int64)
        eps = epochs_per_sample(w[i][keep], n_ep)
        point = init[i : i + 1].copy()
        _sgd_layout(point, tail_emb, head, idx[i][keep].astype(np.int64), eps, n_ep, model.a, model.b,
                    p.learning_rate / 4.0, float(p.negative_sample_rate), False, int(p.seed) % (2**32))
        out[i] = point[0]
    if not np.all(np.isfinite(out)):
        raise NumericError("transform produced non-finite coordinates")
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_model(model: EmbeddingModel, path) -> None:
    g = model.graph
    np.savez(
        path,
        format=np.array(MODEL_FORMAT),
        params=np.array(json.dumps(asdict(model.params))),
        mean=model.mean, std=model.std, X=model.X, coords=model.coords,
        a=np.array(model.a), b=np.array(model.b), init_method=np.array(model.init_method),
        knn_indices=g.knn_indices, knn_dists=g.knn_dists, rho=g.rho, sigma=g.sigma,
        w_data=g.weights.data, w_indices=g.weights.indices, w_indptr=g.weights.indptr,
        w_shape=np.array(g.weights.shape),
    )


def load_model(path) -> EmbeddingModel:
    with np.load(path, allow_pickle=False) as z:
        if str(z["format"]) != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {z['format']}")
        weights = scipy.sparse.csr_matrix((z["w_data"], z["w_indices"], z["w_indptr"]), shape=tuple(z["w_shape"]))
        graph = FuzzyGraph(z["knn_indices"], z["knn_dists"], z["rho"], z["sigma"], weights)
        params = UmapParams(**json.loads(str(z["params"])))
        return EmbeddingModel(params, z["mean"], z["std"], z["X"], graph, z["coords"],
                              float(z["a"]), float(z["b"]), str(z["init_method"]))
