"""Projections of latent vectors to low dimensions for plots and clustering.

PCA, RBF kernel PCA, exact t-SNE with per-point bandwidth search, and
spectral embedding of a symmetric kNN graph. All methods are
deterministic and permutation-equivariant; t-SNE is initialized from
PCA scores so reordering the input reorders the embedding.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from vraets import artifacts
from vraets.errors import DataError

_EPS = 1e-12


@dataclass
class Embedding:
    """Projected points with the method tag and parameters that made them."""

    points: np.ndarray
    method: str
    params: dict = field(default_factory=dict)
    source_dim: int = 0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if not np.all(np.isfinite(self.points)):
            raise DataError(f"{self.method}: non-finite embedding coordinates")

    def save(self, path, labels: np.ndarray | None = None) -> None:
        arrays = {"points": self.points}
        if labels is not None:
            arrays["labels"] = np.asarray(labels, dtype=np.int64)
        meta = {"method": self.method, "params": self.params,
                "source_dim": self.source_dim}
        artifacts.save_artifact(path, "embedding", meta, arrays)

    @classmethod
    def load(cls, path) -> tuple["Embedding", np.ndarray | None]:
        _, meta, arrays = artifacts.load_artifact(path, expect_kind="embedding")
        emb = cls(arrays["points"], meta["method"], meta["params"],
                  int(meta["source_dim"]))
        return emb, arrays.get("labels")


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Orient each column so its largest-magnitude entry is positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        i = np.argmax(np.abs(out[:, j]))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def pca(X: np.ndarray, k: int = 2) -> Embedding:
    """Principal components via symmetric eigendecomposition of the covariance."""
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise DataError("pca: need at least 2 points")
    if not 1 <= k <= min(n, d):
        raise DataError(f"pca: k={k} out of range for {n}x{d} data")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    components = _fix_signs(eigvecs[:, order])
    variances = np.maximum(eigvals[order], 0.0)
    scores = Xc @ components
    return Embedding(scores, "pca", {"k": k}, d,
                     extras={"components": components,
                             "explained_variance": variances,
                             "mean": mean})


def _sq_distances(X: np.ndarray) -> np.ndarray:
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def default_gamma(X: np.ndarray) -> float:
    """1 / median pairwise squared distance (fallback 1.0 if degenerate)."""
    d2 = _sq_distances(np.asarray(X, dtype=np.float64))
    iu = np.triu_indices(d2.shape[0], k=1)
    med = float(np.median(d2[iu])) if iu[0].size else 0.0
    return 1.0 / med if med > 0 else 1.0


def kernel_pca_rbf(X: np.ndarray, k: int = 2, gamma: float | None = None
                   ) -> Embedding:
    """RBF kernel PCA: double-centered kernel, scores scaled by sqrt(eigval)."""
    X = np.asarray(X, dtype=np.float64)
    if gamma is None:
        gamma = default_gamma(X)
    if gamma <= 0:
        raise DataError(f"kernel_pca_rbf: gamma must be positive, got {gamma}")
    n = X.shape[0]
    K = np.exp(-gamma * _sq_distances(X))
    one = np.full((n, n), 1.0 / n)
    Kc = K - one @ K - K @ one + one @ K @ one
    eigvals, eigvecs = np.linalg.eigh(Kc)
    order = np.argsort(eigvals)[::-1][:k]
    vals = np.maximum(eigvals[order], 0.0)
    vecs = _fix_signs(eigvecs[:, order])
    scores = vecs * np.sqrt(vals)[None, :]
    return Embedding(scores, "kernel_pca_rbf", {"k": k, "gamma": gamma},
                     X.shape[1], extras={"eigenvalues": vals})


def _binary_search_bandwidths(d2: np.ndarray, perplexity: float,
                              tol: float = 1e-5, max_iter: int = 100
                              ) -> np.ndarray:
    """Per-point conditional distributions matching log2(perplexity) entropy."""
    n = d2.shape[0]
    target = np.log2(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        lo, hi = 0.0, np.inf
        beta = 1.0
        di = np.delete(d2[i], i)
        for _ in range(max_iter):
            w = np.exp(-di * beta)
            s = np.sum(w)
            if s <= 0:
                h = 0.0
                p = np.zeros_like(w)
            else:
                p = w / s
                nz = p > 0
                h = -np.sum(p[nz] * np.log2(p[nz]))
            if abs(h - target) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (lo + beta) / 2.0
        row = np.insert(p, i, 0.0)
        P[i] = row
    return P


def tsne_affinities(X: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized, normalized joint affinities used by t-SNE."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 1.0 < perplexity < n:
        raise DataError(f"tsne: perplexity {perplexity} out of (1, {n})")
    Pcond = _binary_search_bandwidths(_sq_distances(X), perplexity)
    P = (Pcond + Pcond.T) / (2.0 * n)
    return np.maximum(P, _EPS)


def tsne(X: np.ndarray, perplexity: float = 30.0, iterations: int = 1000,
         seed: int = 0, learning_rate: float = 200.0,
         early_exaggeration: float = 12.0, exaggeration_iters: int = 250
         ) -> Embedding:
    """Exact O(N^2) t-SNE to 2D with PCA initialization.

    Gradient descent with momentum (0.5 before, 0.8 after the
    exaggeration phase); the KL(P||Q) value per iteration is recorded in
    extras["kl_trace"]. With the deterministic PCA init the result does
    not depend on the seed argument, which is kept for interface
    stability.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 4:
        raise DataError("tsne: need at least 4 points")
    P = tsne_affinities(X, perplexity)

    k0 = min(2, X.shape[1], n - 1) if min(n, X.shape[1]) >= 2 else 1
    init = pca(X, k0).points
    if init.shape[1] < 2:
        init = np.hstack([init, np.zeros((n, 1))])
    spread = init[:, 0].std()
    Y = init * (1e-4 / spread) if spread > 0 else init

    velocity = np.zeros_like(Y)
    kl_trace = []
    for it in range(iterations):
        exag = early_exaggeration if it < exaggeration_iters else 1.0
        momentum = 0.5 if it < exaggeration_iters else 0.8
        d2 = _sq_distances(Y)
        num = 1.0 / (1.0 + d2)
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / np.sum(num), _EPS)
        PQ = (exag * P - Q) * num
        grad = 4.0 * ((np.diag(PQ.sum(axis=1)) - PQ) @ Y)
        velocity = momentum * velocity - learning_rate * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)
        kl_trace.append(float(np.sum(P * np.log(P / Q))))
    return Embedding(Y, "tsne",
                     {"perplexity": perplexity, "iterations": iterations,
                      "seed": seed, "learning_rate": learning_rate},
                     X.shape[1], extras={"kl_trace": kl_trace, "P": P})


def spectral_embedding(X: np.ndarray, k_neighbors: int = 10, dims: int = 2
                       ) -> Embedding:
    """Eigenmaps of the symmetric-normalized Laplacian of a kNN graph."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k_neighbors >= n:
        raise DataError(f"spectral_embedding: k_neighbors {k_neighbors} "
                        f"must be < {n}")
    d2 = _sq_distances(X)
    if np.max(d2) == 0.0:
        # all points coincide: no geometry to embed
        return Embedding(np.zeros((n, dims)), "spectral",
                         {"k_neighbors": k_neighbors, "dims": dims}, X.shape[1])
    adj = np.zeros((n, n))
    order = np.argsort(d2, axis=1, kind="stable")
    for i in range(n):
        neigh = [j for j in order[i] if j != i][:k_neighbors]
        adj[i, neigh] = 1.0
    adj = np.maximum(adj, adj.T)  # union of directed kNN edges

    deg = adj.sum(axis=1)
    if np.all(deg == 0):
        return Embedding(np.zeros((n, dims)), "spectral",
                         {"k_neighbors": k_neighbors, "dims": dims}, X.shape[1])
    n_comp = _n_components(adj)
    if n_comp > dims + 1:
        warnings.warn(f"kNN graph has {n_comp} connected components; "
                      f"embedding may be degenerate")
    with np.errstate(divide="ignore"):
        dinv = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
    lap = np.eye(n) - dinv[:, None] * adj * dinv[None, :]
    eigvals, eigvecs = np.linalg.eigh(lap)
    coords = _fix_signs(eigvecs[:, 1:dims + 1])
    return Embedding(coords, "spectral",
                     {"k_neighbors": k_neighbors, "dims": dims}, X.shape[1],
                     extras={"eigenvalues": eigvals[:dims + 1]})


def _n_components(adj: np.ndarray) -> int:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = 0
    for start in range(n):
        if seen[start]:
            continue
        comps += 1
        stack = [start]
        seen[start] = True
        while stack:
            u = stack.pop()
            for v in np.flatnonzero(adj[u] > 0):
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
    return comps
