"""Client similarity, spectral embedding, and k-means grouping.

Clients are compared through their class distributions; the resulting
similarity graph is cut with a normalized-Laplacian spectral embedding
followed by seeded k-means. The eigensolver is a cyclic Jacobi sweep,
which is plenty for the few-hundred-client matrices this simulator sees
and is robustly accurate on symmetric input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError

JACOBI_TOL = 1e-10
JACOBI_MAX_SWEEPS = 100
KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 100


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence between two probability vectors, in nats.

    JS(p, q) = KL(p || m)/2 + KL(q || m)/2 with m the midpoint. Zero
    probabilities contribute nothing (0 * log 0 = 0), so no smoothing is
    needed. The result lies in [0, ln 2].
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ParameterError("p and q must be vectors of equal length")
    if np.any(p < 0) or np.any(q < 0):
        raise ParameterError("probabilities must be non-negative")
    if abs(float(p.sum()) - 1.0) > 1e-9 or abs(float(q.sum()) - 1.0) > 1e-9:
        raise ParameterError("p and q must each sum to 1")
    m = 0.5 * (p + q)

    def half_kl(a):
        mask = a > 0
        return 0.5 * float(np.sum(a[mask] * np.log(a[mask] / m[mask])))

    return half_kl(p) + half_kl(q)


@dataclass
class SimilarityMatrix:
    """Pairwise client similarity; symmetric, unit diagonal, entries in (0, 1]."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.shape[0] != e.shape[1] or e.shape[0] < 1:
            raise ParameterError("similarity matrix must be square and non-empty")
        if float(np.max(np.abs(e - e.T))) > 1e-12:
            raise ParameterError("similarity matrix must be symmetric")
        if np.any(np.diagonal(e) != 1.0):
            raise ParameterError("similarity diagonal must be exactly 1")
        if np.any(e <= 0) or np.any(e > 1):
            raise ParameterError("similarity entries must lie in (0, 1]")
        self.entries = e

    @property
    def n_clients(self) -> int:
        return self.entries.shape[0]


def similarity_matrix(dists, lambda1: float = 1.0, lambda2: float = 1.0) -> SimilarityMatrix:
    """Similarity exp(-l1 * JS(p_i, p_j) - l2 * |n_i - n_j| / (n_i + n_j)).

    The first exponent term penalizes diverging class mixes, the second
    penalizes mismatched sample counts; lambda1/lambda2 weight the two.
    The diagonal is exactly 1 (both terms vanish for i = j).
    """
    if lambda1 < 0 or lambda2 < 0:
        raise ParameterError("lambda1 and lambda2 must be >= 0")
    n = len(dists)
    if n < 1:
        raise ParameterError("need at least one client distribution")
    counts = [d.count for d in dists]
    s = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            div = js_divergence(dists[i].proportions, dists[j].proportions)
            size_gap = abs(counts[i] - counts[j]) / (counts[i] + counts[j])
            s[i, j] = s[j, i] = math.exp(-lambda1 * div - lambda2 * size_gap)
    return SimilarityMatrix(s)


def normalized_laplacian(similarity: SimilarityMatrix) -> np.ndarray:
    """Symmetric normalized Laplacian I - D^{-1/2} S D^{-1/2}.

    D is the diagonal of row sums. Eigenvalues lie in [0, 2], and 0 is
    always present because similarity entries are strictly positive.
    """
    a = similarity.entries
    degree = a.sum(axis=1)
    if np.any(degree <= 0):
        raise NumericError("zero row sum in similarity matrix")
    inv_sqrt = 1.0 / np.sqrt(degree)
    lap = np.eye(len(a)) - inv_sqrt[:, None] * a * inv_sqrt[None, :]
    return 0.5 * (lap + lap.T)


def symmetric_eig(matrix: np.ndarray, tol: float = JACOBI_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps rotate away every off-diagonal element until the off-diagonal
    Frobenius norm drops below `tol` (NumericError after JACOBI_MAX_SWEEPS).
    Returns eigenvalues in ascending order and the matching orthonormal
    eigenvectors as columns. Each eigenvector is sign-normalized so its
    first component larger than 1e-12 in magnitude is positive, making the
    output deterministic.
    """
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ParameterError("matrix must be square")
    if tol <= 0:
        raise ParameterError("tol must be > 0")
    n = a.shape[0]
    if n and float(np.max(np.abs(a - a.T))) > 1e-10:
        raise ParameterError("matrix must be symmetric")
    a = 0.5 * (a + a.T)
    vecs = np.eye(n)
    if n > 1:
        for _ in range(JACOBI_MAX_SWEEPS):
            off = math.sqrt(2.0 * float(np.sum(np.tril(a, -1) ** 2)))
            if off < tol:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    if apq == 0.0:
                        continue
                    diff = a[q, q] - a[p, p]
                    if abs(apq) < 1e-36 * abs(diff):
                        t = apq / diff
                    else:
                        phi = diff / (2.0 * apq)
                        t = 1.0 / (abs(phi) + math.sqrt(phi * phi + 1.0))
                        if phi < 0.0:
                            t = -t
                    c = 1.0 / math.sqrt(t * t + 1.0)
                    s = t * c
                    app, aqq = a[p, p], a[q, q]
                    idx = np.r_[0:p, p + 1:q, q + 1:n]
                    aip = a[idx, p].copy()
                    aiq = a[idx, q].copy()
                    a[idx, p] = a[p, idx] = c * aip - s * aiq
                    a[idx, q] = a[q, idx] = s * aip + c * aiq
                    a[p, p] = app - t * apq
                    a[q, q] = aqq + t * apq
                    a[p, q] = a[q, p] = 0.0
                    vp = vecs[:, p].copy()
                    vq = vecs[:, q].copy()
                    vecs[:, p] = c * vp - s * vq
                    vecs[:, q] = s * vp + c * vq
        else:
            raise NumericError(f"Jacobi sweep did not converge in {JACOBI_MAX_SWEEPS} sweeps")
    values = np.diagonal(a).copy()
    order = np.argsort(values, kind="stable")
    values = values[order]
    vecs = vecs[:, order]
    for k in range(n):
        nz = np.flatnonzero(np.abs(vecs[:, k]) > 1e-12)
        if len(nz) and vecs[nz[0], k] < 0:
            vecs[:, k] = -vecs[:, k]
    return values, vecs


@dataclass
class ClusterAssignment:
    """Cluster label per client; every cluster index in [0, M) is occupied."""

    labels: np.ndarray
    n_clusters: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1 or len(self.labels) < 1:
            raise ParameterError("labels must be a non-empty vector")
        if self.n_clusters < 1:
            raise ParameterError("n_clusters must be >= 1")
        if self.labels.min() < 0 or self.labels.max() >= self.n_clusters:
            raise ParameterError("labels must lie in [0, n_clusters)")
        present = np.unique(self.labels)
        if len(present) != self.n_clusters:
            raise ParameterError("every cluster must have at least one member")

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_clusters)


def _plusplus_centers(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    chosen: list[int] = [int(rng.integers(n))]
    centers[0] = points[chosen[0]]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            pick = int(rng.choice(n, p=d2 / total))
        else:
            # all residual mass sits on already-chosen points (duplicates);
            # fall back to the lowest unchosen index
            pick = min(set(range(n)) - set(chosen))
        chosen.append(pick)
        centers[j] = points[pick]
        d2 = np.minimum(d2, np.sum((points - centers[j]) ** 2, axis=1))
    return centers


def _lloyd(points: np.ndarray, k: int, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    centers = _plusplus_centers(points, k, rng)
    labels = None
    for _ in range(KMEANS_MAX_ITER):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)  # ties resolve to the lowest center index
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = points[members].mean(axis=0)
    inertia = float(((points - centers[labels]) ** 2).sum())
    return labels, inertia


def _repair_empty_clusters(labels: np.ndarray, points: np.ndarray, k: int) -> np.ndarray:
    """Fill each empty cluster with the farthest member of the largest one."""
    labels = labels.copy()
    while True:
        sizes = np.bincount(labels, minlength=k)
        empties = np.flatnonzero(sizes == 0)
        if len(empties) == 0:
            return labels
        donor = int(np.argmax(sizes))
        members = np.flatnonzero(labels == donor)
        centroid = points[members].mean(axis=0)
        gaps = ((points[members] - centroid) ** 2).sum(axis=1)
        labels[members[int(np.argmax(gaps))]] = empties[0]


def _canonical_labels(labels: np.ndarray, k: int) -> np.ndarray:
    """Renumber clusters by ascending smallest member index."""
    first_member = [int(np.flatnonzero(labels == j)[0]) for j in range(k)]
    remap = np.empty(k, dtype=np.int64)
    remap[np.argsort(first_member)] = np.arange(k)
    return remap[labels]


def kmeans(points, k: int, seed: int) -> ClusterAssignment:
    """Seeded k-means++ with restarts, keeping the lowest-inertia result.

    Runs KMEANS_RESTARTS independent initializations from one seeded
    generator and Lloyd iterations until assignments stabilize. Any empty
    cluster is repaired by donating the farthest point of the largest
    cluster, and labels are canonicalized by ascending smallest member
    index, so equal (points, k, seed) always yields the identical result.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or len(pts) < 1:
        raise ParameterError("points must be a non-empty (n, d) array")
    if k < 1 or k > len(pts):
        raise ParameterError(f"k must lie in [1, {len(pts)}]")
    rng = np.random.default_rng(seed)
    best_labels, best_inertia = None, math.inf
    for _ in range(KMEANS_RESTARTS):
        labels, inertia = _lloyd(pts, k, rng)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    repaired = _repair_empty_clusters(best_labels, pts, k)
    return ClusterAssignment(_canonical_labels(repaired, k), k)


def spectral_cluster(similarity: SimilarityMatrix, n_clusters: int, seed: int) -> ClusterAssignment:
    """Normalized-cut style clustering of the similarity graph.

    Embeds clients into the eigenvectors of the M smallest normalized-
    Laplacian eigenvalues, row-normalizes the embedding (rows below 1e-12
    norm stay zero), and k-means the rows with k = M.
    """
    n = similarity.n_clients
    if not 1 <= n_clusters <= n:
        raise ParameterError(f"n_clusters must lie in [1, {n}]")
    _, vecs = symmetric_eig(normalized_laplacian(similarity))
    embedding = vecs[:, :n_clusters].copy()
    norms = np.linalg.norm(embedding, axis=1)
    safe = norms >= 1e-12
    embedding[safe] /= norms[safe, None]
    return kmeans(embedding, n_clusters, seed)


def laplacian_eigengaps(similarity: SimilarityMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Ascending Laplacian spectrum and its consecutive gaps.

    A large gap after the M-th eigenvalue is the usual hint that M clusters
    fit the graph; this is reported, never used to auto-pick M.
    """
    values, _ = symmetric_eig(normalized_laplacian(similarity))
    return values, np.diff(values)


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected agreement between two clusterings, in [-1, 1]."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ParameterError("label vectors must have identical length")
    n = len(a)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def comb2(x):
        x = np.asarray(x, dtype=np.float64)
        return x * (x - 1.0) / 2.0

    sum_cells = float(comb2(table).sum())
    sum_rows = float(comb2(table.sum(axis=1)).sum())
    sum_cols = float(comb2(table.sum(axis=0)).sum())
    total = float(comb2(n))
    expected = sum_rows * sum_cols / total if total else 0.0
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)
