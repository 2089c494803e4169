"""Lloyd's k-means with k-means++ seeding, WCSS, and elbow selection of k."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_rng


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KMeansModel:
    centroids: np.ndarray
    labels: np.ndarray
    wcss: float
    iterations: int
    history: tuple[float, ...] = ()

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


@dataclass
class ElbowCurve:
    ks: list[int]
    wcss_values: list[float]
    chosen_k: int
    second_differences: list[float] = field(default_factory=list)
    weak_elbow: bool = False
    models: dict = field(default_factory=dict, repr=False)


def _sq_dists(data: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = data[:, None, :] - centroids[None, :, :]
    return np.einsum("nkr,nkr->nk", d, d)


def wcss(centroids, data, labels) -> float:
    centroids = np.asarray(centroids, dtype=float)
    data = np.asarray(data, dtype=float)
    labels = np.asarray(labels)
    if data.ndim != 2 or centroids.ndim != 2 or data.shape[1] != centroids.shape[1]:
        raise ClusteringError("centroids and data must be 2-D with matching widths")
    if labels.shape != (data.shape[0],):
        raise ClusteringError("one label per data row required")
    if labels.size and (labels.min() < 0 or labels.max() >= centroids.shape[0]):
        raise ClusteringError(f"label out of range [0, {centroids.shape[0]})")
    diff = data - centroids[labels]
    return float(np.sum(diff * diff))


def _kmeanspp(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = data.shape[0]
    idx = [int(rng.integers(n))]
    closest = np.sum((data - data[idx[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # fewer distinct points than k; pick any unused row
            remaining = np.setdiff1d(np.arange(n), idx)
            nxt = int(rng.choice(remaining))
        else:
            nxt = int(rng.choice(n, p=closest / total))
        idx.append(nxt)
        closest = np.minimum(closest, np.sum((data - data[nxt]) ** 2, axis=1))
    return data[idx].copy()


def _assign(data, centroids):
    dist = _sq_dists(data, centroids)
    return np.argmin(dist, axis=1), dist


def _repair_empty(data, centroids, labels, dist):
    k = centroids.shape[0]
    taken = set()
    for j in range(k):
        if np.any(labels == j):
            continue
        own = dist[np.arange(data.shape[0]), labels]
        counts = np.bincount(labels, minlength=k)
        # never strip a cluster down to empty while repairing another
        eligible = np.array([counts[labels[i]] > 1 and i not in taken for i in range(data.shape[0])])
        cand = np.where(eligible, own, -1.0)
        i = int(np.argmax(cand))
        labels[i] = j
        taken.add(i)
        centroids[j] = data[i]
    return labels, centroids


def _lloyd(data, centroids, max_iter, tol):
    centroids = centroids.copy()
    labels, dist = _assign(data, centroids)
    labels, centroids = _repair_empty(data, centroids, labels, dist)
    history = [wcss(centroids, data, labels)]
    it = 0
    for it in range(1, max_iter + 1):
        for j in range(centroids.shape[0]):
            centroids[j] = data[labels == j].mean(axis=0)
        new_labels, dist = _assign(data, centroids)
        # keep the current label when it is already a nearest centroid
        own = dist[np.arange(data.shape[0]), labels]
        new_labels = np.where(own <= dist[np.arange(data.shape[0]), new_labels], labels, new_labels)
        new_labels, centroids = _repair_empty(data, centroids, new_labels, dist)
        for j in range(centroids.shape[0]):
            centroids[j] = data[new_labels == j].mean(axis=0)
        current = wcss(centroids, data, new_labels)
        prev = history[-1]
        history.append(current)
        changed = not np.array_equal(new_labels, labels)
        labels = new_labels
        if not changed or prev - current <= tol * max(prev, np.finfo(float).tiny):
            break
    return centroids, labels, history, it


def kmeans(data, k: int, seed: int = 0, restarts: int = 10, max_iter: int = 300, tol: float = 1e-6,
           init_centroids=None) -> KMeansModel:
    """Best-of-``restarts`` Lloyd's iteration.

    Each restart draws its k-means++ seeds from its own stream derived from
    ``(seed, restart)``. ``init_centroids``, when given, is run as an extra
    candidate start.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ClusteringError("empty data")
    n = data.shape[0]
    if not 1 <= k <= n:
        raise ClusteringError(f"k={k} out of range [1, {n}]")
    if restarts < 1:
        raise ClusteringError("restarts must be >= 1")
    starts = [_kmeanspp(data, k, derive_rng(seed, "kmeans", k, r)) for r in range(restarts)]
    if init_centroids is not None:
        starts.append(np.asarray(init_centroids, dtype=float))
    best = None
    for init in starts:
        centroids, labels, history, it = _lloyd(data, init, max_iter, tol)
        obj = history[-1]
        if best is None or obj < best.wcss:
            best = KMeansModel(centroids, labels, obj, it, tuple(history))
    return best


def _grow(data, model: KMeansModel) -> np.ndarray:
    # previous solution plus the worst-fitting point; seeds a k+1 start no worse than the k solution
    own = np.sum((data - model.centroids[model.labels]) ** 2, axis=1)
    return np.vstack([model.centroids, data[int(np.argmax(own))]])


def select_k_elbow(data, k_min: int, k_max: int, seed: int = 0, restarts: int = 10,
                   weak_threshold: float = 0.05) -> ElbowCurve:
    """Pick k in ``[k_min, k_max]`` at the largest discrete second difference of WCSS.

    The curve is evaluated on ``k_min - 1 .. k_max + 1`` so that every
    candidate has both neighbours. Each k also gets a start grown from the
    k - 1 solution, which keeps the curve non-increasing. ``weak_elbow`` is
    set when the best second difference is below ``weak_threshold`` of
    WCSS(k_min).
    """
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    if not (2 <= k_min < k_max <= n - 1):
        raise ClusteringError(f"invalid k range [{k_min}, {k_max}] for {n} rows")
    models = {}
    prev = None
    for k in range(k_min - 1, k_max + 2):
        init = _grow(data, prev) if prev is not None else None
        prev = models[k] = kmeans(data, k, seed=seed, restarts=restarts, init_centroids=init)
    w = {k: m.wcss for k, m in models.items()}
    ks = list(range(k_min, k_max + 1))
    second = [w[k - 1] - 2 * w[k] + w[k + 1] for k in ks]
    best = int(np.argmax(second))  # first maximum, i.e. smallest k on ties
    weak = second[best] < weak_threshold * w[k_min]
    return ElbowCurve(ks, [w[k] for k in ks], ks[best], second, bool(weak), models)
