"""Covariance-eigendecomposition PCA and its wire encoding."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data_model import FeatureTable


class PcaError(ValueError):
    pass


def jacobi_eigh(a: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors (columns) of a symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise PcaError("jacobi_eigh needs a square symmetric matrix")
    v = np.eye(n)
    scale = np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2) * 2.0)
        if off <= tol * scale or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= np.finfo(float).eps * 1e-3 * (abs(a[p, p]) + abs(a[q, q])) or apq == 0.0:
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 1.0 / (2.0 * theta)
                elif theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise PcaError("Jacobi iteration did not converge")
    return np.diag(a).copy(), v


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    # largest-magnitude entry positive; first such entry on exact ties
    i = int(np.argmax(np.abs(vec)))
    return -vec if vec[i] < 0 else vec


def _order(values: np.ndarray, vectors: np.ndarray, tie_tol: float) -> tuple[np.ndarray, np.ndarray]:
    vectors = np.column_stack([_fix_sign(vectors[:, j]) for j in range(vectors.shape[1])])
    idx = list(range(len(values)))
    # descending eigenvalue; near-equal eigenvalues ordered lexicographically by eigenvector
    idx.sort(key=lambda j: -values[j])
    out: list[int] = []
    i = 0
    while i < len(idx):
        group = [idx[i]]
        while i + 1 < len(idx) and abs(values[idx[i + 1]] - values[group[0]]) <= tie_tol:
            i += 1
            group.append(idx[i])
        group.sort(key=lambda j: tuple(vectors[:, j]))
        out.extend(group)
        i += 1
    return values[out], vectors[:, out]


@dataclass(frozen=True, eq=False)
class PcaModel:
    means: np.ndarray
    components: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=float)
        comps = np.array(self.components, dtype=float)
        var = np.array(self.variances, dtype=float)
        if means.ndim != 1 or comps.ndim != 2 or var.ndim != 1:
            raise PcaError("malformed PCA model shapes")
        if comps.shape != (means.shape[0], var.shape[0]):
            raise PcaError(f"components shape {comps.shape} incompatible with d={means.shape[0]}, r={var.shape[0]}")
        for arr in (means, comps, var):
            arr.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "variances", var)

    @property
    def d(self) -> int:
        return self.components.shape[0]

    @property
    def r(self) -> int:
        return self.components.shape[1]

    def __eq__(self, other):
        if not isinstance(other, PcaModel):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in ("means", "components", "variances")
        )

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "components": self.components.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "PcaModel":
        if not isinstance(d, dict) or set(d) != {"means", "components", "variances"}:
            raise PcaError("PCA payload must have exactly the keys means, components, variances")
        try:
            comps = np.array(d["components"], dtype=float)
            means = np.array(d["means"], dtype=float)
            var = np.array(d["variances"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise PcaError(f"malformed PCA payload: {exc}") from None
        if comps.ndim != 2:
            raise PcaError("components must be a non-ragged 2-D list")
        return cls(means, comps, var)


@dataclass(frozen=True, eq=False)
class ProjectedMatrix:
    """Rows of a table expressed in component space."""

    pseudonyms: tuple[str, ...]
    scores: np.ndarray

    def __post_init__(self):
        scores = np.array(self.scores, dtype=float)
        if scores.ndim != 2:
            raise PcaError("scores must be a 2-D matrix")
        pseudonyms = tuple(self.pseudonyms)
        if scores.shape[0] != len(pseudonyms):
            raise PcaError(f"{scores.shape[0]} score rows but {len(pseudonyms)} pseudonyms")
        scores.setflags(write=False)
        object.__setattr__(self, "pseudonyms", pseudonyms)
        object.__setattr__(self, "scores", scores)

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    @property
    def r(self) -> int:
        return self.scores.shape[1]

    def take(self, rows):
        rows = list(rows)
        return type(self)([self.pseudonyms[i] for i in rows], self.scores[rows])

    def __eq__(self, other):
        if not isinstance(other, ProjectedMatrix):
            return NotImplemented
        return self.pseudonyms == other.pseudonyms and np.array_equal(self.scores, other.scores)

    def to_dict(self) -> dict:
        return {"pseudonyms": list(self.pseudonyms), "scores": self.scores.tolist()}

    @classmethod
    def from_dict(cls, d):
        scores = d["scores"]
        arr = np.array(scores, dtype=float) if len(scores) else np.zeros((len(d["pseudonyms"]), 0))
        return cls(d["pseudonyms"], arr)


def covariance(values: np.ndarray) -> np.ndarray:
    """Sample covariance (divides by n - 1)."""
    x = np.asarray(values, dtype=float)
    centered = x - x.mean(axis=0)
    return centered.T @ centered / (x.shape[0] - 1)


def fit_pca(table: FeatureTable, r: int = 2) -> PcaModel:
    """Fit the top-``r`` principal directions of ``table``.

    The table is expected to be standardized already. Components are the
    eigenvectors of the sample covariance with the largest eigenvalues, each
    signed so that its largest-magnitude entry is positive.
    """
    x = table.values if isinstance(table, FeatureTable) else np.asarray(table, dtype=float)
    n, d = x.shape
    if n < 2:
        raise PcaError(f"covariance needs at least 2 rows, got {n}")
    if not 1 <= r <= min(n - 1, d):
        raise PcaError(f"component count r={r} out of range [1, {min(n - 1, d)}]")
    cov = covariance(x)
    values, vectors = jacobi_eigh(cov)
    values, vectors = _order(values, vectors, tie_tol=1e-12 * max(1.0, float(np.trace(cov))))
    values = np.where(values < 0, 0.0, values)
    return PcaModel(x.mean(axis=0), vectors[:, :r], values[:r])


def project(model: PcaModel, table) -> ProjectedMatrix:
    if isinstance(table, FeatureTable):
        pseudonyms, x = table.pseudonyms, table.values
    else:
        x = np.asarray(table, dtype=float)
        pseudonyms = tuple(str(i) for i in range(x.shape[0]))
    if x.shape[1] != model.d:
        raise PcaError(f"dimension mismatch: model expects {model.d} columns, got {x.shape[1]}")
    return ProjectedMatrix(pseudonyms, (x - model.means) @ model.components)


def reconstruct(model: PcaModel, projected: ProjectedMatrix) -> np.ndarray:
    return projected.scores @ model.components.T + model.means


def encode_model(model: PcaModel) -> str:
    return json.dumps(model.to_dict(), separators=(",", ":"), allow_nan=False)


def decode_model(payload: str | bytes) -> PcaModel:
    try:
        d = json.loads(payload)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise PcaError(f"malformed PCA payload: {exc}") from None
    return PcaModel.from_dict(d)


def model_roundtrip(model: PcaModel) -> PcaModel:
    return decode_model(encode_model(model))
