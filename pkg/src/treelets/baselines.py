"""Global PCA and agglomerative hierarchical clustering, the methods treelets are compared with.

PCA reuses the treelet rotation kernel: a cyclic Jacobi eigensolver is just
the same 2x2 decorrelating rotation applied to every pair, sweep after sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import newick
from .core import jacobi_angle, rotate_columns, rotate_covariance
from .data import COVARIANCE, abs_correlation_from_cov
from .errors import InvalidDissimilarity, NoConvergence

AVERAGE = "average"
COMPLETE = "complete"


@dataclass(frozen=True, eq=False)
class PcaModel:
    components: np.ndarray
    eigenvalues: np.ndarray
    sweeps: int = 0

    @property
    def p(self):
        return len(self.eigenvalues)

    def to_json(self):
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "components": [[float(v) for v in row] for row in self.components],
            "sweeps": self.sweeps,
        }


def _off_diagonal_max(A):
    off = np.abs(A - np.diag(np.diag(A)))
    return float(off.max()) if A.size > 1 else 0.0


def jacobi_eigh(A, tol=1e-12, max_sweeps=60):
    """Cyclic Jacobi eigendecomposition of symmetric ``A``.

    Converged when the largest off-diagonal magnitude is at most ``tol * trace``.
    Returns ``(eigenvalues, eigenvectors, sweeps)`` unsorted.
    """
    A = np.array(A, dtype=float)
    p = A.shape[0]
    V = np.eye(p)
    trace = float(np.trace(A))
    scale = trace if trace > 0 else float(np.abs(A).sum())
    threshold = tol * scale
    sweeps = 0
    residual = _off_diagonal_max(A)
    while residual > threshold:
        if sweeps >= max_sweeps:
            raise NoConvergence(sweeps, residual)
        for i in range(p - 1):
            for j in range(i + 1, p):
                if A[i, j] == 0.0:
                    continue
                theta = jacobi_angle(A[i, i], A[j, j], A[i, j])
                rotate_covariance(A, i, j, theta)
                rotate_columns(V, i, j, theta)
        sweeps += 1
        residual = _off_diagonal_max(A)
    return np.diag(A).copy(), V, sweeps


def pca_fit(S, tol=1e-12, max_sweeps=60):
    """Principal components of a covariance matrix, ordered by descending eigenvalue.

    Each component is sign-normalized so its largest-magnitude entry is positive.
    """
    if getattr(S, "metric", COVARIANCE) != COVARIANCE:
        raise ValueError("pca_fit expects a covariance similarity matrix")
    entries = np.asarray(getattr(S, "entries", S), dtype=float)
    if not np.all(np.isfinite(entries)) or not np.array_equal(entries, entries.T):
        raise ValueError("covariance must be finite and symmetric")
    vals, vecs, sweeps = jacobi_eigh(entries, tol, max_sweeps)
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        lead = int(np.argmax(np.abs(col)))
        if col[lead] < 0:
            vecs[:, k] = -col
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return PcaModel(vecs, vals, sweeps)


# -- hierarchical clustering -------------------------------------------------


@dataclass(frozen=True)
class HcMerge:
    left: int
    right: int
    distance: float
    size: int


@dataclass(frozen=True)
class HcTree:
    """Merges use scipy-style ids: leaves are 0..p-1, merge k creates cluster p + k."""

    merges: tuple
    linkage: str
    leaf_names: tuple

    @property
    def p(self):
        return len(self.leaf_names)

    def merge_triples(self):
        return [(m.left, m.right, self.p + k) for k, m in enumerate(self.merges)]

    def to_json(self):
        return {
            "linkage": self.linkage,
            "leaf_names": list(self.leaf_names),
            "merges": [
                {"left": m.left, "right": m.right, "distance": m.distance, "size": m.size}
                for m in self.merges
            ],
        }

    def to_newick(self, comment=None):
        p = self.p
        node = {i: (newick.quote(name), 0.0) for i, name in enumerate(self.leaf_names)}
        for k, m in enumerate(self.merges):
            (ls, lh), (rs, rh) = node.pop(m.left), node.pop(m.right)
            h = m.distance
            node[p + k] = (f"({ls}:{h - lh!r},{rs}:{h - rh!r})", h)
        return newick.finish([s for s, _ in node.values()], comment)


def dissimilarity_from_covariance(cov):
    """``1 - |corr|`` with an exact zero diagonal."""
    D = 1.0 - abs_correlation_from_cov(cov)
    np.fill_diagonal(D, 0.0)
    return D


def _validate_dissimilarity(D):
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InvalidDissimilarity(f"dissimilarity must be square, got {D.shape}")
    if not np.all(np.isfinite(D)):
        raise InvalidDissimilarity("dissimilarity has non-finite entries")
    if np.any(D < 0):
        i, j = np.argwhere(D < 0)[0]
        raise InvalidDissimilarity(f"negative entry at ({i}, {j})")
    if np.any(np.diag(D) != 0):
        i = int(np.flatnonzero(np.diag(D) != 0)[0])
        raise InvalidDissimilarity(f"nonzero diagonal at {i}")
    if not np.array_equal(D, D.T):
        raise InvalidDissimilarity("dissimilarity is not symmetric")


def hc_fit(D, linkage=AVERAGE, leaf_names=None):
    """Agglomerative clustering on a dissimilarity matrix.

    Ties between equally close cluster pairs go to the lexicographically
    smallest pair of cluster ids.
    """
    if linkage not in (AVERAGE, COMPLETE):
        raise ValueError(f"unsupported linkage {linkage!r}")
    D = np.array(D, dtype=float)
    _validate_dissimilarity(D)
    p = D.shape[0]
    if leaf_names is None:
        leaf_names = tuple(f"v{i}" for i in range(p))
    work = D.copy()
    np.fill_diagonal(work, np.inf)
    ids = list(range(p))
    sizes = np.ones(p)
    merges = []
    for k in range(p - 1):
        best = work.min()
        ii, jj = np.nonzero(work == best)
        pairs = sorted({(min(ids[a], ids[b]), max(ids[a], ids[b])) for a, b in zip(ii, jj) if a != b})
        left, right = pairs[0]
        a = ids.index(left)
        b = ids.index(right)
        na, nb = sizes[a], sizes[b]
        if linkage == AVERAGE:
            # exact when both distances agree, so ultrametric heights survive unchanged
            with np.errstate(invalid="ignore"):
                row = work[a] + (work[b] - work[a]) * (nb / (na + nb))
            row[np.isinf(work[a]) | np.isinf(work[b])] = np.inf
        else:
            row = np.maximum(work[a], work[b])
        keep, gone = min(a, b), max(a, b)
        work[keep, :] = row
        work[:, keep] = row
        work[gone, :] = np.inf
        work[:, gone] = np.inf
        work[keep, keep] = np.inf
        sizes[keep] = na + nb
        ids[keep] = p + k
        ids[gone] = -1
        merges.append(HcMerge(left, right, float(best), int(na + nb)))
    return HcTree(tuple(merges), linkage, tuple(leaf_names))
