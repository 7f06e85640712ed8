"""Treelet transform: greedy pairwise Jacobi rotations on the most similar variables.

At each level the two most similar active variables are rotated so they become
uncorrelated (a 2x2 local PCA). One rotated coordinate, the sum variable, stays
active; the other, the difference variable, is frozen as a detail coefficient.
The product of the rotations is an orthonormal multi-resolution basis.

Rotation convention, used everywhere in the package::

    u =  c * x[alpha] + s * x[beta]      (stored at slot alpha)
    v = -s * x[alpha] + c * x[beta]      (stored at slot beta)

with ``c = cos(theta)``, ``s = sin(theta)`` and ``|theta| <= pi/4``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import newick
from .data import ABS_CORRELATION, COVARIANCE, SimilarityMatrix, covariance_matrix
from .errors import (
    DimensionMismatch,
    InsufficientSamples,
    InvalidK,
    InvalidLevel,
    NonFiniteInput,
    TooFewActive,
)

MAXVAR = "maxvar"
LOWINDEX = "lowindex"

_METRIC_ALIASES = {
    "cov": COVARIANCE,
    COVARIANCE: COVARIANCE,
    "abscorr": ABS_CORRELATION,
    ABS_CORRELATION: ABS_CORRELATION,
}
_RETENTION_ALIASES = {
    MAXVAR: MAXVAR,
    "max_variance": MAXVAR,
    LOWINDEX: LOWINDEX,
    "keep_lower_index": LOWINDEX,
}


def resolve_metric(name):
    try:
        return _METRIC_ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown metric {name!r}; choose cov or abscorr") from None


def resolve_retention(name):
    try:
        return _RETENTION_ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown retention policy {name!r}; choose maxvar or lowindex") from None


# -- rotation kernel ---------------------------------------------------------


def jacobi_angle(a, b, c_ab):
    """Angle in [-pi/4, pi/4] that decorrelates the pair with covariance [[a, c_ab], [c_ab, b]]."""
    if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(c_ab)):
        raise NonFiniteInput(f"non-finite covariance entries ({a}, {b}, {c_ab})")
    theta = 0.5 * math.atan2(2.0 * c_ab, a - b)
    # atan2 leaves theta in (-pi/2, pi/2]; shift by a quarter turn into the small-angle range.
    if theta > math.pi / 4:
        theta -= math.pi / 2
    elif theta < -math.pi / 4:
        theta += math.pi / 2
    return theta


def rotated_variances(a, b, c_ab, theta):
    """Variances at the alpha and beta slots after rotating by ``theta``."""
    c, s = math.cos(theta), math.sin(theta)
    cs2 = 2.0 * c * s * c_ab
    return c * c * a + cs2 + s * s * b, s * s * a - cs2 + c * c * b


def rotate_covariance(C, alpha, beta, theta):
    """Rotate rows/columns ``alpha`` and ``beta`` of ``C`` in place, O(p)."""
    c, s = math.cos(theta), math.sin(theta)
    a, b, c_ab = C[alpha, alpha], C[beta, beta], C[alpha, beta]
    col_a = C[:, alpha].copy()
    col_b = C[:, beta]
    new_a = c * col_a + s * col_b
    new_b = -s * col_a + c * col_b
    C[:, alpha] = new_a
    C[:, beta] = new_b
    C[alpha, :] = new_a
    C[beta, :] = new_b
    va, vb = rotated_variances(a, b, c_ab, theta)
    C[alpha, alpha] = va
    C[beta, beta] = vb
    C[alpha, beta] = C[beta, alpha] = 0.0
    return va, vb


def rotate_columns(Y, alpha, beta, theta):
    """Apply the rotation to columns of ``Y`` (n x p, or a length-p vector) in place."""
    c, s = math.cos(theta), math.sin(theta)
    ya = Y[..., alpha].copy()
    yb = Y[..., beta].copy()
    Y[..., alpha] = c * ya + s * yb
    Y[..., beta] = -s * ya + c * yb


def unrotate_columns(Y, alpha, beta, theta):
    c, s = math.cos(theta), math.sin(theta)
    ua = Y[..., alpha].copy()
    vb = Y[..., beta].copy()
    Y[..., alpha] = c * ua - s * vb
    Y[..., beta] = s * ua + c * vb


# -- types -------------------------------------------------------------------


@dataclass(frozen=True)
class JacobiRotation:
    alpha: int
    beta: int
    theta: float
    sum_index: int
    var_sum: float = float("nan")
    var_diff: float = float("nan")

    @property
    def c(self):
        return math.cos(self.theta)

    @property
    def s(self):
        return math.sin(self.theta)

    @property
    def diff_index(self):
        return self.beta if self.sum_index == self.alpha else self.alpha


@dataclass(frozen=True)
class DendrogramNode:
    level: int
    alpha: int
    beta: int
    similarity: float
    theta: float
    var_sum: float
    var_diff: float
    sum_index: int


@dataclass(frozen=True)
class Dendrogram:
    nodes: tuple
    leaf_names: tuple

    @property
    def p(self):
        return len(self.leaf_names)

    def merges(self):
        """``(left_slot, right_slot, result_slot)`` triples in merge order."""
        return [(n.alpha, n.beta, n.sum_index) for n in self.nodes]

    def to_json(self):
        return {
            "leaf_names": list(self.leaf_names),
            "nodes": [
                {
                    "level": n.level,
                    "alpha": n.alpha,
                    "beta": n.beta,
                    "sum_index": n.sum_index,
                    "similarity": n.similarity,
                    "theta": n.theta,
                    "var_sum": n.var_sum,
                    "var_diff": n.var_diff,
                }
                for n in self.nodes
            ],
        }

    @classmethod
    def from_json(cls, obj):
        nodes = tuple(
            DendrogramNode(
                int(d["level"]), int(d["alpha"]), int(d["beta"]), float(d["similarity"]),
                float(d["theta"]), float(d["var_sum"]), float(d["var_diff"]), int(d["sum_index"]),
            )
            for d in obj["nodes"]
        )
        return cls(nodes, tuple(obj["leaf_names"]))

    def to_newick(self, comment=None):
        subtree = {i: newick.quote(name) for i, name in enumerate(self.leaf_names)}
        for n in self.nodes:
            ann = newick.annotation(level=n.level, similarity=repr(n.similarity))
            merged = f"({subtree[n.alpha]},{subtree[n.beta]}){ann}"
            del subtree[n.alpha], subtree[n.beta]
            subtree[n.sum_index] = merged
        return newick.finish([subtree[k] for k in sorted(subtree)], comment)


@dataclass(frozen=True, eq=False)
class TreeletBasis:
    """Fitted treelet transform.

    ``basis`` has the basis vectors as columns, so level-L coefficients of a
    sample ``x`` are ``basis.T @ x``. ``active_per_level[l]`` holds the sorted
    sum-variable slots after ``l`` rotations.
    """

    rotations: tuple
    p: int
    basis: np.ndarray
    active_per_level: tuple
    diff_indices: tuple
    var_names: tuple

    @property
    def levels(self):
        return len(self.rotations)

    @classmethod
    def from_rotations(cls, p, rotations, var_names=None):
        rotations = tuple(rotations)
        if var_names is None:
            var_names = tuple(f"v{i}" for i in range(p))
        active = list(range(p))
        per_level = [tuple(active)]
        diffs = []
        B = np.eye(p)
        for rot in rotations:
            rotate_columns(B, rot.alpha, rot.beta, rot.theta)
            active.remove(rot.diff_index)
            diffs.append(rot.diff_index)
            per_level.append(tuple(active))
        B.setflags(write=False)
        return cls(rotations, p, B, tuple(per_level), tuple(diffs), tuple(var_names))

    def basis_at(self, level):
        _check_level(self, level)
        B = np.eye(self.p)
        for rot in self.rotations[:level]:
            rotate_columns(B, rot.alpha, rot.beta, rot.theta)
        return B

    def to_json(self):
        return {
            "p": self.p,
            "var_names": list(self.var_names),
            "rotations": [
                {"alpha": r.alpha, "beta": r.beta, "theta": r.theta, "sum_index": r.sum_index}
                for r in self.rotations
            ],
        }

    @classmethod
    def from_json(cls, obj):
        rots = [
            JacobiRotation(int(r["alpha"]), int(r["beta"]), float(r["theta"]), int(r["sum_index"]))
            for r in obj["rotations"]
        ]
        return cls.from_rotations(int(obj["p"]), rots, obj.get("var_names"))


@dataclass(frozen=True)
class CoarseRepresentation:
    level: int
    coarse_indices: tuple
    coarse_coeffs: np.ndarray
    detail_indices: tuple
    detail_coeffs: np.ndarray
    detail_levels: tuple


@dataclass
class FitStep:
    """State right after one merge. ``cov`` is the live working matrix; copy it to keep it."""

    level: int
    rotation: JacobiRotation
    similarity: float
    cov: np.ndarray
    active: np.ndarray


# -- fitting -----------------------------------------------------------------


def _argmax_pair(score):
    # Row-major argmax on a symmetric matrix hits the lexicographically first (i, j), i < j.
    flat = int(np.argmax(score))
    i, j = divmod(flat, score.shape[1])
    return (i, j) if i < j else (j, i)


def _score_rows(C, rows, metric):
    if metric == COVARIANCE:
        return np.abs(C[rows, :])
    var = np.diag(C)
    out = np.zeros((len(rows), C.shape[0]))
    for k, r in enumerate(rows):
        denom = var[r] * var
        ok = denom > 0
        out[k, ok] = np.abs(C[r, ok]) / np.sqrt(denom[ok])
    return np.minimum(out, 1.0)


def _initial_score(C, metric):
    if metric == COVARIANCE:
        return np.abs(C)
    return _score_rows(C, list(range(C.shape[0])), metric)


def most_similar_pair(S):
    """Active pair ``(i, j)``, ``i < j``, of maximal similarity; ties go to the lexicographically first."""
    active = np.asarray(S.active, bool)
    if active.sum() < 2:
        raise TooFewActive(f"need at least 2 active variables, have {int(active.sum())}")
    score = np.abs(S.entries) if S.metric == COVARIANCE else np.array(S.entries, dtype=float)
    score[~active, :] = -np.inf
    score[:, ~active] = -np.inf
    np.fill_diagonal(score, -np.inf)
    return _argmax_pair(score)


def _choose_sum(alpha, beta, va, vb, retention):
    if retention == LOWINDEX:
        return alpha
    return beta if vb > va else alpha


def iter_fit(cov, level=None, metric=COVARIANCE, retention=MAXVAR):
    """Run the merge loop on covariance ``cov``, yielding a ``FitStep`` after each merge."""
    C = np.array(cov, dtype=float)
    p = C.shape[0]
    metric = resolve_metric(metric)
    retention = resolve_retention(retention)
    L = p - 1 if level is None else level
    if not (1 <= L <= p - 1):
        raise InvalidLevel(f"level must satisfy 1 <= L <= p-1 = {p - 1}, got {L}")
    active = np.ones(p, bool)
    score = _initial_score(C, metric)
    np.fill_diagonal(score, -np.inf)
    for lev in range(1, L + 1):
        alpha, beta = _argmax_pair(score)
        similarity = float(score[alpha, beta])
        theta = jacobi_angle(C[alpha, alpha], C[beta, beta], C[alpha, beta])
        va, vb = rotate_covariance(C, alpha, beta, theta)
        keep = _choose_sum(alpha, beta, va, vb, retention)
        drop = beta if keep == alpha else alpha
        var_sum, var_diff = (va, vb) if keep == alpha else (vb, va)
        active[drop] = False

        rows = _score_rows(C, [alpha, beta], metric)
        score[[alpha, beta], :] = rows
        score[:, [alpha, beta]] = rows.T
        score[drop, :] = -np.inf
        score[:, drop] = -np.inf
        score[keep, ~active] = -np.inf
        score[~active, keep] = -np.inf
        score[keep, keep] = -np.inf

        rot = JacobiRotation(alpha, beta, theta, keep, float(var_sum), float(var_diff))
        yield FitStep(lev, rot, similarity, C, active)


def fit_covariance(cov, level=None, metric=COVARIANCE, retention=MAXVAR, var_names=None):
    """Fit from a precomputed covariance matrix; returns ``(TreeletBasis, Dendrogram)``."""
    cov = np.asarray(cov, dtype=float)
    p = cov.shape[0]
    rotations = []
    nodes = []
    for step in iter_fit(cov, level, metric, retention):
        r = step.rotation
        rotations.append(r)
        nodes.append(
            DendrogramNode(step.level, r.alpha, r.beta, step.similarity, r.theta, r.var_sum, r.var_diff, r.sum_index)
        )
    if var_names is None:
        var_names = tuple(f"v{i}" for i in range(p))
    basis = TreeletBasis.from_rotations(p, rotations, var_names)
    return basis, Dendrogram(tuple(nodes), tuple(var_names))


def treelet_fit(X, level=None, metric=COVARIANCE, retention=MAXVAR):
    """Fit a treelet basis with ``level`` merges (default: full tree, p - 1)."""
    if X.n < 2:
        raise InsufficientSamples(X.n)
    return fit_covariance(covariance_matrix(X.values), level, metric, retention, X.var_names)


# -- transforms --------------------------------------------------------------


def _check_level(basis, level):
    if not (0 <= level <= basis.levels):
        raise InvalidLevel(f"level must be in [0, {basis.levels}], got {level}")


def _check_dim(basis, arr):
    if arr.shape[-1] != basis.p:
        raise DimensionMismatch(f"expected {basis.p} variables, got {arr.shape[-1]}")


def transform(basis, values, level=None):
    """Coefficients of every row of ``values`` after the first ``level`` rotations, slot-indexed."""
    level = basis.levels if level is None else level
    _check_level(basis, level)
    Y = np.array(values, dtype=float)
    _check_dim(basis, Y)
    for rot in basis.rotations[:level]:
        rotate_columns(Y, rot.alpha, rot.beta, rot.theta)
    return Y


def forward(basis, x, level):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("forward expects a single length-p vector")
    y = transform(basis, x, level)
    coarse = basis.active_per_level[level]
    detail = basis.diff_indices[:level]
    return CoarseRepresentation(
        level,
        coarse,
        y[list(coarse)],
        detail,
        y[list(detail)],
        tuple(range(1, level + 1)),
    )


def inverse(basis, rep):
    _check_level(basis, rep.level)
    coarse = tuple(rep.coarse_indices)
    detail = tuple(rep.detail_indices)
    if (
        len(coarse) + len(detail) != basis.p
        or len(rep.coarse_coeffs) != len(coarse)
        or len(rep.detail_coeffs) != len(detail)
        or coarse != basis.active_per_level[rep.level]
        or detail != basis.diff_indices[: rep.level]
    ):
        raise DimensionMismatch("representation does not match the basis at this level")
    y = np.empty(basis.p)
    y[list(coarse)] = rep.coarse_coeffs
    y[list(detail)] = rep.detail_coeffs
    for rot in reversed(basis.rotations[: rep.level]):
        unrotate_columns(y, rot.alpha, rot.beta, rot.theta)
    return y


def coefficient_variances(basis, X, level):
    Y = transform(basis, X.values, level)
    if X.n < 2:
        raise InsufficientSamples(X.n)
    return Y.var(axis=0, ddof=1)


def rank_by_variance(variances):
    # Stable sort on -variance keeps lower indices first among ties.
    return np.argsort(-np.asarray(variances), kind="stable")


def select_features(basis, X, K, level=None):
    """Indices of the ``K`` highest-variance coefficients at ``level``."""
    if not (1 <= K <= basis.p):
        raise InvalidK(f"K must satisfy 1 <= K <= p = {basis.p}, got {K}")
    level = basis.levels if level is None else level
    return [int(i) for i in rank_by_variance(coefficient_variances(basis, X, level))[:K]]
