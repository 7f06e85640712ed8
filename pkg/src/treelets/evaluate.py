"""Evaluation: variance-capture curves, dendrogram purity, and the cross-validation leakage experiment."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .baselines import hc_fit, dissimilarity_from_covariance, pca_fit
from .core import (
    COVARIANCE,
    MAXVAR,
    coefficient_variances,
    rank_by_variance,
    select_features,
    transform,
    treelet_fit,
)
from .data import DataMatrix, SimilarityMatrix, covariance_matrix
from .errors import DegenerateFold, DimensionMismatch, InvalidFolds, InvalidK, LabelMismatch

CLEAN = "clean"
LEAKY = "leaky"

_MIXED = object()


@dataclass(frozen=True)
class EnergyCurve:
    points: tuple

    @property
    def fractions(self):
        return np.array([f for _, f in self.points])

    def to_json(self):
        return [[k, f] for k, f in self.points]


def _curve_from_variances(variances):
    variances = np.sort(np.clip(np.asarray(variances, dtype=float), 0.0, None))[::-1]
    p = len(variances)
    total = variances.sum()
    if total <= 0:
        return EnergyCurve(tuple((k, k / p) for k in range(p + 1)))
    cum = np.concatenate([[0.0], np.cumsum(variances) / total])
    cum[-1] = 1.0
    return EnergyCurve(tuple((k, float(f)) for k, f in enumerate(cum)))


def energy_curve(basis, X, level=None):
    """Fraction of total variance captured by the top-K coefficients, K = 0..p."""
    if X.p != basis.p:
        raise DimensionMismatch(f"basis has p={basis.p}, data has p={X.p}")
    level = basis.levels if level is None else level
    return _curve_from_variances(coefficient_variances(basis, X, level))


def pca_energy_curve(model):
    return _curve_from_variances(model.eigenvalues)


# -- purity ------------------------------------------------------------------


@dataclass(frozen=True)
class PurityScore:
    value: float
    merges_evaluated: int
    per_block: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "value": self.value,
            "merges_evaluated": self.merges_evaluated,
            "per_block": {str(k): v for k, v in self.per_block.items()},
        }


def _merge_triples(tree):
    if hasattr(tree, "merge_triples"):
        return tree.merge_triples()
    return tree.merges()


def merge_purity(tree, labels):
    """Share of the first ``p - #blocks`` merges that join two parts of the same block.

    A merged node keeps its label only if both parts had it; otherwise it turns
    "mixed" and every later merge involving it is impure. Works for treelet
    dendrograms and HC trees.
    """
    labels = list(labels)
    if len(labels) != tree.p:
        raise LabelMismatch(f"{len(labels)} labels for {tree.p} variables")
    blocks = sorted(set(labels), key=repr)
    budget = tree.p - len(blocks)
    triples = _merge_triples(tree)[:budget]
    label_of = dict(enumerate(labels))
    seen = {i: {lab} for i, lab in enumerate(labels)}
    detail = {b: {"pure": 0, "impure": 0} for b in blocks}
    pure = 0
    for left, right, result in triples:
        a, b = label_of.pop(left), label_of.pop(right)
        members = seen.pop(left) | seen.pop(right)
        if a is not _MIXED and a == b:
            pure += 1
            detail[a]["pure"] += 1
            label_of[result] = a
        else:
            for blk in members:
                detail[blk]["impure"] += 1
            label_of[result] = _MIXED
        seen[result] = members
    value = pure / len(triples) if triples else 1.0
    return PurityScore(value, len(triples), detail)


# -- nearest-centroid cross-validation ---------------------------------------


@dataclass(frozen=True, eq=False)
class CvReport:
    mode: str
    folds: int
    K: int
    fold_accuracies: tuple
    mean_accuracy: float
    chance_interval: tuple
    seed: int
    features: tuple = ()
    bases: tuple = ()

    @property
    def inside_chance(self):
        lo, hi = self.chance_interval
        return lo <= self.mean_accuracy <= hi

    def to_json(self):
        return {
            "mode": self.mode,
            "folds": self.folds,
            "K": self.K,
            "seed": self.seed,
            "fold_accuracies": list(self.fold_accuracies),
            "mean_accuracy": self.mean_accuracy,
            "chance_interval": list(self.chance_interval),
            "inside_chance": self.inside_chance,
            "features": [list(f) for f in self.features],
        }


def chance_interval(n, p0=0.5, level=0.95):
    """Central binomial interval for the accuracy of ``n`` coin-flip predictions."""
    tail = (1.0 - level) / 2
    lo = stats.binom.ppf(tail, n, p0) / n
    hi = stats.binom.ppf(1.0 - tail, n, p0) / n
    return float(lo), float(hi)


def stratified_folds(y, folds, seed):
    """Fold id per row. Classes are shuffled separately and dealt round-robin."""
    y = np.asarray(y)
    if not (2 <= folds <= len(y)):
        raise InvalidFolds(f"need 2 <= folds <= n = {len(y)}, got {folds}")
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(y), dtype=int)
    offset = 0
    for cls in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == cls))
        assignment[idx] = (offset + np.arange(len(idx))) % folds
        offset += len(idx)
    for f in range(folds):
        train = y[assignment != f]
        if len(np.unique(train)) < len(np.unique(y)):
            raise DegenerateFold(f"a class is absent from the training rows of fold {f}")
    return assignment


def _centroid_predict(train, y_train, test):
    classes = np.unique(y_train)
    centroids = np.stack([train[y_train == c].mean(axis=0) for c in classes])
    dist = ((test[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return classes[np.argmin(dist, axis=1)]


def _fit_and_select(X_train, K, level, metric, retention):
    basis, _ = treelet_fit(X_train, level, metric, retention)
    feats = select_features(basis, X_train, K, basis.levels)
    return basis, feats


def nearest_centroid_cv(
    X, y, K, folds=5, mode=CLEAN, seed=0, level=None, metric=COVARIANCE, retention=MAXVAR, threads=1
):
    """Cross-validated nearest-centroid accuracy on the top-K treelet coefficients.

    ``clean`` fits the treelet and picks features inside each training fold.
    ``leaky`` does both once on every row before splitting, so held-out rows
    shape the representation they are later scored on.
    """
    y = np.asarray(y)
    if len(y) != X.n:
        raise LabelMismatch(f"{len(y)} labels for {X.n} samples")
    if mode not in (CLEAN, LEAKY):
        raise ValueError(f"unknown mode {mode!r}")
    if not (1 <= K <= X.p):
        raise InvalidK(f"K must satisfy 1 <= K <= p = {X.p}, got {K}")
    assignment = stratified_folds(y, folds, seed)

    shared = _fit_and_select(X, K, level, metric, retention) if mode == LEAKY else None

    def run_fold(f):
        train = np.flatnonzero(assignment != f)
        test = np.flatnonzero(assignment == f)
        if shared is None:
            basis, feats = _fit_and_select(X.take_rows(train), K, level, metric, retention)
        else:
            basis, feats = shared
        coeffs = transform(basis, X.values)[:, feats]
        pred = _centroid_predict(coeffs[train], y[train], coeffs[test])
        return float(np.mean(pred == y[test])), basis, tuple(feats)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_fold, range(folds)))
    else:
        results = [run_fold(f) for f in range(folds)]

    accs = tuple(r[0] for r in results)
    return CvReport(
        mode,
        folds,
        K,
        accs,
        float(np.mean(accs)),
        chance_interval(len(y)),
        seed,
        tuple(r[2] for r in results),
        tuple(r[1] for r in results),
    )


def random_labels(n, seed):
    """Balanced random binary labels."""
    rng = np.random.default_rng(seed)
    return rng.permutation(np.arange(n) % 2)


def two_class_gaussian(n, p, shift, seed):
    """Two Gaussian classes (identity covariance) whose means differ by ``shift`` in every variable."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    values = rng.standard_normal((n, p)) + shift * y[:, None]
    return DataMatrix.from_array(values), y


def leakage_trial(seed, n=40, p=200, K=10, folds=5, metric=COVARIANCE, retention=MAXVAR):
    """One paired clean/leaky run on pure-noise data with random labels."""
    rng = np.random.default_rng([seed, 1])
    X = DataMatrix.from_array(rng.standard_normal((n, p)))
    y = random_labels(n, [seed, 2])
    clean = nearest_centroid_cv(X, y, K, folds, CLEAN, seed, metric=metric, retention=retention)
    leaky = nearest_centroid_cv(X, y, K, folds, LEAKY, seed, metric=metric, retention=retention)
    return clean, leaky


# -- comparison report -------------------------------------------------------


def block_support(model, labels):
    """For every PCA component, the share of its squared loading inside its heaviest block."""
    labels = np.asarray(labels)
    blocks = np.unique(labels)
    out = []
    for k in range(model.components.shape[1]):
        sq = model.components[:, k] ** 2
        out.append(float(max(sq[labels == b].sum() for b in blocks) / sq.sum()))
    return out


def compare_report(X, labels=None, metric=COVARIANCE, retention=MAXVAR, linkage="average", timing=False):
    """Run treelet, PCA and HC on the same data and summarize them side by side."""
    timings = {}

    t0 = time.perf_counter()
    basis, dend = treelet_fit(X, None, metric, retention)
    timings["treelet"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cov = covariance_matrix(X.values)
    model = pca_fit(SimilarityMatrix(cov, COVARIANCE))
    timings["pca"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tree = hc_fit(dissimilarity_from_covariance(cov), linkage, X.var_names)
    timings["hc"] = time.perf_counter() - t0

    top_slot = int(rank_by_variance(coefficient_variances(basis, X, basis.levels))[0])
    treelet_top = basis.basis[:, top_slot]
    first_t = sorted(dend.merges()[0][:2])
    first_h = sorted(tree.merge_triples()[0][:2])
    report = {
        "n": X.n,
        "p": X.p,
        "treelet": {
            "metric": metric,
            "retention": retention,
            "energy": energy_curve(basis, X).to_json(),
            "first_merge": first_t,
            "top_vector": [float(v) for v in treelet_top],
        },
        "pca": {
            "eigenvalues": [float(v) for v in model.eigenvalues],
            "energy": pca_energy_curve(model).to_json(),
            "top_vector": [float(v) for v in model.components[:, 0]],
        },
        "hc": {"linkage": linkage, "first_merge": first_h},
        "agreement": {
            "first_merge": first_t == first_h,
            "top_direction": bool(abs(float(treelet_top @ model.components[:, 0])) > 1 - 1e-9),
        },
    }
    if labels is not None:
        report["treelet"]["purity"] = merge_purity(dend, labels).to_json()
        report["hc"]["purity"] = merge_purity(tree, labels).to_json()
        report["pca"]["block_support"] = block_support(model, labels)
    if timing:
        report["timing_seconds"] = timings
    return report
