"""Data matrices, similarity estimation and global normalization."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateName,
    EmptyMatrix,
    InsufficientSamples,
    MissingFile,
    NonNumericCell,
    RaggedRow,
    ScaleError,
)

LOG = "log"
RAW = "raw"

COVARIANCE = "covariance"
ABS_CORRELATION = "abs_correlation"


@dataclass(frozen=True)
class DataMatrix:
    """n samples (rows, slides) by p variables (columns, genes).

    ``scale`` is ``"log"`` unless the values are raw expression levels.
    """

    values: np.ndarray
    var_names: tuple
    scale: str = LOG

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise EmptyMatrix(f"expected a non-empty 2-D matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            r, c = np.argwhere(~np.isfinite(values))[0]
            raise NonNumericCell(int(r), int(c), str(values[r, c]))
        names = tuple(str(v) for v in self.var_names)
        if len(names) != values.shape[1]:
            raise DuplicateName(f"{len(names)} names for {values.shape[1]} columns")
        if len(set(names)) != len(names):
            raise DuplicateName("variable names must be unique")
        if self.scale not in (LOG, RAW):
            raise ValueError(f"unknown scale {self.scale!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "var_names", names)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    @classmethod
    def from_array(cls, values, var_names=None, scale=LOG):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if var_names is None:
            var_names = [f"v{i}" for i in range(values.shape[1])]
        return cls(values, tuple(var_names), scale)

    def take_rows(self, rows):
        return DataMatrix(self.values[np.asarray(rows)], self.var_names, self.scale)


@dataclass(frozen=True)
class SimilarityMatrix:
    entries: np.ndarray
    metric: str
    active: np.ndarray = field(default=None)

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"similarity matrix must be square, got {entries.shape}")
        if self.metric not in (COVARIANCE, ABS_CORRELATION):
            raise ValueError(f"unknown metric {self.metric!r}")
        active = self.active
        active = np.ones(entries.shape[0], bool) if active is None else np.array(active, bool)
        entries.setflags(write=False)
        active.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "active", active)

    @property
    def p(self):
        return self.entries.shape[0]


def _parse_metadata(line):
    body = line.lstrip("#").strip()
    key, sep, value = body.partition(":")
    if not sep:
        return None, None
    return key.strip(), value.strip()


def parse_csv(text):
    """Parse CSV text into a DataMatrix.

    Lines starting with ``#`` before the header are metadata of the form
    ``# key: value``; ``# scale: raw`` marks raw-scale values.
    Returns ``(matrix, metadata)``.
    """
    lines = text.splitlines()
    metadata = {}
    start = 0
    while start < len(lines) and lines[start].startswith("#"):
        key, value = _parse_metadata(lines[start])
        if key is not None:
            metadata[key] = value
        start += 1
    body = [ln for ln in lines[start:]]
    while body and not body[-1].strip():
        body.pop()
    if not body:
        raise EmptyMatrix("missing header row")
    rows = list(csv.reader(io.StringIO("\n".join(body))))
    header = [h.strip() for h in rows[0]]
    p = len(header)
    data = rows[1:]
    if not data:
        raise EmptyMatrix()
    values = np.empty((len(data), p))
    for r, row in enumerate(data):
        if len(row) != p:
            raise RaggedRow(r, p, len(row))
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise NonNumericCell(r, c, cell) from None
            if not math.isfinite(v):
                raise NonNumericCell(r, c, cell)
            values[r, c] = v
    scale = metadata.get("scale", LOG)
    if scale not in (LOG, RAW):
        raise ScaleError(f"unknown scale {scale!r} in CSV metadata")
    return DataMatrix(values, tuple(header), scale), metadata


def load_csv(path):
    if not os.path.isfile(path):
        raise MissingFile(path)
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    return parse_csv(text)[0]


def format_csv(X, metadata=None):
    """Render ``X`` in the format ``parse_csv`` reads back bit-exactly."""
    out = []
    meta = dict(metadata or {})
    if X.scale == RAW:
        meta = {"scale": RAW, **meta}
    for key, value in meta.items():
        out.append(f"# {key}: {value}")
    out.append(",".join(X.var_names))
    for row in X.values:
        out.append(",".join(repr(float(v)) for v in row))
    return "\n".join(out) + "\n"


def _check_samples(X):
    if X.n < 2:
        raise InsufficientSamples(X.n)


def covariance_matrix(values):
    """Unbiased (n - 1) sample covariance of the columns of ``values``, exactly symmetric."""
    values = np.asarray(values, dtype=float)
    centered = values - values.mean(axis=0)
    cov = centered.T @ centered / (values.shape[0] - 1)
    return (cov + cov.T) / 2


def abs_correlation_from_cov(cov):
    """``|cov_ij| / sqrt(var_i var_j)``; zero-variance variables get 0 off the diagonal."""
    cov = np.asarray(cov, dtype=float)
    var = np.diag(cov).copy()
    positive = var > 0
    scale = np.zeros_like(var)
    scale[positive] = 1.0 / np.sqrt(var[positive])
    corr = np.abs(cov) * scale[:, None] * scale[None, :]
    np.clip(corr, 0.0, 1.0, out=corr)
    corr[np.diag_indices_from(corr)] = np.where(positive, 1.0, 0.0)
    return (corr + corr.T) / 2


def sample_covariance(X):
    _check_samples(X)
    return SimilarityMatrix(covariance_matrix(X.values), COVARIANCE)


def sample_correlation(X):
    _check_samples(X)
    return SimilarityMatrix(abs_correlation_from_cov(covariance_matrix(X.values)), ABS_CORRELATION)


def global_normalize(X):
    """Center every slide (row) on its mean over all genes."""
    if X.scale != LOG:
        raise ScaleError("global normalization assumes log-scale values; apply log_transform first")
    values = X.values - X.values.mean(axis=1, keepdims=True)
    return DataMatrix(values, X.var_names, X.scale)
