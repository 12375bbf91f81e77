"""Immutable point collections: loaders, writers, and a mixture generator.

A :class:`Dataset` stores n points in R^d either as a dense row-major
float64 matrix or as a CSR sparse matrix, together with precomputed
per-point squared norms.  The norms let squared distances be evaluated
through the expanded form ``||x-c||^2 = ||x||^2 - 2 x.c + ||c||^2``,
which costs O(nnz(x)) per sparse point instead of O(d).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

NORM_RTOL = 1e-12


class DataFormatError(ValueError):
    """An input file violates the expected on-disk format."""


def _sq_norms_dense(x: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", x, x)


class Dataset:
    """Immutable collection of n points with cached squared norms.

    Construct via :meth:`from_dense` or :meth:`from_sparse`; the
    constructor validates shape, finiteness, and the norm cache.
    Instances are safe to share read-only across concurrent runs.
    """

    __slots__ = ("n", "d", "_dense", "_sparse", "sq_norms")

    def __init__(self, dense: np.ndarray | None, sparse: sp.csr_matrix | None):
        if (dense is None) == (sparse is None):
            raise ValueError("exactly one of dense/sparse storage must be given")
        if dense is not None:
            dense = np.ascontiguousarray(dense, dtype=np.float64)
            if dense.ndim != 2:
                raise ValueError("dense storage must be a 2-D matrix")
            if not np.isfinite(dense).all():
                raise ValueError("dataset contains NaN or Inf")
            self.n, self.d = dense.shape
            self.sq_norms = _sq_norms_dense(dense)
        else:
            sparse = sparse.tocsr().astype(np.float64, copy=False)
            if not np.isfinite(sparse.data).all():
                raise ValueError("dataset contains NaN or Inf")
            self.n, self.d = sparse.shape
            self.sq_norms = np.asarray(sparse.multiply(sparse).sum(axis=1)).ravel()
        if self.n < 1 or self.d < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got n={self.n}, d={self.d}")
        self._dense = dense
        self._sparse = sparse
        if dense is not None:
            dense.setflags(write=False)
        self.sq_norms.setflags(write=False)

    @classmethod
    def from_dense(cls, x) -> "Dataset":
        return cls(np.array(x, dtype=np.float64, ndmin=2), None)

    @classmethod
    def from_sparse(cls, matrix: sp.spmatrix) -> "Dataset":
        return cls(None, matrix)

    @property
    def is_sparse(self) -> bool:
        return self._sparse is not None

    def matmul(self, m: np.ndarray) -> np.ndarray:
        """X @ m for a dense (d, k) matrix; returns a dense (n, k) array."""
        if self._dense is not None:
            return self._dense @ m
        return np.asarray(self._sparse @ m)

    def rows(self, idx: np.ndarray | None = None):
        """Row submatrix in native storage (dense ndarray or CSR)."""
        mat = self._dense if self._dense is not None else self._sparse
        return mat if idx is None else mat[idx]

    def rows_dense(self, idx: np.ndarray | None = None) -> np.ndarray:
        """Row submatrix materialized densely."""
        rows = self.rows(idx)
        return rows if isinstance(rows, np.ndarray) else np.asarray(rows.todense())

    def to_dense(self) -> np.ndarray:
        return self.rows_dense()

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate-wise (min, max) over all points."""
        if self._dense is not None:
            return self._dense.min(axis=0), self._dense.max(axis=0)
        lo = np.asarray(self._sparse.min(axis=0).todense()).ravel()
        hi = np.asarray(self._sparse.max(axis=0).todense()).ravel()
        return lo, hi

    def check_norm_cache(self, rtol: float = NORM_RTOL) -> bool:
        """True iff the cached squared norms match recomputation within rtol."""
        if self._dense is not None:
            fresh = _sq_norms_dense(self._dense)
        else:
            fresh = np.asarray(self._sparse.multiply(self._sparse).sum(axis=1)).ravel()
        scale = 1.0 + np.abs(fresh)
        return bool(np.all(np.abs(fresh - self.sq_norms) <= rtol * scale))

    def __repr__(self) -> str:
        kind = "sparse" if self.is_sparse else "dense"
        return f"Dataset(n={self.n}, d={self.d}, {kind})"


# ---------------------------------------------------------------------------
# dense CSV


def load_dense_csv(path) -> Dataset:
    """Load a dense dataset from comma-separated text, one point per line.

    No header; every line must carry the same number of numeric fields.
    Raises :class:`DataFormatError` with a line number on ragged or
    non-numeric rows, and on empty files.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    rows = []
    d = None
    for lineno, line in enumerate(lines, start=1):
        fields = line.split(",")
        if d is None:
            d = len(fields)
        elif len(fields) != d:
            raise DataFormatError(
                f"{path}: line {lineno}: expected {d} fields, got {len(fields)}"
            )
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
    return Dataset.from_dense(np.array(rows, dtype=np.float64))


def write_dense_csv(ds: Dataset, path) -> None:
    """Write a dataset as dense CSV with 17 significant digits."""
    x = ds.rows_dense()
    with open(path, "w", encoding="utf-8") as fh:
        for row in x:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


# ---------------------------------------------------------------------------
# svmlight / libsvm


def load_svmlight(path, d: int | None = None) -> Dataset:
    """Load a sparse dataset in svmlight/libsvm text format.

    Lines are ``<label> idx:val idx:val ...`` with 1-based, strictly
    increasing indices; the label is ignored.  The dimension is the
    largest index seen unless ``d`` overrides it.
    """
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    max_idx = 0
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens:
            raise DataFormatError(f"{path}: line {lineno}: blank line")
        prev_idx = 0
        for tok in tokens[1:]:
            # comments are not part of the accepted dialect
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise DataFormatError(
                    f"{path}: line {lineno}: malformed feature {tok!r}"
                )
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
            if idx < 1:
                raise DataFormatError(
                    f"{path}: line {lineno}: index {idx} < 1 (indices are 1-based)"
                )
            if idx <= prev_idx:
                raise DataFormatError(
                    f"{path}: line {lineno}: indices not strictly increasing "
                    f"({prev_idx} then {idx})"
                )
            prev_idx = idx
            indices.append(idx - 1)
            values.append(val)
        max_idx = max(max_idx, prev_idx)
        indptr.append(len(indices))
    if d is None:
        d = max_idx
        if d == 0:
            raise DataFormatError(f"{path}: no features seen, pass d explicitly")
    elif max_idx > d:
        raise DataFormatError(f"{path}: index {max_idx} exceeds declared d={d}")
    matrix = sp.csr_matrix(
        (np.array(values, dtype=np.float64),
         np.array(indices, dtype=np.int64),
         np.array(indptr, dtype=np.int64)),
        shape=(len(indptr) - 1, d),
    )
    return Dataset.from_sparse(matrix)


def write_svmlight(ds: Dataset, path) -> None:
    """Write a dataset in svmlight format (label 0, nonzero entries only)."""
    with open(path, "w", encoding="utf-8") as fh:
        if ds.is_sparse:
            mat = ds.rows()
            for i in range(ds.n):
                lo, hi = mat.indptr[i], mat.indptr[i + 1]
                pairs = " ".join(
                    f"{j + 1}:{v:.17g}"
                    for j, v in zip(mat.indices[lo:hi], mat.data[lo:hi])
                )
                fh.write(f"0 {pairs}".rstrip() + "\n")
        else:
            x = ds.rows()
            for row in x:
                nz = np.nonzero(row)[0]
                pairs = " ".join(f"{j + 1}:{row[j]:.17g}" for j in nz)
                fh.write(f"0 {pairs}".rstrip() + "\n")


# ---------------------------------------------------------------------------
# synthetic Gaussian mixtures


@dataclass(frozen=True)
class MixtureSpec:
    """Isotropic Gaussian mixture: component weights, means, and spreads.

    ``sigmas[r]`` may be zero (a point mass at the component mean).
    """

    k: int
    d: int
    weights: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        object.__setattr__(self, "means", np.asarray(self.means, dtype=np.float64))
        object.__setattr__(self, "sigmas", np.asarray(self.sigmas, dtype=np.float64))
        if self.k < 1 or self.d < 1:
            raise ValueError("need k >= 1 and d >= 1")
        if self.weights.shape != (self.k,) or np.any(self.weights < 0):
            raise ValueError("invalid simplex weights")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise ValueError("invalid simplex weights: must sum to 1 within 1e-12")
        if self.means.shape != (self.k, self.d):
            raise ValueError(f"means must be {self.k}x{self.d}")
        if self.sigmas.shape != (self.k,) or np.any(self.sigmas < 0):
            raise ValueError("sigmas must be non-negative, one per component")


def mixture_from_toml(path) -> MixtureSpec:
    """Read a MixtureSpec from TOML (keys: k, d, weights, means, sigmas, seed)."""
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    return mixture_from_mapping(doc)


def mixture_from_mapping(doc: dict) -> MixtureSpec:
    try:
        return MixtureSpec(
            k=int(doc["k"]),
            d=int(doc["d"]),
            weights=np.asarray(doc["weights"], dtype=np.float64),
            means=np.asarray(doc["means"], dtype=np.float64),
            sigmas=np.asarray(doc["sigmas"], dtype=np.float64),
            seed=int(doc["seed"]),
        )
    except KeyError as exc:
        raise DataFormatError(f"mixture spec missing key {exc}") from None


def generate_gauss(spec: MixtureSpec, n: int):
    """Draw n i.i.d. points from the mixture; returns (Dataset, true labels).

    Point i is ``means[r] + sigmas[r] * z`` with component r chosen by the
    weights and z standard normal.  Deterministic given ``spec.seed``.
    """
    if n < spec.k:
        raise ValueError(f"need n >= k, got n={n}, k={spec.k}")
    rng = np.random.default_rng(spec.seed)
    comps = rng.choice(spec.k, size=n, p=spec.weights)
    noise = rng.standard_normal((n, spec.d))
    x = spec.means[comps] + spec.sigmas[comps, None] * noise
    ds = Dataset.from_dense(x)
    from .geometry import Clustering

    return ds, Clustering.from_labels(comps.astype(np.int64), spec.k)
