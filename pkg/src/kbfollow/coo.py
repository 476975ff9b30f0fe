"""Sparse coordinate-pair (COO) matrices and sparse-dense products."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionMismatch


@dataclass(frozen=True, eq=False)
class CooMatrix:
    """Immutable COO matrix with unique entries sorted row-major.

    ``rows``/``cols`` are the two columns of the index matrix and ``vals``
    the parallel weight vector. Use :meth:`from_entries` to build one;
    the raw constructor trusts its inputs.
    """

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @classmethod
    def from_entries(cls, shape, rows, cols, vals, sum_duplicates=False) -> CooMatrix:
        n_rows, n_cols = (int(s) for s in shape)
        rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(cols, dtype=np.int64).reshape(-1)
        vals = np.asarray(vals, dtype=np.float64).reshape(-1)
        if not (len(rows) == len(cols) == len(vals)):
            raise DimensionMismatch("rows, cols and vals must have equal length")
        if len(rows) and (rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols):
            raise DimensionMismatch(f"entry index out of bounds for shape {(n_rows, n_cols)}")
        keys = rows * n_cols + cols
        order = np.argsort(keys, kind="stable")
        keys, rows, cols, vals = keys[order], rows[order], cols[order], vals[order]
        if len(keys) > 1:
            dup = keys[1:] == keys[:-1]
            if dup.any():
                if not sum_duplicates:
                    raise ValueError("duplicate COO entries")
                starts = np.flatnonzero(np.concatenate(([True], ~dup)))
                vals = np.add.reduceat(vals, starts)
                rows, cols = rows[starts], cols[starts]
        return cls(n_rows, n_cols, rows, cols, vals)

    @classmethod
    def empty(cls, shape) -> CooMatrix:
        return cls.from_entries(shape, [], [], [])

    @classmethod
    def identity(cls, n) -> CooMatrix:
        idx = np.arange(n)
        return cls.from_entries((n, n), idx, idx, np.ones(n))

    @classmethod
    def from_dense(cls, a) -> CooMatrix:
        a = np.asarray(a, dtype=np.float64)
        r, c = np.nonzero(a)
        return cls.from_entries(a.shape, r, c, a[r, c])

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return len(self.vals)

    @property
    def ind(self) -> np.ndarray:
        """The nnz x 2 index matrix."""
        return np.stack([self.rows, self.cols], axis=1)

    @property
    def w(self) -> np.ndarray:
        return self.vals

    @property
    def T(self) -> CooMatrix:
        return CooMatrix.from_entries((self.n_cols, self.n_rows), self.cols, self.rows, self.vals)

    def get(self, i, j) -> float:
        key = i * self.n_cols + j
        keys = self.rows * self.n_cols + self.cols
        pos = np.searchsorted(keys, key)
        if pos < len(keys) and keys[pos] == key:
            return float(self.vals[pos])
        return 0.0

    def scaled(self, s) -> CooMatrix:
        return CooMatrix(self.n_rows, self.n_cols, self.rows, self.cols, self.vals * s)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.vals
        return out

    def __eq__(self, other):
        if not isinstance(other, CooMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.vals, other.vals)
        )

    def __repr__(self):
        return f"CooMatrix(shape={self.shape}, nnz={self.nnz})"


def _as_2d(x):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    return np.ascontiguousarray(x), squeeze


def spmm(a: CooMatrix, x, transpose=False) -> np.ndarray:
    """Sparse-dense product ``a @ x`` (or ``a.T @ x`` with ``transpose``)."""
    x2, squeeze = _as_2d(x)
    rows, cols = (a.cols, a.rows) if transpose else (a.rows, a.cols)
    n_out, n_in = (a.n_cols, a.n_rows) if transpose else (a.n_rows, a.n_cols)
    if x2.shape[0] != n_in:
        raise DimensionMismatch(f"cannot multiply {a.shape}{'^T' if transpose else ''} by {x2.shape}")
    out = np.zeros((n_out, x2.shape[1]))
    kernels.right_matmul(rows, cols, a.vals, x2, out)
    return out[:, 0] if squeeze else out


def dsmm(x, a: CooMatrix, transpose=False) -> np.ndarray:
    """Dense-sparse product ``x @ a`` (or ``x @ a.T`` with ``transpose``).

    This is the orientation used for row-stacked minibatches of set vectors.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    x2 = np.ascontiguousarray(x[None, :] if squeeze else x)
    rows, cols = (a.cols, a.rows) if transpose else (a.rows, a.cols)
    n_in, n_out = (a.n_cols, a.n_rows) if transpose else (a.n_rows, a.n_cols)
    if x2.shape[1] != n_in:
        raise DimensionMismatch(f"cannot multiply {x2.shape} by {a.shape}{'^T' if transpose else ''}")
    out = np.zeros((x2.shape[0], n_out))
    kernels.left_matmul(rows, cols, a.vals, x2, out)
    return out[0] if squeeze else out
