"""Pure numpy versions of the COO kernels in ``_kernels.pyx``.

Same signatures and accumulate-into-``out`` contract.
"""
import numpy as np


def left_matmul(rows, cols, vals, x, out):
    """out += x @ A, with A given by (rows, cols, vals)."""
    nb, ncols = out.shape
    if nb == 0 or len(vals) == 0:
        return
    contrib = x[:, rows] * vals
    flat = (np.arange(nb, dtype=np.int64)[:, None] * ncols + cols).ravel()
    out += np.bincount(flat, weights=contrib.ravel(), minlength=nb * ncols).reshape(nb, ncols)


def right_matmul(rows, cols, vals, x, out):
    """out += A @ x, with A given by (rows, cols, vals)."""
    nrows, k = out.shape
    if k == 0 or len(vals) == 0:
        return
    contrib = vals[:, None] * x[cols]
    flat = (rows[:, None] * k + np.arange(k, dtype=np.int64)).ravel()
    out += np.bincount(flat, weights=contrib.ravel(), minlength=nrows * k).reshape(nrows, k)
