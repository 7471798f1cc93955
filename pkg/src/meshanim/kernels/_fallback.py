"""Numpy implementation of the spiral gather/scatter kernels.

``scatter_add`` accumulates with ``np.add.at`` per batch item in row-major
(n, l) order, which is the exact addition order of the compiled kernel, so
the two backends agree bitwise.
"""

import numpy as np


def gather(values: np.ndarray, table: np.ndarray, sentinel: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    b, r, c = values.shape
    n, l = table.shape
    padded = np.concatenate([values, np.zeros((b, 1, c))], axis=1)
    safe = np.where(table == sentinel, r, table)
    return padded[:, safe, :].reshape(b, n, l * c)


def scatter_add(grad: np.ndarray, table: np.ndarray, sentinel: int, rows: int) -> np.ndarray:
    grad = np.asarray(grad, dtype=np.float64)
    b, n, lc = grad.shape
    l = table.shape[1]
    c = lc // l
    safe = np.where(table == sentinel, rows, table).reshape(-1)
    out = np.zeros((b, rows + 1, c))
    flat = grad.reshape(b, n * l, c)
    for i in range(b):
        np.add.at(out[i], safe, flat[i])
    return np.ascontiguousarray(out[:, :rows, :])
