"""Revealed comparative advantage and binarization."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .core import BinaryMatrix, RawMatrix
from .errors import MatrixError

#: relative slack on the ``RCA >= 1`` test so exact ties survive float rounding
RCA_TIE_RTOL = 1e-12


def rca_values(raw: RawMatrix) -> np.ndarray:
    """Dense RCA matrix: country share of the activity over world share.

    ``RCA[c, a] = (W[c, a] / sum_a' W[c, a']) / (sum_c' W[c', a] / sum W)``.
    Cells with ``W[c, a] == 0`` are 0, and rows (columns) with zero total are
    all zeros without any division.
    """
    W = raw.values
    total = W.sum()
    if not total > 0:
        raise MatrixError(f"layer {raw.layer} window {raw.window.label}: zero grand total")
    row = np.asarray(W.sum(axis=1)).ravel()
    col = np.asarray(W.sum(axis=0)).ravel()
    out = np.zeros(W.shape)
    coo = W.tocoo()
    # W * total / (row * col) keeps exact ties exact for integer-valued data
    out[coo.row, coo.col] = coo.data * total / (row[coo.row] * col[coo.col])
    return out


def binarize(raw: RawMatrix) -> BinaryMatrix:
    """``M[c, a] = 1`` iff ``RCA[c, a] >= 1``.

    Countries and activities whose raw row/column is entirely zero are
    dropped first and listed in ``dropped_rows``/``dropped_cols``.
    """
    W = raw.values
    keep_r = np.flatnonzero(np.diff(W.indptr) > 0)
    keep_c = np.flatnonzero(np.bincount(W.indices, minlength=W.shape[1]) > 0)
    kept_r, kept_c = set(keep_r.tolist()), set(keep_c.tolist())
    dropped_rows = tuple(r for i, r in enumerate(raw.rows) if i not in kept_r)
    dropped_cols = tuple(c for j, c in enumerate(raw.cols) if j not in kept_c)
    if len(keep_r) != W.shape[0] or len(keep_c) != W.shape[1]:
        raw = RawMatrix(raw.layer, raw.window, tuple(raw.rows[i] for i in keep_r),
                        tuple(raw.cols[j] for j in keep_c), W[keep_r][:, keep_c], raw.level)
    rca = rca_values(raw)
    mask = rca >= 1.0 - RCA_TIE_RTOL
    return BinaryMatrix(raw.layer, raw.window, raw.rows, raw.cols,
                        sp.csr_matrix(mask.astype(np.int8)), raw.level,
                        dropped_rows, dropped_cols)
