"""Independent reference implementations used as test oracles.

Everything here is written for clarity with plain loops, never calling the
package's numerical kernels.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


def rca_naive(W):
    W = [[Fraction(x).limit_denominator(10**12) if not isinstance(x, Fraction) else x for x in row] for row in W]
    n_r, n_c = len(W), len(W[0])
    total = sum(sum(row) for row in W)
    rows = [sum(row) for row in W]
    cols = [sum(W[c][a] for c in range(n_r)) for a in range(n_c)]
    out = [[Fraction(0)] * n_c for _ in range(n_r)]
    for c in range(n_r):
        for a in range(n_c):
            if W[c][a] and rows[c] and cols[a]:
                out[c][a] = (W[c][a] / rows[c]) / (cols[a] / total)
    return out


def assist_triple_loop(M1, M2):
    """B[a1, a2] by direct summation over countries."""
    n_c, n1 = M1.shape
    n2 = M2.shape[1]
    B = np.zeros((n1, n2))
    for a1 in range(n1):
        u = 0
        for c in range(n_c):
            u += M1[c, a1]
        if u == 0:
            continue
        for a2 in range(n2):
            s = 0.0
            for c in range(n_c):
                d = 0
                for k in range(n2):
                    d += M2[c, k]
                if M1[c, a1] and M2[c, a2] and d:
                    s += 1.0 / d
            B[a1, a2] = s / u
    return B


def markov_composition(M1, M2):
    """Sum over countries of Pr(a2 | c) * Pr(c | a1), factors built separately."""
    n_c, n1 = M1.shape
    n2 = M2.shape[1]
    rho_1c = np.zeros((n1, n_c))
    for a1 in range(n1):
        u = M1[:, a1].sum()
        for c in range(n_c):
            rho_1c[a1, c] = M1[c, a1] / u if u else 0.0
    rho_c2 = np.zeros((n_c, n2))
    for c in range(n_c):
        d = M2[c].sum()
        for a2 in range(n2):
            rho_c2[c, a2] = M2[c, a2] / d if d else 0.0
    return np.array([[sum(rho_1c[i, c] * rho_c2[c, j] for c in range(n_c)) for j in range(n2)]
                     for i in range(n1)])


def reduction_fixpoint(A):
    """Repeatedly scan for empty/full lines, one line at a time, until stable.

    Returns (forced cells, forbidden cells, surviving rows, surviving cols).
    """
    A = np.asarray(A, dtype=int)
    rows = list(range(A.shape[0]))
    cols = list(range(A.shape[1]))
    forced, forbidden = set(), set()
    changed = True
    while changed and rows and cols:
        changed = False
        for r in list(rows):
            vals = [A[r, c] for c in cols]
            if all(v == 0 for v in vals) or all(v == 1 for v in vals):
                target = forced if vals and vals[0] == 1 and all(vals) else forbidden
                for c in cols:
                    target.add((r, c))
                rows.remove(r)
                changed = True
                break
        if changed:
            continue
        for c in list(cols):
            vals = [A[r, c] for r in rows]
            if all(v == 0 for v in vals) or all(v == 1 for v in vals):
                target = forced if vals and all(vals) else forbidden
                for r in rows:
                    target.add((r, c))
                cols.remove(c)
                changed = True
                break
    if not rows or not cols:
        rows, cols = [], []
    return forced, forbidden, rows, cols


def enumerate_null_mean(P1, P2):
    """Exact expected null Assist over every pair of binary matrices.

    Rows with zero sampled ubiquity are excluded (conditional mean over
    defined draws), matching the streaming accumulators.
    """
    P1, P2 = np.asarray(P1, float), np.asarray(P2, float)
    n1, n2 = P1.shape[1], P2.shape[1]
    num = np.zeros((n1, n2))
    den = np.zeros(n1)
    cells1 = P1.size
    cells2 = P2.size
    for bits1 in itertools.product((0, 1), repeat=cells1):
        M1 = np.array(bits1).reshape(P1.shape)
        w1 = np.prod(np.where(M1 == 1, P1, 1 - P1))
        if w1 == 0:
            continue
        for bits2 in itertools.product((0, 1), repeat=cells2):
            M2 = np.array(bits2).reshape(P2.shape)
            w2 = np.prod(np.where(M2 == 1, P2, 1 - P2))
            if w2 == 0:
                continue
            B = assist_triple_loop(M1, M2)
            u = M1.sum(axis=0)
            for a1 in range(n1):
                if u[a1] > 0:
                    num[a1] += w1 * w2 * B[a1]
                    den[a1] += w1 * w2
    return num / den[:, None]


def loglik_naive(A_degrees_rows, A_degrees_cols, x, y):
    L = 0.0
    for c, d in enumerate(A_degrees_rows):
        L += d * x[c]
    for a, u in enumerate(A_degrees_cols):
        L += u * y[a]
    for c in range(len(x)):
        for a in range(len(y)):
            L -= np.log1p(np.exp(x[c] + y[a]))
    return L
