"""Bipartite Configuration Model: fit, reduction and sampling.

The BiCM assigns every country-activity pair an independent link
probability ``pi[c, a] = eta[c] * theta[a] / (1 + eta[c] * theta[a])`` with
multipliers chosen so that expected degrees match the observed ones.
The multipliers maximise

    L = sum_c d_c log eta_c + sum_a u_a log theta_a - sum_{c,a} log(1 + eta_c theta_a)

whose gradient in ``(log eta, log theta)`` is the degree residual. The
solver works in log-multipliers ``x = log eta``, ``y = log theta``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.special import expit

from .core import BinaryMatrix
from .errors import ConvergenceError, DegenerateMatrixError
from .rng import substream

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000
#: iterations without halving the residual before switching to Newton
STALL_WINDOW = 50

FREE = -1


@dataclass(frozen=True, eq=False)
class Reduction:
    """Result of peeling zero- and full-degree rows/columns.

    ``row_round``/``col_round`` hold the peeling round at which each line
    was removed (``-1`` if it stays free); ``row_state``/``col_state`` hold
    0 for lines removed as empty and 1 for lines removed as full.
    """

    original: BinaryMatrix
    matrix: BinaryMatrix
    free_rows: np.ndarray
    free_cols: np.ndarray
    row_round: np.ndarray
    col_round: np.ndarray
    row_state: np.ndarray
    col_state: np.ndarray

    @property
    def forced(self) -> frozenset:
        return frozenset(self._fixed_cells(1))

    @property
    def forbidden(self) -> frozenset:
        return frozenset(self._fixed_cells(0))

    def _fixed_cells(self, value):
        fixed = fixed_values(self.row_round, self.col_round, self.row_state, self.col_state)
        rows, cols = np.nonzero(fixed == value)
        return {(self.original.rows[i], self.original.cols[j]) for i, j in zip(rows, cols)}

    @property
    def is_identity(self) -> bool:
        return len(self.free_rows) == len(self.row_round) and len(self.free_cols) == len(self.col_round)


def fixed_values(row_round, col_round, row_state, col_state) -> np.ndarray:
    """Dense array of deterministic cell values (-1 where the cell is free).

    A cell is fixed by whichever of its two lines was peeled first; lines
    peeled in the same round always agree on the cell's value.
    """
    big = np.iinfo(np.int64).max
    rr = np.where(row_round < 0, big, row_round)[:, None]
    cr = np.where(col_round < 0, big, col_round)[None, :]
    out = np.full((len(row_round), len(col_round)), FREE, dtype=np.int8)
    by_row = (rr <= cr) & (rr != big)
    by_col = (cr < rr) & (cr != big)
    out = np.where(by_row, np.broadcast_to(row_state[:, None], out.shape), out)
    out = np.where(by_col, np.broadcast_to(col_state[None, :], out.shape), out)
    return out.astype(np.int8)


def reduce(m: BinaryMatrix) -> Reduction:
    """Iteratively remove empty and full rows/columns until none remain."""
    A = m.dense()
    n_r, n_c = A.shape
    row_round = np.full(n_r, FREE, dtype=np.int64)
    col_round = np.full(n_c, FREE, dtype=np.int64)
    row_state = np.zeros(n_r, dtype=np.int8)
    col_state = np.zeros(n_c, dtype=np.int8)
    rows = np.arange(n_r)
    cols = np.arange(n_c)
    rnd = 0
    while len(rows) and len(cols):
        sub = A[np.ix_(rows, cols)]
        d = sub.sum(axis=1)
        u = sub.sum(axis=0)
        r_zero, r_full = d == 0, d == len(cols)
        c_zero, c_full = u == 0, u == len(rows)
        r_out = r_zero | r_full
        c_out = c_zero | c_full
        if not (r_out.any() or c_out.any()):
            break
        row_round[rows[r_out]] = rnd
        row_state[rows[r_full & ~r_zero]] = 1
        col_round[cols[c_out]] = rnd
        col_state[cols[c_full & ~c_zero]] = 1
        rows, cols = rows[~r_out], cols[~c_out]
        rnd += 1
    # an exhausted side leaves the other side's lines with no cells at all
    row_round[(row_round == FREE) & (len(cols) == 0)] = rnd
    col_round[(col_round == FREE) & (len(rows) == 0)] = rnd
    rows = rows if len(cols) else rows[:0]
    cols = cols if len(rows) else cols[:0]
    reduced = m.select(rows=[m.rows[i] for i in rows], cols=[m.cols[j] for j in cols])
    return Reduction(m, reduced, rows, cols, row_round, col_round, row_state, col_state)


@dataclass(frozen=True, eq=False)
class BicmModel:
    """Fitted BiCM over the full original shape of a binary matrix.

    ``eta``/``theta`` are full-length; peeled lines carry ``0`` (empty) or
    ``inf`` (full) and their cells are deterministic.
    """

    rows: tuple
    cols: tuple
    eta: np.ndarray
    theta: np.ndarray
    row_round: np.ndarray
    col_round: np.ndarray
    tol: float = DEFAULT_TOL
    residual: float = 0.0
    iterations: int = 0
    converged: bool = True
    loglik_trace: tuple = ()
    layer: object = None
    window: object = None
    level: int | None = None
    _pi: np.ndarray = field(default=None, init=False, repr=False)

    def __post_init__(self):
        pi = self._compute_probabilities()
        pi.flags.writeable = False
        object.__setattr__(self, "_pi", pi)

    @property
    def shape(self):
        return (len(self.rows), len(self.cols))

    @property
    def free_rows(self) -> np.ndarray:
        return np.flatnonzero(self.row_round == FREE)

    @property
    def free_cols(self) -> np.ndarray:
        return np.flatnonzero(self.col_round == FREE)

    def _compute_probabilities(self):
        row_state = (self.eta == np.inf).astype(np.int8)
        col_state = (self.theta == np.inf).astype(np.int8)
        fixed = fixed_values(self.row_round, self.col_round, row_state, col_state)
        fr, fc = self.free_rows, self.free_cols
        pi = fixed.astype(np.float64)
        if len(fr) and len(fc):
            x = np.log(self.eta[fr])
            y = np.log(self.theta[fc])
            pi[np.ix_(fr, fc)] = expit(x[:, None] + y[None, :])
        if np.any(pi < 0):
            raise AssertionError("unresolved cells in BiCM probability matrix")
        return pi

    @property
    def probabilities(self) -> np.ndarray:
        """Dense ``pi`` over the full shape (0/1 on peeled lines)."""
        return self._pi

    def expected_degrees(self):
        return self._pi.sum(axis=1), self._pi.sum(axis=0)

    def free_degrees(self):
        """Degree targets of the free block (degrees inside the reduced matrix)."""
        fr, fc = self.free_rows, self.free_cols
        sub = self._pi[np.ix_(fr, fc)]
        return sub.sum(axis=1), sub.sum(axis=0)

    def draw(self, gen: np.random.Generator) -> np.ndarray:
        """One dense boolean sample using generator ``gen``."""
        return gen.random(self._pi.shape) < self._pi

    def sample(self, seed: int, count: int, start: int = 0) -> Iterator[BinaryMatrix]:
        return sample(self, seed, count, start)


def log_likelihood(d, u, x, y) -> float:
    """BiCM log-likelihood in log-multipliers ``x = log eta``, ``y = log theta``."""
    s = x[:, None] + y[None, :]
    return float(d @ x + u @ y - np.logaddexp(0.0, s).sum())


def _residuals(d, u, x, y):
    pi = expit(x[:, None] + y[None, :])
    return pi.sum(axis=1) - d, pi.sum(axis=0) - u, pi


def _max_res(rd, ru):
    return max(float(np.max(np.abs(rd), initial=0.0)), float(np.max(np.abs(ru), initial=0.0)))


def _fixed_point_target(d, u, x, y):
    """Jacobi update ``eta <- d / sum_a theta/(1+eta theta)`` and its mirror."""
    eta, theta = np.exp(x), np.exp(y)
    denom = 1.0 + eta[:, None] * theta[None, :]
    x_new = np.log(d) - np.log((theta[None, :] / denom).sum(axis=1))
    y_new = np.log(u) - np.log((eta[:, None] / denom).sum(axis=0))
    return x_new, y_new


def _roundoff(L):
    # likelihood differences below this are float noise in the summation
    return 1e-12 * (abs(L) + 1.0)


def _newton_step(d, u, x, y, pi):
    n_r = len(d)
    v = pi * (1.0 - pi)
    g = np.concatenate([d - pi.sum(axis=1), u - pi.sum(axis=0)])
    n = n_r + len(u)
    H = np.zeros((n, n))
    H[:n_r, :n_r] = np.diag(v.sum(axis=1))
    H[n_r:, n_r:] = np.diag(v.sum(axis=0))
    H[:n_r, n_r:] = v
    H[n_r:, :n_r] = v.T
    # H is singular along the gauge direction (x + c, y - c); g is orthogonal to it
    ridge = 1e-12 * max(1.0, float(np.max(np.diag(H))))
    step = np.linalg.solve(H + ridge * np.eye(n), g)
    return step[:n_r], step[n_r:], g


def solve(d, u, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Solve the degree equations for log-multipliers.

    Damped fixed-point iteration, with steps that lower the log-likelihood
    rejected and the damping halved; switches to Newton steps with a
    backtracking line search once the residual has not halved over
    ``STALL_WINDOW`` iterations or the damping collapses.

    Returns ``(x, y, residual, iterations, converged, loglik_trace)``.
    """
    d = np.asarray(d, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if len(d) == 0 or len(u) == 0:
        return np.zeros(len(d)), np.zeros(len(u)), 0.0, 0, True, ()
    E = d.sum()
    x = np.log(d / math.sqrt(E))
    y = np.log(u / math.sqrt(E))
    L = log_likelihood(d, u, x, y)
    rd, ru, pi = _residuals(d, u, x, y)
    res = _max_res(rd, ru)
    trace = [L]
    history = [res]
    best = (res, x, y)
    alpha = 1.0
    newton = False
    it = 0
    while res > tol and it < max_iter:
        it += 1
        if not newton:
            tx, ty = _fixed_point_target(d, u, x, y)
            accepted = False
            while alpha >= 1e-4:
                nx, ny = x + alpha * (tx - x), y + alpha * (ty - y)
                nL = log_likelihood(d, u, nx, ny)
                if nL >= L - _roundoff(L):
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                newton = True
                log.debug("fixed point damping collapsed at iteration %d; switching to Newton", it)
                continue
            alpha = min(1.0, alpha * 2.0)
        else:
            dx, dy, g = _newton_step(d, u, x, y, pi)
            slope = float(g @ np.concatenate([dx, dy]))
            t = 1.0
            while True:
                nx, ny = x + t * dx, y + t * dy
                nL = log_likelihood(d, u, nx, ny)
                if nL >= L + 1e-4 * t * slope - _roundoff(L) or t < 1e-10:
                    break
                t *= 0.5
            if nL < L - _roundoff(L):
                # no ascent possible at machine precision
                break
        x, y, L = nx, ny, nL
        trace.append(L)
        rd, ru, pi = _residuals(d, u, x, y)
        res = _max_res(rd, ru)
        history.append(res)
        if res < best[0]:
            best = (res, x, y)
        if not newton and it >= STALL_WINDOW and res > 0.5 * history[-1 - STALL_WINDOW]:
            newton = True
            log.debug("fixed point stalled at iteration %d (residual %.3e); switching to Newton", it, res)
    res, x, y = best
    if res <= tol and res > 0:
        # one Newton polish so the residual sits well inside tol
        rd, ru, pi = _residuals(d, u, x, y)
        dx, dy, _ = _newton_step(d, u, x, y, pi)
        nx, ny = x + dx, y + dy
        nL = log_likelihood(d, u, nx, ny)
        n_res = _max_res(*_residuals(d, u, nx, ny)[:2])
        if n_res < res and nL >= trace[-1] - _roundoff(trace[-1]):
            x, y, res = nx, ny, n_res
            trace.append(nL)
            it += 1
    return x, y, res, it, res <= tol, tuple(trace)


def _check_reducible(m: BinaryMatrix):
    n_r, n_c = m.shape
    d, u = m.diversification, m.ubiquity
    bad = []
    if np.any(d == 0) or np.any(u == 0):
        bad.append("zero-degree")
    if n_c and np.any(d == n_c) or n_r and np.any(u == n_r):
        bad.append("full-degree")
    if bad:
        raise DegenerateMatrixError(
            f"matrix has {' and '.join(bad)} rows/columns; call reduce() first "
            "or use fit_model() which reduces automatically")


def fit(m: BinaryMatrix, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> BicmModel:
    """Fit the BiCM to a matrix without empty or full rows/columns.

    Raises :class:`DegenerateMatrixError` on degenerate input and
    :class:`ConvergenceError` (carrying the best model found) when the
    max degree residual is still above ``tol`` after ``max_iter``.
    """
    _check_reducible(m)
    n_r, n_c = m.shape
    return _fit_free(m, m.diversification, m.ubiquity, np.full(n_r, FREE), np.full(n_c, FREE),
                     np.zeros(n_r, np.int8), np.zeros(n_c, np.int8), np.arange(n_r), np.arange(n_c),
                     tol, max_iter)


def fit_model(m: BinaryMatrix, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> BicmModel:
    """Reduce ``m`` then fit its free block; peeled cells become deterministic."""
    red = reduce(m)
    sub = red.matrix
    return _fit_free(m, sub.diversification, sub.ubiquity, red.row_round, red.col_round,
                     red.row_state, red.col_state, red.free_rows, red.free_cols, tol, max_iter)


def _fit_free(m, d, u, row_round, col_round, row_state, col_state, free_rows, free_cols, tol, max_iter):
    x, y, res, it, ok, trace = solve(d, u, tol, max_iter)
    eta = np.where(row_state == 1, np.inf, 0.0)
    theta = np.where(col_state == 1, np.inf, 0.0)
    eta[free_rows] = np.exp(x)
    theta[free_cols] = np.exp(y)
    model = BicmModel(m.rows, m.cols, eta, theta, np.asarray(row_round), np.asarray(col_round),
                      tol, res, it, ok, trace, m.layer, m.window, m.level)
    if not ok:
        raise ConvergenceError(res, it, model)
    return model


def sample(model: BicmModel, seed: int, count: int, start: int = 0) -> Iterator[BinaryMatrix]:
    """Yield ``count`` independent matrices; sample ``i`` uses substream ``(seed, i)``."""
    for i in range(start, start + count):
        A = model.draw(substream(seed, i))
        yield BinaryMatrix.from_dense(model.layer or "X", model.window, A, model.rows, model.cols, model.level)


def save_model(model: BicmModel, path):
    """Write ``country,eta,removed_round`` and ``activity,theta,removed_round`` sections."""
    with open(path, "w") as fh:
        fh.write(f"# tolerance={model.tol!r}\n")
        fh.write(f"# residual={model.residual!r}\n")
        fh.write(f"# iterations={model.iterations}\n")
        fh.write(f"# converged={str(model.converged).lower()}\n")
        fh.write("# samples depend only on (seed, sample index); the multipliers carry no seed\n")
        fh.write("country,eta,removed_round\n")
        for r, e, k in zip(model.rows, model.eta, model.row_round):
            fh.write(f"{r},{float(e)!r},{'' if k == FREE else int(k)}\n")
        fh.write("\nactivity,theta,removed_round\n")
        for c, t, k in zip(model.cols, model.theta, model.col_round):
            fh.write(f"{c},{float(t)!r},{'' if k == FREE else int(k)}\n")


def load_model(path) -> BicmModel:
    header, sections, current = {}, {}, None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition("=")
                if sep:
                    header[key] = value
            elif not line:
                current = None
            elif current is None:
                current = line.split(",")[0]
                sections[current] = []
            else:
                sections[current].append(line.split(","))

    def unpack(rows):
        labels = tuple(r[0] for r in rows)
        vals = np.array([float(r[1]) for r in rows])
        rounds = np.array([int(r[2]) if r[2] else FREE for r in rows], dtype=np.int64)
        return labels, vals, rounds

    rows, eta, rr = unpack(sections.get("country", []))
    cols, theta, cr = unpack(sections.get("activity", []))
    return BicmModel(rows, cols, eta, theta, rr, cr, float(header.get("tolerance", DEFAULT_TOL)),
                     float(header.get("residual", 0.0)), int(header.get("iterations", 0)),
                     header.get("converged", "true") == "true")
