"""Streaming matrix factorization engine for dependent data.

Maintains a dictionary ``W`` (d x r) together with running sufficient
statistics ``(A, B, r_scalar)`` of previously computed codes.  Each arriving
minibatch ``X`` is sparse-coded against the current dictionary, the statistics
are folded in with a decaying weight ``w_t = t**-beta``, and the dictionary is
refit by block coordinate descent on the quadratic surrogate objective
``tr(W A W^T) - 2 tr(W B)`` over a union of compact convex pieces.  On
multi-piece (non-convex) constraint sets the refit is additionally restricted
to the trust ellipsoid ``tr((B^T - W A)(W_prev - W)^T) <= 0`` spanned between
the previous iterate and the unconstrained minimum, which guarantees
second-order growth of the quadratic objective per update.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

_FEAS_TOL = 1e-12


class ZeroDictionaryError(ValueError):
    """Raised when sparse coding is attempted against an all-zero dictionary."""


# ---------------------------------------------------------------------------
# Constraint sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstraintPiece:
    """One compact convex piece: entrywise lower bound plus Frobenius ball.

    ``{W : W_ij >= lower, ||W||_F <= radius}``.  With ``lower <= 0`` the set is
    a cone intersected with a centered ball, for which clamp-then-rescale is
    the exact Euclidean projection; for ``lower > 0`` the projection alternates
    the two steps (POCS), which converges to a feasible point.
    """

    radius: float
    lower: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError("piece radius must be positive and finite")
        if not math.isfinite(self.lower):
            raise ValueError("piece lower bound must be finite")

    def contains(self, W: np.ndarray, tol: float = 1e-8) -> bool:
        W = np.asarray(W, dtype=float)
        return bool(W.min() >= self.lower - tol
                    and np.linalg.norm(W) <= self.radius * (1.0 + tol) + tol)

    def project(self, W: np.ndarray) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        if self.lower > 0 and self.lower * math.sqrt(W.size) > self.radius:
            raise ValueError("empty constraint piece for this shape")
        V = np.maximum(W, self.lower)
        for _ in range(200):
            nrm = float(np.linalg.norm(V))
            if nrm <= self.radius * (1.0 + 1e-12):
                return V
            V = np.maximum(V * (self.radius / nrm), self.lower)
        return V

    def project_column(self, col: np.ndarray, rest_sq: float) -> np.ndarray | None:
        """Project one column given the squared norm of the other columns.

        Returns None when the column slice of the piece is empty (the radius
        budget left over is too small for the lower bound).
        """
        allowed = math.sqrt(max(self.radius ** 2 - rest_sq, 0.0))
        if self.lower > 0 and self.lower * math.sqrt(col.size) > allowed:
            return None
        v = np.maximum(col, self.lower)
        if allowed == 0.0:
            return np.zeros_like(v) if self.lower <= 0 else None
        for _ in range(200):
            nrm = float(np.linalg.norm(v))
            if nrm <= allowed * (1.0 + 1e-12):
                return v
            v = np.maximum(v * (allowed / nrm), self.lower)
        return v


@dataclass(frozen=True)
class ConstraintSpec:
    """Disjoint union of compact convex pieces admissible for the dictionary."""

    pieces: tuple[ConstraintPiece, ...]

    def __post_init__(self):
        if len(self.pieces) < 1:
            raise ValueError("need at least one constraint piece")

    @classmethod
    def nonnegative(cls, radius: float, lower: float = 0.0) -> "ConstraintSpec":
        return cls(pieces=(ConstraintPiece(radius=radius, lower=lower),))


@dataclass
class Dictionary:
    """Current dictionary matrix, its constraint set, and the active piece."""

    W: np.ndarray
    constraint: ConstraintSpec
    active_piece: int = 0

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        if self.W.ndim != 2:
            raise ValueError("dictionary must be a 2-d matrix")
        if not np.isfinite(self.W).all():
            raise ValueError("non-finite dictionary entries")
        if not 0 <= self.active_piece < len(self.constraint.pieces):
            raise ValueError("active piece index out of range")

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape


@dataclass(frozen=True)
class WeightSchedule:
    """Step weights w_t = t**-beta with beta in (3/4, 1]."""

    beta: float = 1.0

    def __post_init__(self):
        if not 0.75 < self.beta <= 1.0:
            raise ValueError("beta must lie in (3/4, 1]")

    def weight(self, t: int) -> float:
        if t < 1:
            raise ValueError("weights are defined for t >= 1")
        return float(t) ** (-self.beta)


@dataclass
class AggregateStats:
    """Running sufficient statistics (A, B, r_scalar) of codes seen so far."""

    A: np.ndarray
    B: np.ndarray
    r_scalar: float = 0.0
    t: int = 0
    kappa1: float = 0.0

    @classmethod
    def zeros(cls, r: int, d: int, kappa1: float = 0.0) -> "AggregateStats":
        return cls(A=np.zeros((r, r)), B=np.zeros((r, d)), r_scalar=0.0, t=0,
                   kappa1=kappa1)


# ---------------------------------------------------------------------------
# Sparse coding
# ---------------------------------------------------------------------------


def _pg_solve(gram, wx, lam, kappa2, tol, max_iter, H0=None):
    """Projected gradient on the nonnegative orthant with a fixed safe step."""
    step = 1.0 / (2.0 * float(np.trace(gram)) + kappa2)
    H = np.zeros_like(wx) if H0 is None else np.array(H0, dtype=float)
    for _ in range(max_iter):
        grad = 2.0 * (gram @ H - wx) + lam
        if kappa2 > 0:
            grad += kappa2 * H
        H_next = np.maximum(H - step * grad, 0.0)
        delta = float(np.linalg.norm(H_next - H))
        H = H_next
        if delta < tol:
            break
    return H


def sparse_code(X, W, lam: float = 1.0, kappa2: float = 0.0,
                tol: float = 1e-6, max_iter: int = 200, H0=None) -> np.ndarray:
    """Nonnegative code H minimizing ||X - WH||_F^2 + lam*||H||_1 + (kappa2/2)*||H||_F^2.

    Projected gradient descent with step 1/(2 tr(W^T W) + kappa2), stopped when
    the Frobenius change between successive iterates falls below ``tol`` or
    after ``max_iter`` steps.  The objective is non-increasing across
    iterations and the columns of X are solved independently.
    """
    X = np.asarray(X, dtype=float)
    W = np.asarray(W, dtype=float)
    if X.ndim != 2 or W.ndim != 2 or X.shape[0] != W.shape[0]:
        raise ValueError("incompatible shapes for data and dictionary")
    if not (np.isfinite(X).all() and np.isfinite(W).all()):
        raise ValueError("non-finite input")
    if lam < 0 or kappa2 < 0:
        raise ValueError("penalties must be nonnegative")
    gram = W.T @ W
    if float(np.trace(gram)) <= 0.0:
        raise ZeroDictionaryError("zero dictionary")
    return _pg_solve(gram, W.T @ X, lam, kappa2, tol, max_iter, H0)


def coding_objective(X, W, H, lam: float, kappa2: float = 0.0) -> float:
    """Value of the sparse-coding objective at a given code."""
    resid = X - W @ H
    val = float(np.sum(resid * resid)) + lam * float(np.abs(H).sum())
    if kappa2 > 0:
        val += 0.5 * kappa2 * float(np.sum(H * H))
    return val


def kkt_residual(X, W, H, lam: float, kappa2: float = 0.0) -> float:
    """Norm of the projected-gradient displacement at H (zero at optimality)."""
    gram = W.T @ W
    step = 1.0 / (2.0 * float(np.trace(gram)) + kappa2)
    grad = 2.0 * (gram @ H - W.T @ X) + lam + kappa2 * H
    return float(np.linalg.norm(np.maximum(H - step * grad, 0.0) - H))


# ---------------------------------------------------------------------------
# Aggregate and surrogate bookkeeping
# ---------------------------------------------------------------------------


def update_aggregates(stats: AggregateStats, H, X, schedule: WeightSchedule,
                      lam: float = 0.0) -> AggregateStats:
    """Fold one (code, data) pair into the running statistics.

    A' = (1-w)A + w H H^T, B' = (1-w)B + w H X^T and the scalar remainder
    r' = (1-w)r + w(tr(X X^T) + lam*||H||_1), with w the schedule weight at
    step t+1.
    """
    H = np.asarray(H, dtype=float)
    X = np.asarray(X, dtype=float)
    r, n = H.shape
    if X.shape[1] != n or stats.A.shape != (r, r) or stats.B.shape[0] != r \
            or stats.B.shape[1] != X.shape[0]:
        raise ValueError("dimension mismatch between statistics, code and data")
    w = schedule.weight(stats.t + 1)
    A = (1.0 - w) * stats.A + w * (H @ H.T)
    A = 0.5 * (A + A.T)
    B = (1.0 - w) * stats.B + w * (H @ X.T)
    r_scalar = (1.0 - w) * stats.r_scalar \
        + w * (float(np.sum(X * X)) + lam * float(np.abs(H).sum()))
    return AggregateStats(A=A, B=B, r_scalar=r_scalar, t=stats.t + 1,
                          kappa1=stats.kappa1)


def surrogate_loss(W, stats: AggregateStats) -> float:
    """tr(W A W^T) - 2 tr(W B) + r_scalar for the given dictionary."""
    W = np.asarray(getattr(W, "W", W), dtype=float)
    if W.shape[1] != stats.A.shape[0] or W.shape[0] != stats.B.shape[1]:
        raise ValueError("dictionary incompatible with statistics")
    return float(np.sum((W @ stats.A) * W) - 2.0 * np.sum(W * stats.B.T)
                 + stats.r_scalar)


def ellipsoid_gap(W, W_prev, stats: AggregateStats) -> float:
    """Value of tr((B^T - W A)(W_prev - W)^T); feasible when <= 0."""
    W = np.asarray(getattr(W, "W", W), dtype=float)
    W_prev = np.asarray(getattr(W_prev, "W", W_prev), dtype=float)
    return float(np.sum((stats.B.T - W @ stats.A) * (W_prev - W)))


def growth_check(W1, W2, stats: AggregateStats) -> float:
    """Second-order growth margin g(W1) - g(W2) - tr((W1-W2) A (W1-W2)^T).

    Nonnegative (up to floating point) whenever W2 was produced from W1 by a
    dictionary update that respected the trust ellipsoid.
    """
    W1 = np.asarray(getattr(W1, "W", W1), dtype=float)
    W2 = np.asarray(getattr(W2, "W", W2), dtype=float)
    A, B = stats.A, stats.B

    def g(M):
        return float(np.sum((M @ A) * M) - 2.0 * np.sum(M * B.T))

    delta = W1 - W2
    return g(W1) - g(W2) - float(np.sum((delta @ A) * delta))


# ---------------------------------------------------------------------------
# Dictionary update
# ---------------------------------------------------------------------------


def _quad_objective(W, A_ridge, B) -> float:
    return float(np.sum((W @ A_ridge) * W) - 2.0 * np.sum(W * B.T))


def _bisect_to_ellipsoid(W, j, cand, old, W_prev, stats):
    """Blend column j between candidate and its previous value until feasible.

    The matrix with the previous column is feasible by induction, so bisection
    along the segment (which stays inside the convex piece slice) terminates
    at a feasible point.
    """
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        W[:, j] = (1.0 - mid) * cand + mid * old
        if ellipsoid_gap(W, W_prev, stats) <= _FEAS_TOL:
            hi = mid
        else:
            lo = mid
    col = (1.0 - hi) * cand + hi * old
    W[:, j] = col
    return col


def dictionary_update(W_prev: Dictionary, stats: AggregateStats,
                      tol: float = 1e-6, max_iter: int = 100,
                      enforce_ellipsoid: bool | None = None) -> Dictionary:
    """Refit the dictionary against the current statistics.

    Runs damped block coordinate descent on
    ``tr(W (A + kappa1 I) W^T) - 2 tr(W B)`` independently inside every
    constraint piece, keeps iterates inside the trust ellipsoid when
    enforcement is on, and returns the best per-piece solution (lowest piece
    index wins on ties).  ``enforce_ellipsoid=None`` enforces only for
    multi-piece constraints, where the ellipsoid is not redundant.

    Columns whose diagonal aggregate (plus ridge) is zero are never touched.
    If no piece yields a feasible iterate the previous dictionary is returned
    unchanged and a warning is logged.
    """
    spec = W_prev.constraint
    A, B, kappa1 = stats.A, stats.B, stats.kappa1
    r = A.shape[0]
    A_ridge = A + kappa1 * np.eye(r) if kappa1 > 0 else A
    diag_ridge = np.diag(A_ridge).copy()
    W0 = np.asarray(W_prev.W, dtype=float)
    enforce = (len(spec.pieces) > 1) if enforce_ellipsoid is None \
        else bool(enforce_ellipsoid)

    best_W = None
    best_val = math.inf
    best_idx = -1
    for idx, piece in enumerate(spec.pieces):
        start = W0 if idx == W_prev.active_piece else piece.project(W0)
        if enforce and ellipsoid_gap(start, W0, stats) > _FEAS_TOL:
            # fall back to the ellipsoid midpoint between the previous iterate
            # and the unconstrained minimum, projected into the piece
            target = (np.linalg.pinv(A, hermitian=True) @ B).T
            start = piece.project(0.5 * (W0 + target))
            if ellipsoid_gap(start, W0, stats) > _FEAS_TOL:
                continue
        W = start.copy()
        col_sq = np.einsum("ij,ij->j", W, W)
        for _ in range(max_iter):
            W_before = W.copy()
            for j in range(r):
                if diag_ridge[j] <= 0.0:
                    continue
                cand = W[:, j] - (W @ A_ridge[:, j] - B[j, :]) / (A_ridge[j, j] + 1.0)
                rest = float(col_sq.sum() - col_sq[j])
                new_col = piece.project_column(cand, rest)
                if new_col is None:
                    continue
                if enforce:
                    old = W[:, j].copy()
                    W[:, j] = new_col
                    if ellipsoid_gap(W, W0, stats) > _FEAS_TOL:
                        new_col = _bisect_to_ellipsoid(W, j, new_col, old, W0, stats)
                else:
                    W[:, j] = new_col
                col_sq[j] = float(new_col @ new_col)
            if float(np.linalg.norm(W - W_before)) < tol:
                break
        val = _quad_objective(W, A_ridge, B)
        if val < best_val:
            best_W, best_val, best_idx = W, val, idx

    if best_W is None:
        logger.warning("dictionary update found no feasible piece; "
                       "keeping the previous dictionary")
        return Dictionary(W0.copy(), spec, W_prev.active_piece)
    return Dictionary(best_W, spec, best_idx)


def init_dictionary(d: int, r: int, constraint: ConstraintSpec, rng,
                    piece: int = 0) -> Dictionary:
    """Uniform [0,1] entries projected into the requested constraint piece."""
    W = constraint.pieces[piece].project(rng.random((d, r)))
    return Dictionary(W, constraint, active_piece=piece)


# ---------------------------------------------------------------------------
# Weighted empirical loss (diagnostic; requires the stored history)
# ---------------------------------------------------------------------------


def empirical_weights(t: int, schedule: WeightSchedule) -> np.ndarray:
    """Weights w_s^t = w_s * prod_{j>s} (1 - w_j); they sum to one for t >= 1."""
    if t < 1:
        raise ValueError("need at least one step")
    w = np.array([schedule.weight(s) for s in range(1, t + 1)])
    out = np.empty(t)
    tail = 1.0
    for s in range(t - 1, -1, -1):
        out[s] = w[s] * tail
        tail *= 1.0 - w[s]
    return out


def empirical_loss(W, history, schedule: WeightSchedule, lam: float = 1.0,
                   kappa2: float = 0.0, tol: float = 1e-9,
                   max_iter: int = 5000) -> float:
    """Weighted empirical loss f_t(W) over the stored stream.

    Re-solves the sparse coding problem for every stored matrix (stacked into
    one batch since columns are independent) and returns the weighted sum of
    the per-matrix objectives.  Diagnostic only: cost grows linearly with the
    stored history.
    """
    if not history:
        raise ValueError("history must be non-empty")
    W = np.asarray(getattr(W, "W", W), dtype=float)
    stacked = np.concatenate([np.asarray(X, dtype=float) for X in history], axis=1)
    H = sparse_code(stacked, W, lam=lam, kappa2=kappa2, tol=tol, max_iter=max_iter)
    weights = empirical_weights(len(history), schedule)
    total = 0.0
    pos = 0
    for s, X in enumerate(history):
        n = X.shape[1]
        total += weights[s] * coding_objective(X, W, H[:, pos:pos + n], lam)
        pos += n
    return float(total)


# ---------------------------------------------------------------------------
# Online engine
# ---------------------------------------------------------------------------


@dataclass
class StepResult:
    """Code, surrogate value after the update, and the plug-in coding loss."""

    code: np.ndarray
    surrogate: float
    coding_loss: float


@dataclass
class OnlineNMF:
    """Single-owner streaming factorization state.

    One ``step`` at a time mutates the engine; independent engines on disjoint
    state are safe to drive concurrently.
    """

    dictionary: Dictionary
    lam: float = 1.0
    kappa1: float = 0.0
    kappa2: float = 0.0
    schedule: WeightSchedule = field(default_factory=WeightSchedule)
    code_tol: float = 1e-6
    code_max_iter: int = 200
    dict_tol: float = 1e-6
    dict_max_iter: int = 100
    enforce_ellipsoid: bool | None = None
    track_history: bool = False

    def __post_init__(self):
        d, r = self.dictionary.shape
        self.stats = AggregateStats.zeros(r, d, kappa1=self.kappa1)
        self.history: list[np.ndarray] = []

    @property
    def W(self) -> np.ndarray:
        return self.dictionary.W

    def step(self, X) -> StepResult:
        """Sparse-code X, fold in the statistics, refit the dictionary."""
        X = np.asarray(X, dtype=float)
        if not np.isfinite(X).all():
            raise ValueError("non-finite data matrix")
        if X.min() < 0:
            raise ValueError("data matrix must be nonnegative")
        H = sparse_code(X, self.W, lam=self.lam, kappa2=self.kappa2,
                        tol=self.code_tol, max_iter=self.code_max_iter)
        loss = coding_objective(X, self.W, H, self.lam)
        self.stats = update_aggregates(self.stats, H, X, self.schedule, self.lam)
        self.dictionary = dictionary_update(
            self.dictionary, self.stats, tol=self.dict_tol,
            max_iter=self.dict_max_iter, enforce_ellipsoid=self.enforce_ellipsoid)
        if self.track_history:
            self.history.append(X.copy())
        return StepResult(code=H, surrogate=surrogate_loss(self.W, self.stats),
                          coding_loss=loss)

    def empirical_loss_now(self, W=None) -> float:
        """f_t at the current (or a given) dictionary; needs tracked history."""
        if not self.track_history:
            raise ValueError("history tracking is disabled")
        target = self.W if W is None else W
        return empirical_loss(target, self.history, self.schedule,
                              lam=self.lam, kappa2=self.kappa2)


# ---------------------------------------------------------------------------
# Plain-text serialization
# ---------------------------------------------------------------------------


def _write_matrix(fh, M: np.ndarray) -> None:
    fh.write(f"{M.shape[0]} {M.shape[1]}\n")
    for row in M:
        fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def _read_matrix(lines, pos: int):
    parts = lines[pos].split()
    if len(parts) != 2:
        raise ValueError(f"bad matrix header at line {pos + 1}")
    rows, cols = int(parts[0]), int(parts[1])
    M = np.empty((rows, cols))
    for i in range(rows):
        vals = lines[pos + 1 + i].split()
        if len(vals) != cols:
            raise ValueError(f"bad matrix row at line {pos + 2 + i}")
        M[i] = [float(v) for v in vals]
    return M, pos + 1 + rows


def save_dictionary(path, W) -> None:
    """Write a matrix as 'd r' header plus d rows of shortest-repr values."""
    W = np.asarray(getattr(W, "W", W), dtype=float)
    with open(path, "w") as fh:
        _write_matrix(fh, W)


def load_dictionary(path) -> np.ndarray:
    with open(path) as fh:
        lines = fh.read().splitlines()
    M, _ = _read_matrix(lines, 0)
    return M


def save_aggregates(path, stats: AggregateStats, beta: float) -> None:
    """A then B in the matrix text format, plus a 't r_scalar kappa1 beta' trailer."""
    with open(path, "w") as fh:
        _write_matrix(fh, stats.A)
        _write_matrix(fh, stats.B)
        fh.write(f"{stats.t} {repr(float(stats.r_scalar))} "
                 f"{repr(float(stats.kappa1))} {repr(float(beta))}\n")


def load_aggregates(path) -> tuple[AggregateStats, float]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    A, pos = _read_matrix(lines, 0)
    B, pos = _read_matrix(lines, pos)
    trailer = lines[pos].split()
    if len(trailer) != 4:
        raise ValueError("bad aggregates trailer")
    t, r_scalar, kappa1, beta = (int(trailer[0]), float(trailer[1]),
                                 float(trailer[2]), float(trailer[3]))
    return AggregateStats(A=A, B=B, r_scalar=r_scalar, t=t, kappa1=kappa1), beta
