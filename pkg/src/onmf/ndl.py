"""Network dictionary learning, reconstruction, corruption, and denoising.

Learning drives the streaming factorization engine with minibatches of
vectorized mesoscale patches produced by a motif-sampling chain.
Reconstruction runs a single chain, sparse-codes each patch against a learned
dictionary, and folds the approximations into running means per node pair.
Denoising corrupts a simple graph, reconstructs it, and classifies candidate
pairs by their reconstructed weight, scored with an ROC curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .factorization import (AggregateStats, ConstraintSpec, OnlineNMF,
                            WeightSchedule, init_dictionary, sparse_code)
from .networks import (Motif, Network, chain_update, initial_homomorphism,
                       mesoscale_patch)

MCMC_MODES = ("pivot", "pivot-approx", "glauber")


class CorruptionError(ValueError):
    """Requested corruption cannot be realized on this graph."""


class DegenerateAggregatesError(ValueError):
    """All aggregate diagonal entries are zero; no atom was ever used."""


class RocError(ValueError):
    """ROC computation needs at least one positive and one negative label."""


@dataclass
class NDLParams:
    """Knobs for network dictionary learning."""

    k: int
    atoms: int
    iters: int = 100
    batch: int = 100
    lam: float = 1.0
    dict_radius: float = 1000.0
    mcmc: str = "pivot"
    beta: float = 1.0
    kappa1: float = 0.0
    kappa2: float = 0.0
    code_tol: float = 1e-8
    code_max_iter: int = 500
    dict_tol: float = 1e-8
    dict_max_iter: int = 100

    def __post_init__(self):
        if min(self.k, self.atoms, self.iters, self.batch) < 1:
            raise ValueError("counts must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.mcmc not in MCMC_MODES:
            raise ValueError(f"mcmc mode must be one of {MCMC_MODES}")


@dataclass
class NetworkDictionary:
    """Learned atoms plus the aggregates that produced them."""

    W: np.ndarray
    stats: AggregateStats
    k: int
    loss_trace: list = field(default_factory=list)

    @property
    def P(self) -> np.ndarray:
        return self.stats.A

    @property
    def Q(self) -> np.ndarray:
        return self.stats.B

    @property
    def dominance(self) -> np.ndarray:
        return dominance_scores(self.P)


def dominance_scores(P: np.ndarray) -> np.ndarray:
    """Normalized square roots of the diagonal aggregate entries."""
    diag = np.sqrt(np.maximum(np.diag(np.asarray(P, dtype=float)), 0.0))
    total = float(diag.sum())
    if total <= 0.0:
        raise DegenerateAggregatesError("degenerate aggregates")
    return diag / total


def ndl_learn(net: Network, params: NDLParams, rng) -> NetworkDictionary:
    """Learn a network dictionary from a motif-sampling chain.

    Per iteration, `batch` chain updates produce mesoscale patches vectorized
    into a k^2 x batch matrix which drives one engine step with balanced
    weights (beta defaults to 1).
    """
    motif = Motif.chain(params.k)
    x = initial_homomorphism(net, motif, rng)
    constraint = ConstraintSpec.nonnegative(params.dict_radius)
    dictionary = init_dictionary(params.k ** 2, params.atoms, constraint, rng)
    engine = OnlineNMF(dictionary, lam=params.lam, kappa1=params.kappa1,
                       kappa2=params.kappa2,
                       schedule=WeightSchedule(params.beta),
                       code_tol=params.code_tol,
                       code_max_iter=params.code_max_iter,
                       dict_tol=params.dict_tol,
                       dict_max_iter=params.dict_max_iter)
    trace = []
    k2 = params.k ** 2
    for t in range(1, params.iters + 1):
        X = np.empty((k2, params.batch))
        for j in range(params.batch):
            x = chain_update(net, motif, x, rng, params.mcmc)
            X[:, j] = mesoscale_patch(net, x).reshape(-1)
        result = engine.step(X)
        trace.append((t, result.surrogate))
    return NetworkDictionary(W=engine.W.copy(), stats=engine.stats,
                             k=params.k, loss_trace=trace)


# ---------------------------------------------------------------------------
# Network reconstruction
# ---------------------------------------------------------------------------


@dataclass
class ReconstructionState:
    """Sparse running means and visit counts over ordered node pairs."""

    means: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    def fold(self, pair: tuple[int, int], value: float) -> None:
        """Fold one proposal into the running mean at the pair."""
        c = self.counts.get(pair, 0) + 1
        self.counts[pair] = c
        prev = self.means.get(pair, 0.0)
        self.means[pair] = (1.0 - 1.0 / c) * prev + value / c

    def pair_score(self, u: int, v: int) -> float:
        """Count-weighted mean over both orientations; 0 when never visited."""
        total = 0.0
        count = 0
        for pair in ((u, v), (v, u)):
            c = self.counts.get(pair, 0)
            if c:
                total += self.means[pair] * c
                count += c
        return total / count if count else 0.0


def nr_reconstruct(net: Network, W: np.ndarray, iters: int,
                   lam: float = 0.0, mcmc: str = "pivot", rng=None,
                   code_tol: float = 1e-8, code_max_iter: int = 500,
                   initial=None) -> ReconstructionState:
    """Reconstruct a network by averaging dictionary approximations of patches.

    Each chain step sparse-codes the current mesoscale patch against W and
    folds every entry of the k x k approximation into the running mean at the
    corresponding node pair.
    """
    W = np.asarray(W, dtype=float)
    k2, _ = W.shape
    k = int(round(math.sqrt(k2)))
    if k * k != k2:
        raise ValueError("dictionary rows must be a perfect square")
    motif = Motif.chain(k)
    x = initial if initial is not None else initial_homomorphism(net, motif, rng)
    state = ReconstructionState()
    for _ in range(iters):
        x = chain_update(net, motif, x, rng, mcmc)
        patch = mesoscale_patch(net, x).reshape(-1, 1)
        h = sparse_code(patch, W, lam=lam, tol=code_tol,
                        max_iter=code_max_iter)
        approx = (W @ h).reshape(k, k)
        for a in range(k):
            for b in range(k):
                state.fold((x[a], x[b]), float(approx[a, b]))
    return state


# ---------------------------------------------------------------------------
# Corruption and denoising
# ---------------------------------------------------------------------------


@dataclass
class CorruptionResult:
    """Corrupted network plus ground-truth labels over the candidate universe.

    For subtractive noise the universe is the corrupted graph's non-edges and
    a label of True marks a genuine non-edge (False marks a removed true
    edge).  For additive noise the universe is the corrupted graph's edges and
    True marks a genuine edge (False marks an injected one).
    """

    corrupted: Network
    labels: dict


def _connected_without(adj: list[set], u: int, v: int) -> bool:
    """Is v still reachable from u if edge (u, v) is ignored?"""
    seen = {u}
    stack = [u]
    while stack:
        a = stack.pop()
        for b in adj[a]:
            if a == u and b == v:
                continue
            if b == v:
                return True
            if b not in seen:
                seen.add(b)
                stack.append(b)
    return False


def is_connected(net: Network) -> bool:
    seen = {0}
    stack = [0]
    while stack:
        a = stack.pop()
        for b in net.out_neighbors(a):
            b = int(b)
            if b not in seen:
                seen.add(b)
                stack.append(b)
    return len(seen) == net.n


def corrupt_network(net: Network, mode: str, fraction: float, rng) -> CorruptionResult:
    """Corrupt a simple graph by deleting or injecting ceil(fraction*|E|) edges.

    Subtractive deletions are drawn uniformly among edges whose removal keeps
    the graph connected (an edge skipped as a bridge stays a bridge, so one
    shuffled pass reaches any feasible quota).  Additive insertions are
    uniform over non-adjacent pairs.
    """
    if not net.is_simple:
        raise CorruptionError("corruption requires a simple graph")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    edges = net.undirected_edges()
    quota = math.ceil(fraction * len(edges))

    if mode == "subtractive":
        if not is_connected(net):
            raise CorruptionError("subtractive corruption requires a connected graph")
        adj = [set(int(b) for b in net.out_neighbors(v)) for v in range(net.n)]
        order = rng.permutation(len(edges))
        removed = []
        for idx in order:
            if len(removed) == quota:
                break
            u, v = edges[int(idx)]
            if _connected_without(adj, u, v):
                adj[u].discard(v)
                adj[v].discard(u)
                removed.append((u, v))
        if len(removed) < quota:
            raise CorruptionError(
                f"only {len(removed)} of {quota} edges removable without "
                "disconnecting the graph")
        removed_set = set(removed)
        kept = [e for e in edges if e not in removed_set]
        corrupted = Network.from_undirected_pairs(net.n, kept, labels=net.labels)
        labels = {}
        for u in range(net.n):
            for v in range(u + 1, net.n):
                if not corrupted.has_edge(u, v):
                    labels[(u, v)] = (u, v) not in removed_set
        return CorruptionResult(corrupted=corrupted, labels=labels)

    if mode == "additive":
        pool = [(u, v) for u in range(net.n) for v in range(u + 1, net.n)
                if not net.has_edge(u, v)]
        if quota > len(pool):
            raise CorruptionError(
                f"cannot add {quota} edges: only {len(pool)} non-adjacent pairs")
        order = rng.permutation(len(pool))
        added = {pool[int(idx)] for idx in order[:quota]}
        corrupted = Network.from_undirected_pairs(
            net.n, edges + sorted(added), labels=net.labels)
        labels = {pair: pair not in added for pair in corrupted.undirected_edges()}
        return CorruptionResult(corrupted=corrupted, labels=labels)

    raise ValueError(f"unknown corruption mode {mode!r}")


def candidate_pairs(corrupted: Network, mode: str) -> list[tuple[int, int]]:
    """Classification universe: non-edges (subtractive) or edges (additive)."""
    if mode == "subtractive":
        return [(u, v) for u in range(corrupted.n)
                for v in range(u + 1, corrupted.n)
                if not corrupted.has_edge(u, v)]
    if mode == "additive":
        return corrupted.undirected_edges()
    raise ValueError(f"unknown corruption mode {mode!r}")


def denoise_classify(corrupted: Network, recons: ReconstructionState,
                     mode: str, theta: float,
                     lower_is_positive: bool = True) -> dict:
    """Classify candidate pairs by reconstructed weight against a threshold.

    Default rule flags a pair as positive when its weight is strictly below
    theta; pairs never visited by the chain carry weight 0.  Flip
    ``lower_is_positive`` to flag strictly-above instead.
    """
    out = {}
    for u, v in candidate_pairs(corrupted, mode):
        score = recons.pair_score(u, v)
        out[(u, v)] = score < theta if lower_is_positive else score > theta
    return out


@dataclass
class RocResult:
    """Threshold-swept ROC points and the trapezoid area under the curve."""

    points: list
    auc: float


def roc_auc(scores: dict, labels: dict, lower_is_positive: bool = True) -> RocResult:
    """ROC curve and AUC for a score map against boolean positive labels.

    Thresholds sweep all distinct score values (strict comparison), so tied
    scores advance the curve diagonally and the trapezoid AUC equals the
    Mann-Whitney statistic with half credit for ties.
    """
    keys = sorted(scores)
    if set(keys) != set(labels):
        raise ValueError("scores and labels must cover the same pairs")
    y = np.array([bool(labels[k]) for k in keys])
    s = np.array([float(scores[k]) for k in keys])
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise RocError("need at least one positive and one negative label")
    uniques = np.unique(s)
    thresholds = list(uniques) + [math.inf] if lower_is_positive \
        else list(uniques[::-1]) + [-math.inf]
    points = []
    for th in thresholds:
        pred = s < th if lower_is_positive else s > th
        tpr = float(np.sum(pred & y)) / n_pos
        fpr = float(np.sum(pred & ~y)) / n_neg
        points.append((float(th), fpr, tpr))
    fprs = np.array([p[1] for p in points])
    tprs = np.array([p[2] for p in points])
    trapezoid = getattr(np, "trapezoid", np.trapz)
    auc = float(trapezoid(tprs, fprs))
    return RocResult(points=points, auc=auc)
