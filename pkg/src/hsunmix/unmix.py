"""Unmixing algorithms.

All four methods alternate a multiplicative signature update with an
abundance update and keep every abundance column on the probability simplex:

* ``nmf``: multiplicative abundance rule, then simplex projection.
* ``l12_nmf``: projected gradient step with the L1/2 sparsity term.
* ``distributed``: projected gradient step with the neighbor (sign) term.
* ``sparse_distributed``: both terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from hsunmix.graph import NeighborGraph, auto_lambda, build_graph
from hsunmix.hyperdata import Abundances, Cube, Signatures

METHODS = ("nmf", "l12_nmf", "distributed", "sparse_distributed")
_USES_ETA = {"distributed", "sparse_distributed"}
_USES_LAMBDA = {"l12_nmf", "sparse_distributed"}
INIT_METHODS = ("spread", "pixels", "uniform")


class UnmixError(ValueError):
    pass


class DivergenceError(UnmixError, FloatingPointError):
    pass


@dataclass(frozen=True)
class AlgoConfig:
    """Tuning knobs shared by all methods.

    ``lam`` is ``"auto"`` (estimated from the observed cube), ``"zero"`` or a
    nonnegative number. ``eta`` and ``lam`` are ignored by methods that lack
    the corresponding term.
    """

    mu: float = 0.01
    eta: float = 0.1
    lam: Union[str, float] = "auto"
    max_iter: int = 400
    rel_tol: float = 1e-6
    eps_floor: float = 1e-4
    connectivity: int = 4
    seed: int = 0
    init: str = "spread"
    update_signatures: bool = True

    def __post_init__(self):
        if not self.mu > 0:
            raise UnmixError(f"mu must be > 0, got {self.mu}")
        if self.eta < 0:
            raise UnmixError(f"eta must be >= 0, got {self.eta}")
        if not self.eps_floor > 0:
            raise UnmixError(f"eps_floor must be > 0, got {self.eps_floor}")
        if self.max_iter < 0:
            raise UnmixError("max_iter must be >= 0")
        if self.init not in INIT_METHODS:
            raise UnmixError(f"init must be one of {INIT_METHODS}, got {self.init!r}")
        if self.connectivity not in (4, 8):
            raise UnmixError(f"connectivity must be 4 or 8, got {self.connectivity}")
        lam = self.lam
        if isinstance(lam, str):
            if lam not in ("auto", "zero"):
                try:
                    lam = float(lam)
                except ValueError:
                    raise UnmixError(f"lam must be 'auto', 'zero' or a number, got {lam!r}") from None
        if not isinstance(lam, str):
            lam = float(lam)
            if lam < 0:
                raise UnmixError("lam must be nonnegative")
            if lam == 0:
                lam = "zero"
        object.__setattr__(self, "lam", lam)


@dataclass
class UnmixResult:
    signatures: Signatures
    abundances: Abundances
    objective_trace: np.ndarray
    iterations_run: int
    converged: bool
    lam: float = 0.0
    eta: float = 0.0
    method: str = ""
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) = 1}``.

    Accepts a vector or a ``p x N`` matrix (projected column by column).
    Sort-and-threshold: find the largest ``r`` with
    ``u_r - (sum_{i<=r} u_i - 1) / r > 0`` for ``u`` sorted descending, shift
    by that threshold and clip at zero.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise UnmixError("project_simplex got non-finite input")
    vec = v.ndim == 1
    M = v[:, None] if vec else v
    p = M.shape[0]
    # the projection commutes with adding a constant to every entry; shifting
    # by the column max keeps the active entries small and avoids cancellation
    Z = M - M.max(axis=0)
    u = -np.sort(-Z, axis=0)
    css = np.cumsum(u, axis=0) - 1.0
    r = np.arange(1, p + 1)[:, None]
    cond = u - css / r > 0
    # cond holds on a prefix, so its length is the count of True entries
    n_active = cond.sum(axis=0)
    tau = css[n_active - 1, np.arange(M.shape[1])] / n_active
    out = np.maximum(Z - tau, 0.0)
    # points already on the simplex (up to rounding) are their own projection;
    # returning them verbatim makes the operator exactly idempotent
    on = (M.min(axis=0) >= 0) & (np.abs(M.sum(axis=0) - 1.0) <= 4 * p * np.finfo(float).eps)
    out[:, on] = M[:, on]
    return out[:, 0] if vec else out


def data_gradient(Y, A, S, AtY=None) -> np.ndarray:
    """Gradient of ``||Y - A S||_F^2`` with respect to ``S``.

    ``AtY`` may be passed in when ``A.T @ Y`` is already at hand.
    """
    if AtY is None:
        AtY = A.T @ Y
    return 2.0 * ((A.T @ A) @ S - AtY)


def neighbor_sign_sum(S, graph: NeighborGraph) -> np.ndarray:
    """``sum_j rho_kj * sign(s_k - s_j)`` for every pixel, as a ``p x N`` matrix."""
    idx = np.where(graph.index >= 0, graph.index, 0)
    diff = np.sign(S[:, :, None] - S[:, idx])
    return np.einsum("pnk,nk->pn", diff, graph.rho)


def neighbor_l1(S, graph: NeighborGraph) -> float:
    idx = np.where(graph.index >= 0, graph.index, 0)
    dist = np.abs(S[:, :, None] - S[:, idx]).sum(axis=0)
    return float((graph.rho * dist).sum())


def objective(Y, A, S, graph: Optional[NeighborGraph] = None, eta: float = 0.0, lam: float = 0.0) -> float:
    """Penalized reconstruction cost.

    ``||Y - AS||_F^2 + eta * sum_k sum_j rho_kj |s_k - s_j|_1 + lam * sum sqrt(S)``.
    """
    Y, A, S = np.asarray(Y, float), np.asarray(A, float), np.asarray(S, float)
    if A.shape[0] != Y.shape[0] or S.shape != (A.shape[1], Y.shape[1]):
        raise UnmixError(f"dimension mismatch: Y {Y.shape}, A {A.shape}, S {S.shape}")
    cost = float(np.sum((Y - A @ S) ** 2))
    if eta:
        if graph is None:
            raise UnmixError("eta > 0 needs a neighbor graph")
        cost += eta * neighbor_l1(S, graph)
    if lam:
        cost += lam * float(np.sqrt(np.maximum(S, 0.0)).sum())
    return cost


def _gram_objective(yy, AtY, AtA, S, graph, eta, lam) -> float:
    # same value as objective(), from p x N quantities only
    cost = yy - 2.0 * float(np.sum(S * AtY)) + float(np.sum(S * (AtA @ S)))
    if eta:
        cost += eta * neighbor_l1(S, graph)
    if lam:
        cost += lam * float(np.sqrt(np.maximum(S, 0.0)).sum())
    return cost


def nmf_signature_update(Y, A, S) -> np.ndarray:
    """Multiplicative rule ``A * (Y S^T) / (A S S^T)``."""
    num = Y @ S.T
    den = A @ (S @ S.T)
    if np.any(den <= 0):
        raise UnmixError("zero denominator in signature update; clamp A and S first")
    return A * num / den


def nmf_abundance_update(Y, A, S, eps_floor: float = 1e-4) -> np.ndarray:
    """Multiplicative rule ``S * (A^T Y) / (A^T A S)`` followed by simplex projection."""
    S = np.maximum(S, eps_floor)
    den = A.T @ (A @ S)
    if np.any(den <= 0):
        raise UnmixError("zero denominator in abundance update")
    return project_simplex(S * (A.T @ Y) / den)


def sparse_distributed_abundance_step(
    Y,
    A,
    S,
    graph: Optional[NeighborGraph],
    mu: float = 0.01,
    eta: float = 0.1,
    lam: float = 0.0,
    eps_floor: float = 1e-4,
    AtY=None,
) -> np.ndarray:
    """One synchronous projected step for every pixel.

    ``s_k + mu A^T (y_k - A s_k) - mu eta sum_j rho_kj sign(s_k - s_j)
    - mu lam max(s_k, eps_floor)^(-1/2)``, then projection onto the simplex.
    All neighbor reads use the incoming ``S``.
    """
    G = S - 0.5 * mu * data_gradient(Y, A, S, AtY)
    if eta:
        if graph is None:
            raise UnmixError("eta > 0 needs a neighbor graph")
        G -= mu * eta * neighbor_sign_sum(S, graph)
    if lam:
        G -= mu * lam * np.maximum(S, eps_floor) ** -0.5
    if not np.all(np.isfinite(G)):
        raise DivergenceError(f"abundance step produced non-finite values; try a smaller mu than {mu}")
    return project_simplex(G)


def l12_abundance_step(Y, A, S, mu: float = 0.01, lam: float = 0.0, eps_floor: float = 1e-4) -> np.ndarray:
    """Sparse step without neighbor coupling."""
    return sparse_distributed_abundance_step(Y, A, S, None, mu=mu, eta=0.0, lam=lam, eps_floor=eps_floor)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def random_init(Y, p: int, seed: int, method: str = "pixels", floor: float = 1e-4):
    """Random starting point; abundances always start at the simplex centre.

    ``"pixels"`` takes ``p`` distinct observed spectra (clipped at ``floor``)
    as signatures. ``"spread"`` also samples pixels, but after the first one
    each draw is weighted by the squared angle to the nearest pixel already
    taken (k-means++ seeding), with angles computed after projecting onto the
    top-``p`` singular subspace of ``Y``. ``"uniform"`` draws Uniform(0, 1)
    entries and scales each column to unit max.
    """
    L, N = Y.shape
    rng = np.random.default_rng(seed)
    if method == "spread":
        # angles measured in the dominant p-dim subspace are far less noisy
        U = np.linalg.svd(Y, full_matrices=False)[0][:, :p]
        Z = U.T @ Y
        unit = Z / np.maximum(np.linalg.norm(Z, axis=0), np.finfo(float).tiny)
        picked = [int(rng.integers(N))]
        nearest = np.full(N, np.inf)
        for _ in range(p - 1):
            ang = np.arccos(np.clip(unit[:, picked[-1]] @ unit, -1.0, 1.0))
            nearest = np.minimum(nearest, ang)
            w = nearest ** 2
            w[picked] = 0.0
            if w.sum() <= 0:
                w = np.ones(N)
                w[picked] = 0.0
            picked.append(int(rng.choice(N, p=w / w.sum())))
        A0 = np.maximum(Y[:, picked], floor)
    elif method == "pixels":
        A0 = np.maximum(Y[:, rng.choice(N, size=p, replace=False)], floor)
    elif method == "uniform":
        A0 = rng.uniform(0.0, 1.0, size=(L, p))
        A0 /= A0.max(axis=0)
    else:
        raise UnmixError(f"unknown init method {method!r}")
    return A0, np.full((p, N), 1.0 / p)


def resolve_lambda(cfg: AlgoConfig, cube: Cube) -> float:
    if cfg.lam == "auto":
        return auto_lambda(cube)
    if cfg.lam == "zero":
        return 0.0
    return float(cfg.lam)


def run_unmixing(
    cube: Cube,
    p: int,
    method: str = "sparse_distributed",
    cfg: AlgoConfig = AlgoConfig(),
    init: Optional[tuple] = None,
    graph: Optional[NeighborGraph] = None,
) -> UnmixResult:
    """Estimate signatures and abundances of ``cube`` with ``p`` endmembers.

    Iterates until ``cfg.max_iter`` or until the relative change of the
    method's objective falls below ``cfg.rel_tol``. Negative observations are
    clipped to zero for the multiplicative updates only.
    """
    if method not in METHODS:
        raise UnmixError(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")
    Y = cube.data
    L, N = Y.shape
    if p < 2:
        raise UnmixError("p must be at least 2")
    if p > min(L, N):
        raise UnmixError(f"p={p} exceeds min(L, N) = {min(L, N)}")

    eta = cfg.eta if method in _USES_ETA else 0.0
    lam = resolve_lambda(cfg, cube) if method in _USES_LAMBDA else 0.0
    if eta and graph is None:
        graph = build_graph(cube, cfg.connectivity)

    if init is None:
        A, S = random_init(Y, p, cfg.seed, cfg.init, cfg.eps_floor)
    else:
        A = np.array(getattr(init[0], "a", init[0]), dtype=float)
        S = np.array(getattr(init[1], "s", init[1]), dtype=float)
        if A.shape != (L, p) or S.shape != (p, N):
            raise UnmixError(f"init shapes {A.shape}, {S.shape} do not match ({L}, {p}), ({p}, {N})")
    Y_pos = np.maximum(Y, 0.0)
    yy = float(np.sum(Y * Y))

    trace = []
    converged = False
    prev = None
    eps = cfg.eps_floor
    for _ in range(cfg.max_iter):
        if cfg.update_signatures:
            A = nmf_signature_update(Y_pos, np.maximum(A, eps), np.maximum(S, eps))
        if method == "nmf":
            S = nmf_abundance_update(Y_pos, A, S, eps)
            AtY = A.T @ Y
        else:
            AtY = A.T @ Y
            S = sparse_distributed_abundance_step(Y, A, S, graph, cfg.mu, eta, lam, eps, AtY=AtY)
        cost = _gram_objective(yy, AtY, A.T @ A, S, graph, eta, lam)
        if not np.isfinite(cost):
            raise DivergenceError("objective became non-finite")
        trace.append(cost)
        if prev is not None and abs(prev - cost) <= cfg.rel_tol * abs(prev):
            converged = True
            break
        prev = cost

    return UnmixResult(
        signatures=Signatures(A),
        abundances=Abundances(S),
        objective_trace=np.asarray(trace),
        iterations_run=len(trace),
        converged=converged,
        lam=lam,
        eta=eta,
        method=method,
    )
