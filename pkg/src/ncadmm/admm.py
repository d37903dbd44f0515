"""Consensus-ADMM iteration engines with injected computation error.

Two engines drive the identical dynamics through different algebra and
cross-validate each other:

``run_decentralized``
    The per-node protocol.  Each iteration, node i solves

        (gram_i + 2c|N_i| I) x_i+ = rhs_i - alpha_i + c (|N_i| own + sum_nbrs)

    and then updates its dual alpha_i += c (|N_i| x_i+ - sum_j x_j+).  Only
    neighbor-local values are touched; neighbor sums run over explicit
    adjacency lists.

``run_matrix_form``
    The stacked primal-dual recursion over the arc matrices: with
    z = 0.5 * Mplus.T x, dual beta, and alpha = Mminus beta,

        grad f(x+) + alpha + 2c D x+ - c Mplus z_hat = 0
        beta+ = beta + (c/2) Mminus.T x+
        z+    = 0.5 * Mplus.T x+

    where z_hat = 0.5 * Mplus.T (x + e_x) carries the injected error.

Noise placement modes:

``analysis_faithful``
    The noisy block x_hat = x + e enters only the x-update's
    c(|N_i| x_i + sum_j x_j) term, including each node's own value; the
    dual update uses exact values.  This is what the matrix recursion above
    perturbs, so it is the mode the convergence certificates target.

``broadcast``
    One noisy value per node per iterate: the broadcast of x^k is used by
    neighbors both in the dual update that consumes x^k and in the next
    x-update; a node's own value stays exact.  Physically realistic
    message-passing; the certificates do not formally cover it.

Error blocks are keyed by (seed, trial, cell, node, iteration-of-the-
perturbed-iterate), so both engines and both modes replay the identical
realization from the same stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noise import NoiseModel, RandomStream, sample_error_block
from .objective import ObjectiveSet
from .topology import Graph, build_arc_matrices

ANALYSIS_FAITHFUL = "analysis_faithful"
BROADCAST = "broadcast"
PLACEMENT_MODES = (ANALYSIS_FAITHFUL, BROADCAST)


@dataclass(frozen=True, eq=False)
class ReferencePoint:
    """The stationary point of the noiseless iteration.

    x_star stacks the centralized solution at every node; z_star is its arc
    average (equal to the centralized solution on every arc); beta_star is
    the minimal-norm dual, which lies in the row space of Mminus.
    """

    x_star: np.ndarray     # (N, n)
    z_star: np.ndarray     # (2E, n)
    beta_star: np.ndarray  # (2E, n)
    x_central: np.ndarray  # (n,)


@dataclass(frozen=True, eq=False)
class SolverState:
    """One iteration's view of the joint solver variables."""

    k: int
    x: np.ndarray
    alpha: np.ndarray
    z: np.ndarray
    beta: np.ndarray
    last_broadcast: np.ndarray | None = None


@dataclass(eq=False)
class Trajectory:
    """Per-iteration record of a run; index 0 is the initial state.

    ``e_xs[k]`` is the error block added to the messages carrying iterate k.
    ``zs``/``betas``/``alphas`` may be None for metric-only runs (record
    "light"); analysis functions require a full record.
    """

    graph: Graph
    c: float
    mode: str
    model: NoiseModel
    xs: np.ndarray                 # (K+1, N, n)
    alphas: np.ndarray | None      # (K+1, N, n)
    e_xs: np.ndarray | None        # (K, N, n)
    zs: np.ndarray | None          # (K+1, 2E, n)
    betas: np.ndarray | None       # (K+1, 2E, n)

    def __len__(self) -> int:
        return self.xs.shape[0]

    @property
    def n_iter(self) -> int:
        return self.xs.shape[0] - 1

    def state(self, k: int) -> SolverState:
        if self.alphas is None or self.zs is None or self.betas is None:
            raise ValueError("state() needs a full-record trajectory")
        broadcast = None
        if self.e_xs is not None and k < self.e_xs.shape[0]:
            broadcast = self.xs[k] + self.e_xs[k]
        return SolverState(k=k, x=self.xs[k], alpha=self.alphas[k],
                           z=self.zs[k], beta=self.betas[k], last_broadcast=broadcast)

    def require_full(self) -> None:
        if self.alphas is None or self.zs is None or self.betas is None or self.e_xs is None:
            raise ValueError("this operation needs a trajectory recorded with record='full'")


def reference_point(g: Graph, obj: ObjectiveSet) -> ReferencePoint:
    """Consensus stack of the centralized solution plus the matching duals.

    beta_star solves Mminus beta = -grad f(x_star) in the minimal-norm
    least-squares sense, which places it in the column space of Mminus.T.
    The stationarity residual must come out below 1e-8 or the problem is
    rejected as too ill-conditioned.
    """
    am = build_arc_matrices(g)
    x_central = obj.centralized_solution()
    x_star = np.tile(x_central, (g.n_nodes, 1))
    z_star = 0.5 * am.apply_mplus_t(x_star)
    grad = obj.gradient_stack(x_star)
    beta_star, *_ = np.linalg.lstsq(am.m_minus, -grad, rcond=None)
    residual = float(np.linalg.norm(grad + am.apply_mminus(beta_star)))
    scale = max(1.0, float(np.linalg.norm(grad)))
    if residual > 1e-8 * scale:
        raise ValueError(f"stationarity residual {residual:.3e} exceeds tolerance")
    return ReferencePoint(x_star=x_star, z_star=z_star, beta_star=beta_star,
                          x_central=x_central)


def gnorm_distance(state: SolverState, ref: ReferencePoint, c: float) -> float:
    """Weighted primal-dual error c*||z - z*||^2 + (1/c)*||beta - beta*||^2."""
    if c <= 0.0:
        raise ValueError(f"c must be positive, got {c}")
    dz = state.z - ref.z_star
    db = state.beta - ref.beta_star
    return c * float(np.sum(dz * dz)) + float(np.sum(db * db)) / c


def gnorm_series(traj: Trajectory, ref: ReferencePoint) -> np.ndarray:
    """The squared weighted primal-dual error at every iteration."""
    traj.require_full()
    dz = traj.zs - ref.z_star
    db = traj.betas - ref.beta_star
    return traj.c * np.sum(dz * dz, axis=(1, 2)) + np.sum(db * db, axis=(1, 2)) / traj.c


def x_err_series(traj: Trajectory, ref: ReferencePoint) -> np.ndarray:
    """Stacked-vector distances ||x^k - x*||_2 at every iteration."""
    d = traj.xs - ref.x_star
    return np.sqrt(np.sum(d * d, axis=(1, 2)))


def _solve_operators(g: Graph, obj: ObjectiveSet, c: float) -> np.ndarray:
    """Per-node inverses of (gram_i + 2c|N_i| I), built once per run.

    The shifted matrices are constant across iterations and positive
    definite, so a one-time inverse applied per step is both cheap and
    stable.
    """
    eye = np.eye(obj.dim)
    mats = np.stack([
        loc.gram + (2.0 * c * d) * eye
        for loc, d in zip(obj.locals, g.degrees)
    ])
    return np.linalg.inv(mats)


def _check_run_args(g: Graph, obj: ObjectiveSet, c: float, max_iter: int) -> None:
    if g.n_edges == 0:
        raise ValueError("graph has no edges; the iteration is undefined")
    if obj.n_nodes != g.n_nodes:
        raise ValueError(
            f"objective has {obj.n_nodes} locals but graph has {g.n_nodes} nodes"
        )
    if c <= 0.0:
        raise ValueError(f"c must be positive, got {c}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")


def run_decentralized(
    g: Graph,
    obj: ObjectiveSet,
    c: float,
    model: NoiseModel,
    mode: str,
    max_iter: int,
    stream: RandomStream,
    record: str = "full",
    x0: np.ndarray | None = None,
    alpha0: np.ndarray | None = None,
) -> Trajectory:
    """Run the per-node protocol for ``max_iter`` iterations.

    Starts from x = alpha = 0 unless overridden.  ``record="light"`` keeps
    only the x history (used by the Monte Carlo sweep); "full" additionally
    stores duals, arc variables, and the injected error blocks.
    """
    _check_run_args(g, obj, c, max_iter)
    if mode not in PLACEMENT_MODES:
        raise ValueError(f"unknown placement mode {mode!r}; expected one of {PLACEMENT_MODES}")
    n_nodes, dim = g.n_nodes, obj.dim
    degrees = g.degrees.astype(float)[:, None]
    flat_nbrs = np.concatenate([np.array(nb, dtype=np.intp) for nb in g.neighbors])
    offsets = np.zeros(n_nodes, dtype=np.intp)
    np.cumsum(g.degrees[:-1], out=offsets[1:])
    inv_ops = _solve_operators(g, obj, c)
    rhs_const = np.stack([loc.rhs for loc in obj.locals])

    full = record == "full"
    am = build_arc_matrices(g) if full else None

    x = np.zeros((n_nodes, dim)) if x0 is None else np.array(x0, dtype=float)
    alpha = np.zeros((n_nodes, dim)) if alpha0 is None else np.array(alpha0, dtype=float)

    xs = np.empty((max_iter + 1, n_nodes, dim))
    xs[0] = x
    alphas = e_xs = zs = betas = None
    if full:
        alphas = np.empty_like(xs)
        alphas[0] = alpha
        e_xs = np.empty((max_iter, n_nodes, dim))
        zs = np.empty((max_iter + 1, g.n_arcs, dim))
        betas = np.empty_like(zs)
        zs[0] = 0.5 * am.apply_mplus_t(x)
        if alpha0 is None:
            beta = np.zeros((g.n_arcs, dim))
        else:
            # bookkeeping dual consistent with a nonzero start: alpha = Mminus beta
            beta, *_ = np.linalg.lstsq(am.m_minus, alpha, rcond=None)
        betas[0] = beta

    def nbr_sum(values: np.ndarray) -> np.ndarray:
        return np.add.reduceat(values[flat_nbrs], offsets, axis=0)

    for k in range(max_iter):
        e_k = sample_error_block(model, x, stream, k)
        x_hat = x + e_k
        own = x_hat if mode == ANALYSIS_FAITHFUL else x
        rhs = rhs_const - alpha + c * (degrees * own + nbr_sum(x_hat))
        x_new = np.einsum("nij,nj->ni", inv_ops, rhs)

        if mode == ANALYSIS_FAITHFUL:
            reported = x_new
        else:
            reported = x_new + sample_error_block(model, x_new, stream, k + 1)
        alpha = alpha + c * (degrees * x_new - nbr_sum(reported))
        x = x_new

        xs[k + 1] = x
        if full:
            alphas[k + 1] = alpha
            e_xs[k] = e_k
            zs[k + 1] = 0.5 * am.apply_mplus_t(x)
            beta = beta + (0.5 * c) * am.apply_mminus_t(x)
            betas[k + 1] = beta

    return Trajectory(graph=g, c=c, mode=mode, model=model,
                      xs=xs, alphas=alphas, e_xs=e_xs, zs=zs, betas=betas)


def run_matrix_form(
    g: Graph,
    obj: ObjectiveSet,
    c: float,
    model: NoiseModel,
    max_iter: int,
    stream: RandomStream,
    record: str = "full",
    x0: np.ndarray | None = None,
    beta0: np.ndarray | None = None,
) -> Trajectory:
    """Run the stacked arc-matrix recursion (analysis-faithful placement).

    Consumes the identical error realization as :func:`run_decentralized`
    for the same stream, which makes the two engines cross-validating
    implementations of the same dynamics.  ``beta0`` should lie in the row
    space of Mminus (the zero default does) for the certificates to apply.
    """
    _check_run_args(g, obj, c, max_iter)
    n_nodes, dim = g.n_nodes, obj.dim
    am = build_arc_matrices(g)
    inv_ops = _solve_operators(g, obj, c)
    rhs_const = np.stack([loc.rhs for loc in obj.locals])

    x = np.zeros((n_nodes, dim)) if x0 is None else np.array(x0, dtype=float)
    beta = np.zeros((g.n_arcs, dim)) if beta0 is None else np.array(beta0, dtype=float)

    full = record == "full"
    xs = np.empty((max_iter + 1, n_nodes, dim))
    xs[0] = x
    alphas = e_xs = zs = betas = None
    if full:
        alphas = np.empty_like(xs)
        alphas[0] = am.apply_mminus(beta)
        e_xs = np.empty((max_iter, n_nodes, dim))
        zs = np.empty((max_iter + 1, g.n_arcs, dim))
        betas = np.empty_like(zs)
        zs[0] = 0.5 * am.apply_mplus_t(x)
        betas[0] = beta

    for k in range(max_iter):
        e_k = sample_error_block(model, x, stream, k)
        z_hat = 0.5 * am.apply_mplus_t(x + e_k)
        alpha = am.apply_mminus(beta)
        rhs = rhs_const - alpha + c * am.apply_mplus(z_hat)
        x = np.einsum("nij,nj->ni", inv_ops, rhs)
        beta = beta + (0.5 * c) * am.apply_mminus_t(x)

        xs[k + 1] = x
        if full:
            alphas[k + 1] = am.apply_mminus(beta)
            e_xs[k] = e_k
            zs[k + 1] = 0.5 * am.apply_mplus_t(x)
            betas[k + 1] = beta

    return Trajectory(graph=g, c=c, mode=ANALYSIS_FAITHFUL, model=model,
                      xs=xs, alphas=alphas, e_xs=e_xs, zs=zs, betas=betas)
