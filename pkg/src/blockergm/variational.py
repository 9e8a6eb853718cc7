"""The limiting free energy through its finite-dimensional scalar problem.

For nonnegative triangle weights the variational problem over colored
graphons reduces to maximizing, over symmetric matrices C in [0,1]^{k x k},

    (1/6) sum_{ijl} alpha_ijl b_i b_j b_l c_ij c_jl c_li
    + (1/2) sum_{ij} (h_ij + s) b_i b_j c_ij
    - (1/2) sum_{ij} b_i b_j I(c_ij),

with I the mixing entropy.  Any maximizer satisfies the logistic
self-consistency system c_ij = sigma(h_ij + s + sum_l b_l c_il c_jl
alpha_ijl), whose right-hand side defines a map with Lipschitz constant
max|alpha|/2 in the sup norm: for max|alpha| < 2 plain iteration converges
to the unique fixed point from any start.
"""

from dataclasses import dataclass

import numpy as np

from .blockmodel import _readonly
from .errors import NonConvergenceError
from .graphon import (StepGraphon, _color_masks, require_alignment,
                      triangle_density_tensor)
from .util import logit, mixing_entropy, sigmoid

_ATOL = 1e-12


@dataclass(frozen=True)
class BlockMatrix:
    """Symmetric matrix in [0,1]^{k x k}, the scalar-problem variable."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("c must be a square matrix")
        if np.max(np.abs(c - c.T)) > _ATOL:
            raise ValueError("c must be symmetric")
        if np.any(c < -_ATOL) or np.any(c > 1.0 + _ATOL):
            raise ValueError("entries must lie in [0, 1]")
        object.__setattr__(self, "c", _readonly(np.clip((c + c.T) / 2, 0.0, 1.0)))

    @property
    def k(self):
        return int(self.c.shape[0])


@dataclass(frozen=True)
class SolveReport:
    """Outcome of the fixed-point solve."""

    c_star: BlockMatrix
    free_energy: float
    el_residual: float
    iterations: int
    converged: bool
    regime: str              # contractive | ferromagnetic | heuristic
    starts_agreed: int

    def to_dict(self):
        return {
            "c_star": [[float(x) for x in row] for row in self.c_star.c],
            "free_energy": self.free_energy,
            "el_residual": self.el_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "regime": self.regime,
            "starts_agreed": self.starts_agreed,
        }


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-12
    max_iter: int = 100_000
    damping: float | None = None     # default: 1.0 contractive, 0.5 otherwise
    random_starts: int = 13
    seed: int = 0


def _as_matrix(C):
    c = np.asarray(getattr(C, "c", C), dtype=np.float64)
    return c


def _objective_raw(b, alpha, h, c, s):
    """Objective on an arbitrary (not necessarily symmetric) matrix."""
    tri = np.einsum("ijl,i,j,l,ij,jl,li->", alpha, b, b, b, c, c, c) / 6.0
    bb = b[:, None] * b[None, :]
    edge = float(np.sum((h + s) * bb * c)) / 2.0
    ent = float(np.sum(bb * mixing_entropy(c))) / 2.0
    return float(tri) + edge - ent


def objective(limit, params, C, s=0.0):
    """Scalar-problem objective at a symmetric matrix C in [0,1]^{k x k}."""
    c = _as_matrix(C)
    if c.shape != (limit.k, limit.k) or params.k != limit.k:
        raise ValueError("dimension mismatch between partition, params and C")
    if np.any(c < 0.0) or np.any(c > 1.0):
        raise ValueError("entries of C must lie in [0, 1]")
    return _objective_raw(limit.b, params.alpha, params.h, c, float(s))


def objective_gradient(limit, params, C, s=0.0):
    """Partials of the objective w.r.t. each entry c_ij at an interior point:
    (1/2) b_i b_j (T(C)_ij + h_ij + s - logit(c_ij))."""
    c = _as_matrix(C)
    if np.any(c <= 0.0) or np.any(c >= 1.0):
        raise ValueError("gradient requires interior entries")
    T = triangle_map(limit, params, c)
    bb = limit.b[:, None] * limit.b[None, :]
    return 0.5 * bb * (T + params.h + float(s) - logit(c))


def triangle_map(limit, params, C):
    """Block triangle operator: entry (i,j) is sum_l b_l c_il c_jl alpha_ijl."""
    c = _as_matrix(C)
    return np.einsum("l,il,jl,ijl->ij", limit.b, c, c, params.alpha)


def fixed_point_map(limit, params, C, s=0.0):
    """One application of the logistic self-consistency map."""
    c = _as_matrix(C)
    if c.shape != (limit.k, limit.k):
        raise ValueError("C has the wrong shape")
    out = sigmoid(params.h + float(s) + triangle_map(limit, params, c))
    return BlockMatrix(c=out)


def lipschitz_bound(params):
    """Sup-norm Lipschitz constant of the fixed-point map: max|alpha| / 2."""
    return params.alpha_inf / 2.0


def el_residual(limit, params, C, s=0.0):
    """Sup-norm of C - S(C); rejects boundary entries, where the
    stationarity system is undefined (optimizers are interior)."""
    c = _as_matrix(C)
    if np.any(c <= 0.0) or np.any(c >= 1.0):
        raise ValueError("residual requires entries strictly inside (0, 1)")
    return float(np.max(np.abs(c - fixed_point_map(limit, params, c, s).c)))


def classify_regime(params):
    nonneg = bool(np.all(params.alpha >= 0.0))
    if nonneg and params.alpha_inf < 2.0:
        return "contractive"
    if nonneg:
        return "ferromagnetic"
    return "heuristic"


def default_starts(limit, params, s, n_random, seed):
    """All-zeros, all-ones, sigma(h+s), plus seeded random symmetric starts."""
    k = limit.k
    starts = [np.zeros((k, k)), np.ones((k, k)),
              np.asarray(sigmoid(params.h + float(s)))]
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        r = rng.random((k, k))
        starts.append((r + r.T) / 2.0)
    return starts


def solve_fixed_point(limit, params, s=0.0, opts=None):
    """Damped fixed-point iteration from multiple starts.

    Iterates C <- (1-theta) C + theta S(C) until the sup-norm residual
    drops below tol.  In the contractive regime all starts provably meet at
    the unique fixed point; otherwise the converged candidate with the
    largest objective wins (ties to the lexicographically smallest matrix),
    and ``starts_agreed`` counts how many starts landed on the winner.
    """
    opts = opts or SolverOptions()
    if params.k != limit.k:
        raise ValueError("params and partition disagree on k")
    regime = classify_regime(params)
    theta = opts.damping if opts.damping is not None else (
        1.0 if regime == "contractive" else 0.5)
    results = []
    best_residual = np.inf
    for c0 in default_starts(limit, params, s, opts.random_starts, opts.seed):
        c = c0.copy()
        res = np.inf
        it = 0
        for it in range(1, opts.max_iter + 1):
            sc = sigmoid(params.h + float(s) + triangle_map(limit, params, c))
            res = float(np.max(np.abs(c - sc)))
            if res <= opts.tol:
                break
            c = (1.0 - theta) * c + theta * sc
        best_residual = min(best_residual, res)
        if res <= opts.tol:
            results.append((c, it))
    if not results:
        raise NonConvergenceError(
            f"no start converged within {opts.max_iter} iterations "
            f"(best residual {best_residual:.3e})", best_residual=best_residual)

    scored = [(_objective_raw(limit.b, params.alpha, params.h, c, float(s)),
               tuple(-x for x in c.ravel()), c, it) for c, it in results]
    scored.sort(key=lambda t: (t[0], t[1]), reverse=True)
    obj, _, c_star, iterations = scored[0]
    agreed = sum(1 for c, _ in results
                 if np.max(np.abs(c - c_star)) <= 10.0 * opts.tol)
    return SolveReport(
        c_star=BlockMatrix(c=c_star),
        free_energy=obj,
        el_residual=el_residual(limit, params, c_star, s),
        iterations=iterations,
        converged=True,
        regime=regime,
        starts_agreed=agreed,
    )


def predicted_edge_density(limit, C):
    """Limiting edge density sum_ij b_i b_j c_ij of a block matrix."""
    c = _as_matrix(C)
    if c.shape != (limit.k, limit.k):
        raise ValueError("C has the wrong shape")
    if np.max(np.abs(c - c.T)) > _ATOL or np.any(c < 0.0) or np.any(c > 1.0):
        raise ValueError("C must be symmetric with entries in [0, 1]")
    return float(limit.b @ c @ limit.b)


@dataclass(frozen=True)
class HolderCertificate:
    """Two sides of the cyclic-product bound on the triangle interaction.

    lhs = sum alpha_ijl t_ijl(triangle, g); rhs replaces each density by the
    cyclic product of third-moment factors.  gap = rhs - lhs is nonnegative
    for alpha >= 0, with equality at block-constant graphons.
    """

    lhs: float
    rhs: float
    gap: float


def holder_certificate(limit, params, g: StepGraphon):
    """Certificate that the triangle interaction is dominated by its
    cyclic third-moment relaxation; requires alpha >= 0 entrywise and a
    step graphon aligned with a refinement of the limit partition."""
    if np.any(params.alpha < 0.0):
        raise ValueError("certificate requires nonnegative alpha")
    require_alignment(g, limit)
    t2 = triangle_density_tensor(g)
    lhs = float(np.sum(params.alpha * t2))
    # third moments m3[i, j] = integral of g^3 over block cell (i, j)
    w = g.widths
    masks = _color_masks(g)
    k = limit.k
    m3 = np.zeros((k, k))
    cube = g.values ** 3
    for i in range(k):
        for j in range(k):
            m3[i, j] = np.einsum("r,s,rs->", w[masks[i]], w[masks[j]],
                                 cube[np.ix_(masks[i], masks[j])])
    b = limit.b
    rhs = 0.0
    for i in range(k):
        for j in range(k):
            for l in range(k):
                prod = (b[i] * m3[j, l]) * (b[j] * m3[l, i]) * (b[l] * m3[i, j])
                rhs += params.alpha[i, j, l] * prod ** (1.0 / 3.0)
    return HolderCertificate(lhs=lhs, rhs=rhs, gap=rhs - lhs)
