"""Step-graphon representation and the analytic functionals on it.

A step graphon is a symmetric piecewise-constant function on [0,1]^2 with
values in [0,1], given by breakpoints 0 = x_0 < ... < x_m = 1, an m x m
value matrix, and a color per cell.  Cells of the same color form one
consecutive block; a graphon is "aligned" with a limit partition when its
color blocks reproduce the partition's intervals.

Cell-restricted densities integrate an edge or triangle pattern over
prescribed color blocks, without normalizing by the block measures, so the
values live in [0, prod of block lengths] rather than [0,1].
"""

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .blockmodel import ColoredGraph, _readonly
from .util import mixing_entropy

_ATOL = 1e-12
#: breakpoint de-duplication tolerance for common refinements
MERGE_TOL = 1e-15
#: largest per-axis cell count for which cut norms are computed exactly
EXACT_CUT_CELLS = 14


def _validate_grid(boundaries, values, coloring, lo, hi):
    boundaries = np.asarray(boundaries, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    coloring = np.asarray(coloring, dtype=np.int64)
    m = boundaries.size - 1
    if m < 1:
        raise ValueError("need at least one cell")
    if abs(boundaries[0]) > _ATOL or abs(boundaries[-1] - 1.0) > _ATOL:
        raise ValueError("boundaries must start at 0 and end at 1")
    if np.any(np.diff(boundaries) <= 0):
        raise ValueError("boundaries must be strictly increasing")
    boundaries = boundaries.copy()
    boundaries[0], boundaries[-1] = 0.0, 1.0
    if values.shape != (m, m):
        raise ValueError(f"values must be {m} x {m}")
    if np.max(np.abs(values - values.T)) > _ATOL:
        raise ValueError("values must be symmetric")
    values = (values + values.T) / 2.0
    if lo is not None and (np.any(values < lo - _ATOL) or np.any(values > hi + _ATOL)):
        raise ValueError(f"values must lie in [{lo}, {hi}]")
    if lo is not None:
        values = np.clip(values, lo, hi)
    if coloring.shape != (m,):
        raise ValueError("coloring must assign one color per cell")
    if coloring[0] != 0 or np.any(np.diff(coloring) < 0) or np.any(np.diff(coloring) > 1):
        raise ValueError(
            "coloring must be nondecreasing consecutive integers starting at 0")
    return boundaries, values, coloring


@dataclass(frozen=True)
class StepGraphon:
    """Symmetric step function on [0,1]^2 valued in [0,1], with cell colors."""

    boundaries: np.ndarray
    values: np.ndarray
    coloring: np.ndarray

    def __post_init__(self):
        b, v, c = _validate_grid(self.boundaries, self.values, self.coloring,
                                 0.0, 1.0)
        object.__setattr__(self, "boundaries", _readonly(b))
        object.__setattr__(self, "values", _readonly(v))
        object.__setattr__(self, "coloring", _readonly(c))

    @property
    def m(self):
        return int(self.coloring.size)

    @property
    def k(self):
        return int(self.coloring[-1]) + 1

    @cached_property
    def widths(self):
        return _readonly(np.diff(self.boundaries))

    @cached_property
    def color_weights(self):
        """Total width per color; the block-length vector this graphon carries."""
        return _readonly(np.bincount(self.coloring, weights=self.widths,
                                     minlength=self.k))


@dataclass(frozen=True)
class StepKernel:
    """Symmetric step function on [0,1]^2 without the [0,1] value constraint."""

    boundaries: np.ndarray
    values: np.ndarray
    coloring: np.ndarray

    def __post_init__(self):
        b, v, c = _validate_grid(self.boundaries, self.values, self.coloring,
                                 None, None)
        object.__setattr__(self, "boundaries", _readonly(b))
        object.__setattr__(self, "values", _readonly(v))
        object.__setattr__(self, "coloring", _readonly(c))

    @property
    def widths(self):
        return np.diff(self.boundaries)


def aligned_with(g, limit, tol=1e-9):
    """True when g's color blocks reproduce the limit partition's intervals."""
    if g.k != limit.k:
        return False
    edges = np.concatenate(([0.0], np.cumsum(g.color_weights)))
    return bool(np.max(np.abs(edges - limit.boundaries)) <= tol)


def require_alignment(g, limit, tol=1e-9):
    if not aligned_with(g, limit, tol):
        raise ValueError("step graphon does not refine the limit partition")


def checkerboard(g: ColoredGraph, coloring="finite"):
    """Checkerboard step graphon of a colored graph.

    coloring="finite": n equal cells of width 1/n, cell u colored by the
    block of vertex u; cell densities of this object are the discrete
    (finite-partition) densities.

    coloring="limit": the same step function on the grid refined by the
    limit block boundaries, cells colored by the limit block containing
    them (the color-blind embedding); cell densities are then taken against
    the limiting partition.
    """
    p = g.partition
    n = g.n
    vertex_grid = np.arange(n + 1, dtype=np.float64) / n
    if coloring == "finite":
        bounds = vertex_grid
        cols = p.colors
        values = g.adjacency.astype(np.float64)
        return StepGraphon(boundaries=bounds, values=values, coloring=cols)
    if coloring != "limit":
        raise ValueError("coloring must be 'finite' or 'limit'")
    bounds = _merge_breakpoints(vertex_grid, p.parent.boundaries)
    mids = (bounds[:-1] + bounds[1:]) / 2.0
    vert = np.minimum((mids * n).astype(np.int64), n - 1)
    cols = np.array([p.parent.block_of(x) for x in mids], dtype=np.int64)
    values = g.adjacency[np.ix_(vert, vert)].astype(np.float64)
    return StepGraphon(boundaries=bounds, values=values, coloring=cols)


def block_graphon(limit, C):
    """The block-constant graphon with value c_ij on block cell (i, j)."""
    c = np.asarray(getattr(C, "c", C), dtype=np.float64)
    return StepGraphon(boundaries=limit.boundaries, values=c,
                       coloring=np.arange(limit.k))


def _color_masks(g):
    return [g.coloring == i for i in range(g.k)]


def cell_density(pattern, g, colors):
    """Cell-restricted density of an edge or triangle pattern.

    The integral over the prescribed color blocks is computed exactly as a
    finite sum over cell tuples weighted by cell widths.  Not normalized by
    the block measures.
    """
    w = g.widths
    v = g.values
    masks = _color_masks(g)
    for c in colors:
        if not 0 <= c < g.k:
            raise ValueError(f"color {c} out of range for k={g.k}")
    if pattern == "edge":
        if len(colors) != 2:
            raise ValueError("edge pattern takes a color pair")
        i, j = colors
        return float(np.einsum("r,s,rs->", w[masks[i]], w[masks[j]],
                               v[np.ix_(masks[i], masks[j])]))
    if pattern == "triangle":
        if len(colors) != 3:
            raise ValueError("triangle pattern takes a color triple")
        i, j, l = colors
        return float(np.einsum(
            "r,s,t,rs,st,rt->",
            w[masks[i]], w[masks[j]], w[masks[l]],
            v[np.ix_(masks[i], masks[j])],
            v[np.ix_(masks[j], masks[l])],
            v[np.ix_(masks[i], masks[l])]))
    raise ValueError(f"unknown pattern {pattern!r}")


def edge_density_tensor(g):
    """All cell-restricted edge densities at once, shape (k, k)."""
    w = g.widths
    P = np.zeros((g.k, g.m))
    P[g.coloring, np.arange(g.m)] = 1.0
    M = (w[:, None] * w[None, :]) * g.values
    return P @ M @ P.T


def triangle_density_tensor(g):
    """All cell-restricted triangle densities at once, shape (k, k, k)."""
    k, m = g.k, g.m
    w = g.widths
    v = g.values
    masks = _color_masks(g)
    P = np.zeros((k, m))
    P[g.coloring, np.arange(m)] = 1.0
    out = np.zeros((k, k, k))
    for i in range(k):
        vi = v[masks[i], :]
        wi = w[masks[i]]
        # B[s,t] = sum_{r in C_i} w_r v_rs v_rt
        B = vi.T @ (wi[:, None] * vi)
        M = B * v * (w[:, None] * w[None, :])
        out[i] = P @ M @ P.T
    return out


def total_edge_density(g):
    """Integral of g over [0,1]^2 (equals 2E/n^2 for checkerboards)."""
    w = g.widths
    return float(w @ g.values @ w)


def entropy_functional(g):
    """Integral of u ln u + (1-u) ln(1-u) over [0,1]^2 against g."""
    w = g.widths
    return float(w @ mixing_entropy(g.values) @ w)


def interaction_functional(limit, params, g):
    """(1/6) sum alpha_ijl t_ijl(triangle) + (1/2) sum h_ij t_ij(edge)."""
    if g.k != params.k or g.k != limit.k:
        raise ValueError("graphon, params and partition disagree on k")
    t2 = triangle_density_tensor(g)
    t1 = edge_density_tensor(g)
    return (float(np.sum(params.alpha * t2)) / 6.0
            + float(np.sum(params.h * t1)) / 2.0)


def triangle_operator(limit, params, g):
    """Nonlinear triangle operator on a step graphon.

    On cell pair (r, s) with colors (i, j) the output value is
    sum_t width_t * alpha[i, j, color(t)] * v_rt * v_st; a symmetric step
    field on the same grid, not constrained to [0,1].  On a block graphon
    this reduces to entry sums sum_l b_l c_il c_jl alpha_ijl.
    """
    if g.k != params.k or g.k != limit.k:
        raise ValueError("graphon, params and partition disagree on k")
    v = g.values
    w = g.widths
    out = np.zeros_like(v)
    cols = g.coloring
    for l, mask in enumerate(_color_masks(g)):
        K = (v[:, mask] * w[mask]) @ v[:, mask].T
        A = params.alpha[:, :, l][np.ix_(cols, cols)]
        out += A * K
    return StepKernel(boundaries=g.boundaries, values=out, coloring=cols)


# ---------------------------------------------------------------------------
# cut norm and colored cut distance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutNormResult:
    """value is exact when ``exact``; otherwise a heuristic lower bound."""

    value: float
    exact: bool


def _merge_breakpoints(a, b):
    merged = np.union1d(a, b)
    keep = [merged[0]]
    for x in merged[1:]:
        if x - keep[-1] > MERGE_TOL:
            keep.append(x)
        else:
            keep[-1] = max(keep[-1], x)
    out = np.asarray(keep, dtype=np.float64)
    out[0], out[-1] = 0.0, 1.0
    return out


def _refine_to(g, bounds):
    mids = (bounds[:-1] + bounds[1:]) / 2.0
    cell = np.minimum(np.searchsorted(g.boundaries, mids, side="right") - 1,
                      g.m - 1)
    return g.values[np.ix_(cell, cell)], g.coloring[cell]


def common_refinement(g1, g2):
    """Joint grid carrying both value matrices; colorings must agree."""
    bounds = _merge_breakpoints(g1.boundaries, g2.boundaries)
    v1, c1 = _refine_to(g1, bounds)
    v2, c2 = _refine_to(g2, bounds)
    if not np.array_equal(c1, c2):
        raise ValueError("graphons do not refine the same partition")
    return bounds, v1, v2, c1


def cut_norm_kernel(widths, delta, exact_threshold=EXACT_CUT_CELLS,
                    restarts=32, seed=0):
    """Cut norm of a symmetric step kernel given cell widths and values.

    Exact for m <= exact_threshold cells: the bilinear objective is
    maximized at indicator vertices, so all 2^m row subsets are enumerated
    (Gray order, O(m) updates) with the column side optimized
    coordinatewise.  Beyond the threshold an alternating maximization from
    random restarts reports a lower bound flagged heuristic.
    """
    w = np.asarray(widths, dtype=np.float64)
    M = (w[:, None] * w[None, :]) * np.asarray(delta, dtype=np.float64)
    m = w.size
    if m <= exact_threshold:
        best = 0.0
        t = np.zeros(m)
        inset = np.zeros(m, dtype=bool)
        for step in range(1, 1 << m):
            e = (step & -step).bit_length() - 1
            if inset[e]:
                t -= M[e]
            else:
                t += M[e]
            inset[e] = ~inset[e]
            pos = t[t > 0.0].sum()
            neg = -t[t < 0.0].sum()
            best = max(best, pos, neg)
        return CutNormResult(value=float(best), exact=True)
    rng = np.random.default_rng(seed)
    best = 0.0
    for sign in (1.0, -1.0):
        S = sign * M
        for _ in range(restarts):
            rows, val = _bilinear_ascent(S, rng.random(m) < 0.5)
            # single-flip polish: escape 1-flip-unstable bi-optima
            improved = True
            while improved:
                improved = False
                for r in range(m):
                    rows2 = rows.copy()
                    rows2[r] = not rows2[r]
                    t = S[rows2].sum(axis=0)
                    if t[t > 0.0].sum() > val + 1e-13:
                        rows, val = _bilinear_ascent(S, rows2)
                        improved = True
                        break
            best = max(best, val)
    return CutNormResult(value=float(best), exact=False)


def _bilinear_ascent(S, rows):
    """Alternate exact one-side updates of max_{R,S} sum_{r in R, s in S} S_rs
    until a bi-optimal subset pair is reached; returns (rows, value)."""
    val = -np.inf
    for _ in range(500):
        colsum = S[rows].sum(axis=0)
        cols = colsum > 0.0
        rowsum = S[:, cols].sum(axis=1)
        rows_new = rowsum > 0.0
        new_val = rowsum[rows_new].sum()
        if new_val <= val + 1e-15:
            break
        rows, val = rows_new, new_val
    return rows, max(val, 0.0)


def cut_norm(g1, g2, exact_threshold=EXACT_CUT_CELLS, restarts=32, seed=0):
    """Cut norm of g1 - g2 on their common refinement grid."""
    bounds, v1, v2, _ = common_refinement(g1, g2)
    return cut_norm_kernel(np.diff(bounds), v1 - v2,
                           exact_threshold=exact_threshold,
                           restarts=restarts, seed=seed)


def _sign_patterns(k):
    pats = np.ones((1 << k, k))
    for ebit in range(k):
        pats[:, ebit] = np.where((np.arange(1 << k) >> ebit) & 1, 1.0, -1.0)
    return pats


def _best_cols(T, coloring, k, signs):
    """max over column subsets of sum_j sum_i |sum_{s in S cap C_j} T[i,s]|,
    maximized exactly per color class via sign-pattern enumeration.
    Returns (value, chosen column mask)."""
    total = 0.0
    chosen = np.zeros(T.shape[1], dtype=bool)
    for j in range(k):
        cols = coloring == j
        Q = signs @ T[:, cols]
        gains = np.maximum(Q, 0.0).sum(axis=1)
        e = int(np.argmax(gains))
        total += float(gains[e])
        sel = np.zeros(T.shape[1], dtype=bool)
        sel[cols] = Q[e] > 0.0
        chosen |= sel
    return total, chosen


def colored_cut_kernel(widths, delta, coloring, exact_threshold=EXACT_CUT_CELLS,
                       restarts=32, seed=0):
    """Colored cut distance of a step kernel: single sup over a subset pair,
    summing the absolute per-block-pair integrals.

    Exact for m <= exact_threshold via enumeration of row subsets (Gray
    order) with the column side solved exactly per color class; heuristic
    alternating maximization (flagged) beyond.
    """
    w = np.asarray(widths, dtype=np.float64)
    coloring = np.asarray(coloring, dtype=np.int64)
    M = (w[:, None] * w[None, :]) * np.asarray(delta, dtype=np.float64)
    m = w.size
    k = int(coloring.max()) + 1
    signs = _sign_patterns(k)
    if m <= exact_threshold:
        best = 0.0
        T = np.zeros((k, m))
        inset = np.zeros(m, dtype=bool)
        for step in range(1, 1 << m):
            e = (step & -step).bit_length() - 1
            if inset[e]:
                T[coloring[e]] -= M[e]
            else:
                T[coloring[e]] += M[e]
            inset[e] = ~inset[e]
            val, _ = _best_cols(T, coloring, k, signs)
            best = max(best, val)
        return CutNormResult(value=float(best), exact=True)
    rng = np.random.default_rng(seed)
    best = 0.0
    P = np.zeros((k, m))
    P[coloring, np.arange(m)] = 1.0

    def ascend(rows):
        val = -np.inf
        for _ in range(500):
            T = P[:, rows] @ M[rows]          # (k, m): block row sums
            v1, cols = _best_cols(T, coloring, k, signs)
            Tr = P[:, cols] @ M[:, cols].T    # (k, m) over rows, transposed
            v2, rows_new = _best_cols(Tr, coloring, k, signs)
            if v2 <= val + 1e-15:
                val = max(val, v1, v2)
                break
            rows, val = rows_new, v2
        return rows, max(val, 0.0)

    for _ in range(restarts):
        rows, val = ascend(rng.random(m) < 0.5)
        improved = True
        while improved:
            improved = False
            for r in range(m):
                rows2 = rows.copy()
                rows2[r] = not rows2[r]
                T = P[:, rows2] @ M[rows2]
                if _best_cols(T, coloring, k, signs)[0] > val + 1e-13:
                    rows, val = ascend(rows2)
                    improved = True
                    break
        best = max(best, val)
    return CutNormResult(value=float(best), exact=False)


def colored_cut_distance(g1, g2, exact_threshold=EXACT_CUT_CELLS,
                         restarts=32, seed=0):
    """Colored cut distance between representatives on a shared partition.

    No infimum over relabelings is taken, so this is an upper bound for the
    quotient distance.  Satisfies
    cut_norm <= colored_cut_distance <= k^2 * cut_norm.
    """
    bounds, v1, v2, coloring = common_refinement(g1, g2)
    return colored_cut_kernel(np.diff(bounds), v1 - v2, coloring,
                              exact_threshold=exact_threshold,
                              restarts=restarts, seed=seed)


# ---------------------------------------------------------------------------
# discretization bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscretizationBounds:
    """Worst-case gaps between finite- and limit-partition cell densities."""

    eta: float
    edge_bound: float
    triangle_bound: float


def discretization_bounds(fp):
    """eta_n = max_i |w_i/n - b_i| with the (4k-2) and (6k-3) density bounds."""
    eta = fp.eta
    k = fp.k
    return DiscretizationBounds(eta=eta, edge_bound=(4 * k - 2) * eta,
                                triangle_bound=(6 * k - 3) * eta)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def graphon_to_json(g):
    """JSON text with boundaries, row-major values, and coloring."""
    return json.dumps({
        "boundaries": list(map(float, g.boundaries)),
        "values": list(map(float, np.asarray(g.values).ravel())),
        "coloring": list(map(int, g.coloring)),
    }, indent=2)


def graphon_from_json(text):
    doc = json.loads(text)
    bounds = np.asarray(doc["boundaries"], dtype=np.float64)
    m = bounds.size - 1
    values = np.asarray(doc["values"], dtype=np.float64).reshape(m, m)
    return StepGraphon(boundaries=bounds, values=values,
                       coloring=np.asarray(doc["coloring"], dtype=np.int64))


def render_grid(g, resolution=200):
    """Dense resolution x resolution sampling of g for external plotting."""
    mids = (np.arange(resolution) + 0.5) / resolution
    cell = np.minimum(np.searchsorted(g.boundaries, mids, side="right") - 1,
                      g.m - 1)
    return g.values[np.ix_(cell, cell)]
