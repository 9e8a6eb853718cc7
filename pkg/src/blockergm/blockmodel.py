"""Core data types for the block edge-triangle model and exact evaluation
of the Hamiltonian and the discrete cell-restricted densities.

The Hamiltonian of a colored graph X with triangle weights ``alpha`` and
edge weights ``h`` is

    (1/n) * sum_{i,j,l} alpha[i,j,l] * #{u<v<w : u in B_i, v in B_j, w in B_l,
                                          uv, vw, uw all edges}
    + sum_{i,j} h[i,j] * #{u<v : u in B_i, v in B_j, uv an edge},

with every edge and triangle counted exactly once.  Because the blocks are
consecutive integer intervals, the one-sided counts vanish unless the block
indices are nondecreasing.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

_ATOL = 1e-12


def _readonly(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LimitPartition:
    """Partition of [0,1] into k consecutive intervals of lengths b_i > 0."""

    b: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=np.float64)
        if b.ndim != 1 or b.size < 1:
            raise ValueError("block weights must be a nonempty vector")
        if np.any(b <= 0.0):
            raise ValueError("every block weight must be strictly positive")
        if abs(float(b.sum()) - 1.0) > _ATOL:
            raise ValueError(
                f"block weights must sum to 1 within {_ATOL} (got {b.sum()!r})")
        object.__setattr__(self, "b", _readonly(b))

    @property
    def k(self):
        return int(self.b.size)

    @cached_property
    def boundaries(self):
        """Breakpoints 0 = x_0 < ... < x_k = 1 of the block intervals."""
        cum = np.concatenate(([0.0], np.cumsum(self.b)))
        cum[-1] = 1.0
        return _readonly(cum)

    def block_of(self, x):
        """Index of the block whose interval [x_{i-1}, x_i) contains x."""
        i = int(np.searchsorted(self.boundaries, x, side="right")) - 1
        return min(max(i, 0), self.k - 1)


def build_finite_partition(n, limit):
    """Consecutive-interval partition of [n] tracking the limit weights.

    Block sizes are the largest-remainder apportionment of n*b: floor every
    n*b_i, then hand the leftover units to the largest fractional parts
    (ties to the smaller index).  If that leaves an empty block (possible
    for very skewed b at small n), units are moved from the largest blocks
    until every block has at least one vertex, so the postcondition w_i >= 1
    always holds for n >= k.
    """
    n = int(n)
    k = limit.k
    if n < k:
        raise ValueError(f"need n >= k (got n={n}, k={k})")
    target = n * limit.b
    w = np.floor(target).astype(np.int64)
    frac = target - w
    missing = n - int(w.sum())
    if missing > 0:
        # ties resolved to the smaller index: stable sort on (-frac, index)
        order = np.lexsort((np.arange(k), -frac))
        w[order[:missing]] += 1
    while np.any(w == 0):
        donor = int(np.argmax(w))
        recv = int(np.argmin(w))
        w[donor] -= 1
        w[recv] += 1
    return FinitePartition(n=n, w=w, parent=limit)


@dataclass(frozen=True)
class FinitePartition:
    """Partition of [n] into k consecutive integer intervals of sizes w_i."""

    n: int
    w: np.ndarray
    parent: LimitPartition

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.int64)
        if w.ndim != 1 or w.size != self.parent.k:
            raise ValueError("block sizes must have one entry per color")
        if np.any(w < 1):
            raise ValueError("every block must be nonempty")
        if int(w.sum()) != self.n:
            raise ValueError(f"block sizes must sum to n={self.n}")
        object.__setattr__(self, "w", _readonly(w))

    @property
    def k(self):
        return self.parent.k

    @cached_property
    def starts(self):
        """0-based start offset of each block in [0, n)."""
        return _readonly(np.concatenate(([0], np.cumsum(self.w))).astype(np.int64))

    @cached_property
    def colors(self):
        """Vertex -> block index, shape (n,)."""
        return _readonly(np.repeat(np.arange(self.k, dtype=np.int64), self.w))

    @property
    def eta(self):
        """Discretization error max_i |w_i/n - b_i|."""
        return float(np.max(np.abs(self.w / self.n - self.parent.b)))

    def block_slice(self, i):
        return slice(int(self.starts[i]), int(self.starts[i + 1]))


def _symmetrize_tensor(a):
    """Average over the 6 index permutations; return (sym, max correction)."""
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    sym = sum(np.transpose(a, p) for p in perms) / 6.0
    return sym, float(np.max(np.abs(a - sym))) if a.size else 0.0


@dataclass(frozen=True)
class ModelParams:
    """Triangle tensor alpha (k,k,k) and edge matrix h (k,k).

    Constructors accept arbitrary input and symmetrize by averaging over
    index permutations; the largest correction applied is recorded in
    ``alpha_asymmetry`` / ``h_asymmetry``.
    """

    alpha: np.ndarray
    h: np.ndarray
    alpha_asymmetry: float = 0.0
    h_asymmetry: float = 0.0

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        h = np.asarray(self.h, dtype=np.float64)
        if alpha.ndim != 3 or len(set(alpha.shape)) != 1:
            raise ValueError("alpha must be a k x k x k tensor")
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("h must be a k x k matrix")
        if h.shape[0] != alpha.shape[0]:
            raise ValueError(
                f"alpha and h disagree on k: {alpha.shape[0]} vs {h.shape[0]}")
        alpha_s, da = _symmetrize_tensor(alpha)
        h_s = (h + h.T) / 2.0
        dh = float(np.max(np.abs(h - h_s))) if h.size else 0.0
        object.__setattr__(self, "alpha", _readonly(alpha_s))
        object.__setattr__(self, "h", _readonly(h_s))
        object.__setattr__(self, "alpha_asymmetry", da)
        object.__setattr__(self, "h_asymmetry", dh)

    @property
    def k(self):
        return int(self.h.shape[0])

    @property
    def alpha_inf(self):
        return float(np.max(np.abs(self.alpha)))

    @property
    def h_inf(self):
        return float(np.max(np.abs(self.h)))

    def shifted(self, s):
        """Params with every edge weight shifted by s (all-entries shift)."""
        return ModelParams(alpha=self.alpha, h=self.h + float(s))


@dataclass(frozen=True)
class ColoredGraph:
    """Simple graph on [n] with a block membership per vertex."""

    adjacency: np.ndarray
    partition: FinitePartition

    def __post_init__(self):
        x = np.asarray(self.adjacency)
        n = self.partition.n
        if x.shape != (n, n):
            raise ValueError(
                f"adjacency shape {x.shape} does not match n={n}")
        if not np.all((x == 0) | (x == 1)):
            raise ValueError("adjacency entries must be 0/1")
        if np.any(np.diag(x) != 0):
            raise ValueError("adjacency diagonal must be zero")
        if not np.array_equal(x, x.T):
            raise ValueError("adjacency must be symmetric")
        object.__setattr__(self, "adjacency", _readonly(x.astype(np.uint8)))

    @property
    def n(self):
        return self.partition.n

    @property
    def edge_count(self):
        return int(self.adjacency.sum()) // 2


def block_edge_counts(g):
    """One-sided edge counts: entry (i,j) = #{u<v : u in B_i, v in B_j, X_uv=1}."""
    p = g.partition
    k = p.k
    x = g.adjacency
    counts = np.zeros((k, k), dtype=np.int64)
    for i in range(k):
        si = p.block_slice(i)
        counts[i, i] = int(np.triu(x[si, si], 1).sum())
        for j in range(i + 1, k):
            counts[i, j] = int(x[si, p.block_slice(j)].sum())
    return counts


def block_triangle_counts(g):
    """One-sided triangle counts: entry (i,j,l) = #{u<v<w with the stated
    block memberships and all three edges present}."""
    p = g.partition
    k = p.k
    upper = np.triu(g.adjacency, 1).astype(np.float64)
    counts = np.zeros((k, k, k), dtype=np.int64)
    for i in range(k):
        si = p.block_slice(i)
        for j in range(i, k):
            sj = p.block_slice(j)
            for l in range(j, k):
                sl = p.block_slice(l)
                val = np.einsum("uv,vw,uw->",
                                upper[si, sj], upper[sj, sl], upper[si, sl])
                counts[i, j, l] = int(round(val))
    return counts


def hamiltonian(g, params):
    """Exact Hamiltonian value of a colored graph."""
    if params.k != g.partition.k:
        raise ValueError(
            f"params have k={params.k} but graph has k={g.partition.k}")
    tri = block_triangle_counts(g)
    edges = block_edge_counts(g)
    return (float(np.sum(params.alpha * tri)) / g.n
            + float(np.sum(params.h * edges)))


def discrete_cell_densities(g):
    """Ordered-count cell densities of the checkerboard graphon.

    Edge entry (i,j) counts ordered pairs (u,v) with u in B_i, v in B_j and
    X_uv = 1, divided by n^2; triangle entry (i,j,l) counts ordered triples
    with all three pairwise edges, divided by n^3.  These equal the
    cell-restricted integrals of the checkerboard step function exactly.
    """
    p = g.partition
    k, n = p.k, g.n
    x = g.adjacency.astype(np.float64)
    slices = [p.block_slice(i) for i in range(k)]
    edge = np.zeros((k, k))
    tri = np.zeros((k, k, k))
    for i in range(k):
        for j in range(k):
            edge[i, j] = x[slices[i], slices[j]].sum()
    for i in range(k):
        for j in range(k):
            for l in range(k):
                tri[i, j, l] = np.einsum(
                    "uv,vw,uw->", x[slices[i], slices[j]],
                    x[slices[j], slices[l]], x[slices[i], slices[l]])
    return edge / n**2, tri / n**3


def load_colored_graph(path, limit=None):
    """Read a colored graph from an edge-list text file.

    Format: one ``u v`` pair per line (1-based vertex ids), plus exactly one
    line ``blocks: w1 w2 ... wk`` giving the block cardinalities.  If
    ``limit`` is omitted the parent partition is taken as b_i = w_i / n.
    """
    edges = []
    w = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("blocks:"):
                if w is not None:
                    raise ValueError(f"{path}:{lineno}: duplicate blocks line")
                w = np.array([int(t) for t in line[len("blocks:"):].split()],
                             dtype=np.int64)
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'u v'")
            edges.append((int(parts[0]), int(parts[1])))
    if w is None:
        raise ValueError(f"{path}: missing 'blocks: w1 ... wk' line")
    n = int(w.sum())
    if limit is None:
        limit = LimitPartition(b=w / n)
    partition = FinitePartition(n=n, w=w, parent=limit)
    adj = np.zeros((n, n), dtype=np.uint8)
    for u, v in edges:
        if not (1 <= u <= n and 1 <= v <= n) or u == v:
            raise ValueError(f"{path}: bad edge ({u}, {v}) for n={n}")
        adj[u - 1, v - 1] = 1
        adj[v - 1, u - 1] = 1
    return ColoredGraph(adjacency=adj, partition=partition)


def save_colored_graph(path, g):
    """Write a colored graph in the edge-list format read by load_colored_graph."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("blocks: " + " ".join(str(int(x)) for x in g.partition.w) + "\n")
        u_idx, v_idx = np.nonzero(np.triu(g.adjacency, 1))
        for u, v in zip(u_idx, v_idx):
            fh.write(f"{u + 1} {v + 1}\n")
