"""Exact finite-n quantities by full enumeration or closed-form factorization.

The enumerator walks the 2^(n(n-1)/2) adjacency configurations in Gray-code
order, toggling one edge per step.  The Hamiltonian difference of a single
edge toggle is h[c(u),c(v)] plus (1/n) times the alpha-weighted count of
common neighbors by class, so each step costs O(n) bit operations and the
log partition function accumulates through a running-maximum log-sum-exp.
The configuration space is split by fixing a prefix of edge variables;
chunks are independent and merged by log-sum-exp, so the result is
deterministic and independent of the chunk count.
"""

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .blockmodel import ColoredGraph, hamiltonian
from .errors import ResourceLimitError
from .util import softplus

#: default cap on edge slots for full enumeration (28 slots = n <= 8)
DEFAULT_CAP = 28
#: default number of low Gray-walk bits per chunk
CHUNK_BITS = 22


@dataclass(frozen=True)
class ExactResult:
    """Exact Gibbs summaries at finite n."""

    log_z: float
    free_energy_n: float
    mean_edge_density: float
    n: int
    k: int
    params_digest: str

    def __post_init__(self):
        if not math.isfinite(self.free_energy_n):
            raise ValueError("free energy must be finite")
        if not 0.0 <= self.mean_edge_density <= 1.0:
            raise ValueError("mean edge density must lie in [0, 1]")

    def to_dict(self):
        return {
            "log_z": self.log_z,
            "free_energy_n": self.free_energy_n,
            "mean_edge_density": self.mean_edge_density,
            "n": self.n,
            "k": self.k,
            "params_digest": self.params_digest,
        }


def params_digest(partition, params):
    """Opaque fingerprint of (n, w, b, alpha, h)."""
    doc = json.dumps({
        "n": partition.n,
        "w": [int(x) for x in partition.w],
        "b": [float(x) for x in partition.parent.b],
        "alpha": [float(x) for x in np.asarray(params.alpha).ravel()],
        "h": [float(x) for x in np.asarray(params.h).ravel()],
    }, sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


@njit(cache=True, nogil=True)
def _gray_chunk(rows, colors, eu, ev, hvec, alpha_n, class_masks,
                h0, e0, m_low, inv_n2):
    """Gray walk over the low m_low edge slots from the given start state.

    rows: per-vertex neighbor bitsets (int64, n <= 62); mutated in place.
    Returns the running-max log-sum-exp triple (M, A, B) where A sums
    exp(H - M) and B sums exp(H - M) * (2E/n^2) over all visited states.
    """
    H = h0
    E = e0
    M = H
    A = 1.0
    B = 2.0 * E * inv_n2
    k = class_masks.shape[0]
    nsteps = 1 << m_low
    for t in range(1, nsteps):
        e = 0
        tt = t
        while tt & 1 == 0:
            tt >>= 1
            e += 1
        u = eu[e]
        v = ev[e]
        common = rows[u] & rows[v]
        dH = hvec[e]
        cu = colors[u]
        cv = colors[v]
        for l in range(k):
            x = common & class_masks[l]
            c = 0
            while x != 0:
                x &= x - 1
                c += 1
            dH += alpha_n[cu, cv, l] * c
        if (rows[u] >> v) & 1 == 1:
            H -= dH
            E -= 1
            rows[u] &= ~(1 << v)
            rows[v] &= ~(1 << u)
        else:
            H += dH
            E += 1
            rows[u] |= 1 << v
            rows[v] |= 1 << u
        dens = 2.0 * E * inv_n2
        if H > M:
            scale = math.exp(M - H)
            A = A * scale + 1.0
            B = B * scale + dens
            M = H
        else:
            w = math.exp(H - M)
            A += w
            B += w * dens
    return M, A, B


def _edge_slots(n):
    """Lexicographic (u, v) pairs with u < v."""
    eu, ev = [], []
    for u in range(n):
        for v in range(u + 1, n):
            eu.append(u)
            ev.append(v)
    return np.asarray(eu, dtype=np.int64), np.asarray(ev, dtype=np.int64)


def _class_masks_int64(partition):
    masks = np.zeros(partition.k, dtype=np.int64)
    for v, c in enumerate(partition.colors):
        masks[c] |= 1 << v
    return masks


def log_partition_enumerate(partition, params, cap=DEFAULT_CAP,
                            chunk_bits=CHUNK_BITS, workers=None):
    """Exact log partition function and Gibbs mean edge density.

    Raises ResourceLimitError when n(n-1)/2 exceeds ``cap`` edge slots.
    """
    n = partition.n
    if params.k != partition.k:
        raise ValueError("params and partition disagree on k")
    m = n * (n - 1) // 2
    if m > cap:
        raise ResourceLimitError(
            f"enumeration needs {m} edge slots, exceeding the cap of {cap}; "
            f"raise the cap explicitly to force it")
    eu, ev = _edge_slots(n)
    colors = partition.colors.astype(np.int64)
    hvec = params.h[colors[eu], colors[ev]].astype(np.float64)
    alpha_n = (params.alpha / n).astype(np.float64)
    class_masks = _class_masks_int64(partition)

    m_low = min(m, max(chunk_bits, 1))
    n_chunks = 1 << (m - m_low)

    def run_chunk(c):
        adj = np.zeros((n, n), dtype=np.uint8)
        for e in range(m_low, m):
            if (c >> (e - m_low)) & 1:
                adj[eu[e], ev[e]] = 1
                adj[ev[e], eu[e]] = 1
        g = ColoredGraph(adjacency=adj, partition=partition)
        rows = np.zeros(n, dtype=np.int64)
        for u in range(n):
            for v in range(n):
                if adj[u, v]:
                    rows[u] |= 1 << v
        h0 = hamiltonian(g, params)
        return _gray_chunk(rows, colors, eu, ev, hvec, alpha_n, class_masks,
                           h0, g.edge_count, m_low, 1.0 / n**2)

    if n_chunks == 1:
        parts = [run_chunk(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_chunk, range(n_chunks)))

    M = max(p[0] for p in parts)
    A = sum(p[1] * math.exp(p[0] - M) for p in parts)
    B = sum(p[2] * math.exp(p[0] - M) for p in parts)
    log_z = M + math.log(A)
    return ExactResult(
        log_z=log_z,
        free_energy_n=log_z / n**2,
        mean_edge_density=min(max(B / A, 0.0), 1.0),
        n=n,
        k=partition.k,
        params_digest=params_digest(partition, params),
    )


def log_partition_factorized(partition, h):
    """Closed-form log Z when all triangle weights vanish.

    The model factorizes over block pairs into independent Bernoulli edges,
    collapsing the binomial sums:
        sum_{i<j} w_i w_j ln(1+e^{h_ij}) + sum_i C(w_i,2) ln(1+e^{h_ii}).
    The caller asserts alpha == 0.
    """
    w = partition.w
    h = np.asarray(h, dtype=np.float64)
    k = partition.k
    if h.shape != (k, k):
        raise ValueError(f"h must be {k} x {k}")
    total = 0.0
    for i in range(k):
        total += (w[i] * (w[i] - 1) // 2) * softplus(h[i, i])
        for j in range(i + 1, k):
            total += int(w[i] * w[j]) * softplus(h[i, j])
    return float(total)


def scaled_cgf(partition, params, s, cap=DEFAULT_CAP):
    """Scaled cumulant generating function of the edge count,
    2 * (f_n at h shifted by s in every entry - f_n at h)."""
    base = log_partition_enumerate(partition, params, cap=cap)
    shifted = log_partition_enumerate(partition, params.shifted(s), cap=cap)
    return 2.0 * (shifted.free_energy_n - base.free_energy_n)
