"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the library's own computation paths:
Hamiltonians by naive triple loops, partition functions by streaming
enumeration in plain lexicographic order, scalar maximizations by bounded
search.  Expected values frozen into tests were produced by these.
"""

import itertools
import math

import numpy as np
import pytest

from blockergm import (ColoredGraph, LimitPartition, ModelParams,
                       StepGraphon, build_finite_partition)
from blockergm.variational import fixed_point_map


def brute_hamiltonian(g, params):
    """O(n^3) recount over all vertex pairs and triples."""
    n = g.n
    colors = g.partition.colors
    x = g.adjacency
    total = 0.0
    for u in range(n):
        for v in range(u + 1, n):
            if x[u, v]:
                total += params.h[colors[u], colors[v]]
            for w in range(v + 1, n):
                if x[u, v] and x[v, w] and x[u, w]:
                    total += params.alpha[colors[u], colors[v], colors[w]] / n
    return total


def streaming_log_z(partition, params):
    """Plain lexicographic enumeration with from-scratch Hamiltonians.

    Returns (log_z, mean edge density, per-state probabilities keyed by the
    edge bitmask in lexicographic u < v slot order).
    """
    n = partition.n
    pairs = list(itertools.combinations(range(n), 2))
    m = len(pairs)
    energies = np.empty(1 << m)
    dens = np.empty(1 << m)
    for code in range(1 << m):
        adj = np.zeros((n, n), dtype=np.uint8)
        e_count = 0
        for e, (u, v) in enumerate(pairs):
            if (code >> e) & 1:
                adj[u, v] = adj[v, u] = 1
                e_count += 1
        g = ColoredGraph(adjacency=adj, partition=partition)
        energies[code] = brute_hamiltonian(g, params)
        dens[code] = 2.0 * e_count / n**2
    mx = energies.max()
    weights = np.exp(energies - mx)
    z = weights.sum()
    probs = weights / z
    return mx + math.log(z), float(probs @ dens), probs


def random_limit(k, rng):
    b = rng.uniform(0.5, 1.5, size=k)
    return LimitPartition(b=b / b.sum())


def random_params(k, rng, alpha_scale=1.0, h_scale=1.0, nonneg=False):
    a = rng.normal(size=(k, k, k)) * alpha_scale
    if nonneg:
        a = np.abs(a)
    h = rng.normal(size=(k, k)) * h_scale
    return ModelParams(alpha=a, h=(h + h.T) / 2)


def random_colored_graph(n, limit, rng, p=0.5):
    partition = build_finite_partition(n, limit)
    iu = np.triu_indices(n, 1)
    adj = np.zeros((n, n), dtype=np.uint8)
    bits = rng.random(iu[0].size) < p
    adj[iu[0][bits], iu[1][bits]] = 1
    adj += adj.T
    return ColoredGraph(adjacency=adj, partition=partition)


def random_step_graphon(limit, cells_per_block, rng):
    """Step graphon aligned with the limit partition, random interior cuts."""
    bounds = [0.0]
    colors = []
    edges = limit.boundaries
    for i in range(limit.k):
        lo, hi = edges[i], edges[i + 1]
        cuts = np.sort(rng.uniform(lo, hi, size=cells_per_block - 1))
        bounds.extend(cuts)
        bounds.append(hi)
        colors.extend([i] * cells_per_block)
    bounds = np.asarray(bounds)
    m = len(colors)
    vals = rng.random((m, m))
    return StepGraphon(boundaries=bounds, values=(vals + vals.T) / 2,
                       coloring=np.asarray(colors))


def late_contraction_ratios(limit, params, s, c0, lo=1e-10, hi=1e-3,
                            max_iter=100_000):
    """Successive-iterate sup-norm ratios of the undamped iteration, taken
    once increments are below hi and before they hit the fp noise floor."""
    c = np.asarray(c0, dtype=np.float64)
    ratios = []
    prev = None
    for _ in range(max_iter):
        c_next = fixed_point_map(limit, params, c, s).c
        diff = float(np.max(np.abs(c_next - c)))
        if prev is not None and lo < prev < hi and diff > lo:
            ratios.append(diff / prev)
        if diff <= lo:
            break
        prev = diff
        c = c_next
    return ratios


@pytest.fixture(scope="session")
def k1():
    return LimitPartition(b=np.array([1.0]))


@pytest.fixture(scope="session")
def half_half():
    return LimitPartition(b=np.array([0.5, 0.5]))
