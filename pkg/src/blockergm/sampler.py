"""Glauber-dynamics MCMC for the finite-n Gibbs measure.

Each sweep performs one single-edge heat-bath update per vertex pair, in a
fresh uniformly random order: edge uv is set to 1 with probability
sigma(dH), where dH is the Hamiltonian difference between the edge being
present and absent with everything else fixed,

    dH = h[c(u), c(v)] + (1/n) sum_{w != u,v} alpha[c(u), c(v), c(w)]
                                              X_uw X_vw.

Heat-bath acceptance is exact for two-state conditionals, so the chain is
reversible for the Gibbs measure with no tuning.  Chains are independent,
seeded from (seed, chain index), and run concurrently; the hot loop works
on packed neighbor bitsets, counting common neighbors by class with
word-parallel AND/popcount.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .blockmodel import (ColoredGraph, FinitePartition, build_finite_partition)
from .variational import predicted_edge_density, solve_fixed_point


@dataclass(frozen=True)
class ChainConfig:
    n: int
    sweeps: int
    burn_in: int = 1000
    thin: int = 10
    seed: int = 0
    chains: int = 4

    def __post_init__(self):
        if self.burn_in < 0 or self.sweeps <= self.burn_in:
            raise ValueError("need sweeps > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")

    @property
    def retained(self):
        return (self.sweeps - self.burn_in) // self.thin


@dataclass(frozen=True)
class ChainTrace:
    """Retained edge-density samples of one chain, plus per-block-pair
    empirical edge frequencies averaged over the retained sweeps."""

    densities: np.ndarray
    pair_frequencies: np.ndarray
    chain_index: int
    seed: int


@dataclass(frozen=True)
class LLNReport:
    empirical_mean: float
    empirical_sd: float
    predicted: float
    abs_gap: float
    per_chain_means: np.ndarray
    seed: int
    out_of_regime: bool = False
    traces: tuple = ()

    def to_dict(self):
        return {
            "empirical_mean": self.empirical_mean,
            "empirical_sd": self.empirical_sd,
            "predicted": self.predicted,
            "abs_gap": self.abs_gap,
            "per_chain_means": [float(x) for x in self.per_chain_means],
            "seed": self.seed,
            "out_of_regime": self.out_of_regime,
        }


def _bit64(pos):
    """int64 with the given bit set, two's-complement for bit 63."""
    return np.int64(-0x8000000000000000) if pos == 63 else np.int64(1 << pos)


def conditional_flip_energy(g: ColoredGraph, params, u, v):
    """Hamiltonian difference for X_uv = 1 versus 0 with all else fixed."""
    if u == v:
        raise ValueError("u and v must be distinct vertices")
    colors = g.partition.colors
    cu, cv = colors[u], colors[v]
    common = (g.adjacency[u] & g.adjacency[v]).astype(np.float64)
    wedge = np.bincount(colors, weights=common, minlength=g.partition.k)
    return float(params.h[cu, cv]
                 + params.alpha[cu, cv] @ wedge / g.n)


@njit(cache=True, nogil=True)
def _sweep(rows, words, colors, class_masks, h_tab, alpha_n, eu, ev,
           order, unif, edge_count):
    """One sweep of heat-bath updates in the given order; returns edge count."""
    k = class_masks.shape[0]
    for idx in range(order.shape[0]):
        e = order[idx]
        u = eu[e]
        v = ev[e]
        cu = colors[u]
        cv = colors[v]
        dH = h_tab[cu, cv]
        for l in range(k):
            c = 0
            for wd in range(words):
                x = rows[u, wd] & rows[v, wd] & class_masks[l, wd]
                while x != 0:
                    x &= x - 1
                    c += 1
            dH += alpha_n[cu, cv, l] * c
        if dH >= 0.0:
            p = 1.0 / (1.0 + math.exp(-dH))
        else:
            ex = math.exp(dH)
            p = ex / (1.0 + ex)
        want = unif[idx] < p
        have = (rows[u, v >> 6] >> (v & 63)) & 1 == 1
        if want and not have:
            rows[u, v >> 6] |= 1 << (v & 63)
            rows[v, u >> 6] |= 1 << (u & 63)
            edge_count += 1
        elif have and not want:
            rows[u, v >> 6] &= ~(1 << (v & 63))
            rows[v, u >> 6] &= ~(1 << (u & 63))
            edge_count -= 1
    return edge_count


def _pair_counts_by_block(rows, partition):
    """One-sided edge counts per block pair from int64 neighbor bitsets."""
    n, k = partition.n, partition.k
    bits = np.unpackbits(rows.view(np.uint64).view(np.uint8), axis=1,
                         bitorder="little")[:, :n]
    P = np.zeros((k, n))
    P[partition.colors, np.arange(n)] = 1.0
    ordered = P @ bits.astype(np.float64) @ P.T
    return np.triu(ordered, 1) + np.diag(np.diag(ordered) / 2.0)


def run_chain(partition: FinitePartition, params, cfg: ChainConfig,
              chain_index=0):
    """Run one Glauber chain from the empty graph; reproducible from
    (cfg.seed, chain_index)."""
    n = partition.n
    if cfg.n != n:
        raise ValueError(f"config n={cfg.n} does not match partition n={n}")
    if params.k != partition.k:
        raise ValueError("params and partition disagree on k")
    k = partition.k
    words = (n + 63) // 64
    rows = np.zeros((n, words), dtype=np.int64)
    colors = partition.colors.astype(np.int64)
    class_masks = np.zeros((k, words), dtype=np.int64)
    for v in range(n):
        class_masks[colors[v], v >> 6] |= _bit64(v & 63)
    eu, ev = np.triu_indices(n, 1)
    eu = eu.astype(np.int64)
    ev = ev.astype(np.int64)
    m = eu.size
    alpha_n = (params.alpha / n).astype(np.float64)
    h_tab = params.h.astype(np.float64)

    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(chain_index,)))
    densities = np.empty(cfg.retained)
    pair_freq_acc = np.zeros((k, k))
    edge_count = 0
    kept = 0
    slots = np.zeros((k, k))
    w = partition.w
    for i in range(k):
        slots[i, i] = w[i] * (w[i] - 1) / 2
        for j in range(i + 1, k):
            slots[i, j] = w[i] * w[j]
    for sweep_no in range(1, cfg.sweeps + 1):
        order = rng.permutation(m).astype(np.int64)
        unif = rng.random(m)
        edge_count = _sweep(rows, words, colors, class_masks, h_tab, alpha_n,
                            eu, ev, order, unif, edge_count)
        if sweep_no > cfg.burn_in and (sweep_no - cfg.burn_in) % cfg.thin == 0:
            if kept < cfg.retained:
                densities[kept] = 2.0 * edge_count / n**2
                counts = _pair_counts_by_block(rows, partition)
                with np.errstate(invalid="ignore", divide="ignore"):
                    pair_freq_acc += np.where(slots > 0, counts / np.where(
                        slots > 0, slots, 1.0), 0.0)
                kept += 1
    pair_freq = pair_freq_acc / max(kept, 1)
    pair_freq = pair_freq + np.triu(pair_freq, 1).T
    return ChainTrace(densities=densities, pair_frequencies=pair_freq,
                      chain_index=chain_index, seed=cfg.seed)


def micro_state_trace(partition, params, cfg: ChainConfig, chain_index=0):
    """Retained full-graph states of one chain, encoded as edge bitmasks.

    Desk-scale diagnostic (n <= 10) for comparing the chain's long-run
    occupancy with enumeration Gibbs probabilities; state s has bit e set
    when edge slot e (lexicographic u < v order) is present.
    """
    n = partition.n
    if n > 10:
        raise ValueError("state traces are a micro-scale diagnostic (n <= 10)")
    if cfg.n != n:
        raise ValueError(f"config n={cfg.n} does not match partition n={n}")
    k = partition.k
    rows = np.zeros((n, 1), dtype=np.int64)
    colors = partition.colors.astype(np.int64)
    class_masks = np.zeros((k, 1), dtype=np.int64)
    for v in range(n):
        class_masks[colors[v], 0] |= _bit64(v)
    eu, ev = np.triu_indices(n, 1)
    eu = eu.astype(np.int64)
    ev = ev.astype(np.int64)
    m = eu.size
    alpha_n = (params.alpha / n).astype(np.float64)
    h_tab = params.h.astype(np.float64)
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(chain_index,)))
    states = np.empty(cfg.retained, dtype=np.int64)
    kept = 0
    edge_count = 0
    for sweep_no in range(1, cfg.sweeps + 1):
        order = rng.permutation(m).astype(np.int64)
        unif = rng.random(m)
        edge_count = _sweep(rows, 1, colors, class_masks, h_tab, alpha_n,
                            eu, ev, order, unif, edge_count)
        if sweep_no > cfg.burn_in and (sweep_no - cfg.burn_in) % cfg.thin == 0:
            if kept < cfg.retained:
                code = 0
                for e in range(m):
                    code |= int((rows[eu[e], 0] >> ev[e]) & 1) << e
                states[kept] = code
                kept += 1
    return states


def lln_experiment(limit, params, n, cfg: ChainConfig, keep_traces=False):
    """Compare the chains' mean edge density with the variational prediction.

    The theorem hypotheses (alpha >= 0, max|alpha| < 2) are checked; outside
    them the experiment still runs but the report carries out_of_regime=True.
    """
    if cfg.n != n:
        raise ValueError(f"config n={cfg.n} does not match requested n={n}")
    out_of_regime = not (bool(np.all(params.alpha >= 0.0))
                         and params.alpha_inf < 2.0)
    partition = build_finite_partition(n, limit)
    report = solve_fixed_point(limit, params)
    predicted = predicted_edge_density(limit, report.c_star)
    with ThreadPoolExecutor(max_workers=cfg.chains) as pool:
        traces = list(pool.map(
            lambda c: run_chain(partition, params, cfg, chain_index=c),
            range(cfg.chains)))
    samples = np.concatenate([t.densities for t in traces])
    mean = float(samples.mean())
    sd = float(samples.std(ddof=1)) if samples.size > 1 else 0.0
    return LLNReport(
        empirical_mean=mean,
        empirical_sd=sd,
        predicted=predicted,
        abs_gap=abs(mean - predicted),
        per_chain_means=np.array([t.densities.mean() for t in traces]),
        seed=cfg.seed,
        out_of_regime=out_of_regime,
        traces=tuple(traces) if keep_traces else (),
    )
