"""Configuration-driven command surface.

One JSON config document drives each run; flags are limited to the command
name, config path, output directory, and a seed override.  Commands write a
JSON report plus CSV tables into the output directory and exit with:

    0  success
    2  config error
    3  resource limit exceeded
    4  invariant check failure (certify)
    5  solver non-convergence
"""

import argparse
import csv
import datetime
import hashlib
import itertools
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import exact as exact_mod
from . import graphon as graphon_mod
from . import sampler as sampler_mod
from . import variational as var_mod
from .blockmodel import (ColoredGraph, LimitPartition, ModelParams,
                         build_finite_partition, discrete_cell_densities,
                         hamiltonian)
from .errors import (ConfigError, InvariantFailure, NonConvergenceError,
                     ResourceLimitError)

_COMMANDS = ("exact", "solve", "sample", "sweep", "distance", "certify",
             "render")

_KNOWN_KEYS = {
    "": {"model", "exact", "solve", "sample", "sweep", "distance", "render"},
    "model": {"k", "b", "alpha", "h"},
    "exact": {"n", "cap"},
    "solve": {"s", "tol", "max_iter", "starts", "damping"},
    "sample": {"n", "sweeps", "burn_in", "thin", "chains", "seed"},
    "sweep": {"parameter", "grid"},
    "distance": {"graphons"},
    "render": {"graphon", "resolution"},
}

_SOLVE_DEFAULTS = {"s": 0.0, "tol": 1e-12, "max_iter": 100_000, "starts": 16,
                   "damping": None}
_SAMPLE_DEFAULTS = {"burn_in": 1000, "thin": 10, "chains": 4, "seed": 0}


@dataclass(frozen=True)
class ExperimentConfig:
    limit: LimitPartition
    params: ModelParams
    sections: dict
    canonical: str = field(repr=False, default="")

    @property
    def digest(self):
        return hashlib.sha256(self.canonical.encode()).hexdigest()[:16]


def _reject_unknown(doc, scope):
    known = _KNOWN_KEYS[scope]
    for key in doc:
        if key not in known:
            path = f"{scope}.{key}" if scope else key
            raise ConfigError(f"unknown key {path!r}")


def _parse_indexed(value, k, ndim, path):
    """Parse scalar / nested-list / sparse-dict forms into a dense array."""
    shape = (k,) * ndim
    if isinstance(value, (int, float)):
        return np.full(shape, float(value))
    if isinstance(value, list):
        arr = np.asarray(value, dtype=np.float64)
        if arr.shape != shape:
            raise ConfigError(f"{path} must have shape {shape}, "
                              f"got {arr.shape}")
        return arr
    if isinstance(value, dict):
        # sparse form: each entry fills every index permutation
        arr = np.zeros(shape)
        seen = {}
        for key, v in value.items():
            try:
                idx = tuple(int(t) - 1 for t in str(key).split(","))
            except ValueError:
                raise ConfigError(f"{path}: bad index key {key!r}") from None
            if len(idx) != ndim or any(not 0 <= i < k for i in idx):
                raise ConfigError(f"{path}: index {key!r} out of range")
            canon = tuple(sorted(idx))
            if canon in seen and seen[canon] != float(v):
                raise ConfigError(
                    f"{path}: conflicting values for index class {canon}")
            seen[canon] = float(v)
            for perm in set(itertools.permutations(idx)):
                arr[perm] = float(v)
        return arr
    raise ConfigError(f"{path} must be a number, nested list, or index map")


def parse_config(text):
    """Validate a JSON config document; symmetrization is applied and the
    correction recorded, rejecting asymmetries beyond 1e-9."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(doc, "")
    if "model" not in doc:
        raise ConfigError("missing section 'model'")
    model = doc["model"]
    _reject_unknown(model, "model")
    for key in ("k", "b"):
        if key not in model:
            raise ConfigError(f"missing key model.{key}")
    k = int(model["k"])
    b = np.asarray(model["b"], dtype=np.float64)
    if b.shape != (k,):
        raise ConfigError(f"model.b must have {k} entries")
    if np.any(b <= 0.0) or abs(float(b.sum()) - 1.0) > 1e-9:
        raise ConfigError("model.b must be positive and sum to 1")
    limit = LimitPartition(b=b / b.sum())
    alpha = _parse_indexed(model.get("alpha", 0.0), k, 3, "model.alpha")
    h = _parse_indexed(model.get("h", 0.0), k, 2, "model.h")
    params = ModelParams(alpha=alpha, h=h)
    if params.alpha_asymmetry > 1e-9:
        raise ConfigError(
            f"model.alpha asymmetric beyond 1e-9 "
            f"(corrected {params.alpha_asymmetry:.3e})")
    if params.h_asymmetry > 1e-9:
        raise ConfigError(
            f"model.h asymmetric beyond 1e-9 "
            f"(corrected {params.h_asymmetry:.3e})")
    sections = {}
    for name in ("exact", "solve", "sample", "sweep", "distance", "render"):
        if name in doc:
            sec = doc[name]
            if not isinstance(sec, dict):
                raise ConfigError(f"section {name!r} must be an object")
            _reject_unknown(sec, name)
            sections[name] = dict(sec)
    filled = dict(_SOLVE_DEFAULTS)
    filled.update(sections.get("solve", {}))
    sections["solve"] = filled
    if "sample" in sections:
        filled = dict(_SAMPLE_DEFAULTS)
        filled.update(sections["sample"])
        sections["sample"] = filled
    return ExperimentConfig(limit=limit, params=params, sections=sections,
                            canonical=serialize_config_dict(doc))


def serialize_config_dict(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def serialize_config(cfg):
    """Canonical JSON for a parsed config; parse(serialize(cfg)) == cfg."""
    doc = {
        "model": {
            "k": cfg.limit.k,
            "b": [float(x) for x in cfg.limit.b],
            "alpha": [[[float(x) for x in row] for row in plane]
                      for plane in cfg.params.alpha],
            "h": [[float(x) for x in row] for row in cfg.params.h],
        },
    }
    doc.update(cfg.sections)
    return json.dumps(doc, sort_keys=True, indent=2)


def _require_section(cfg, name):
    if name not in cfg.sections:
        raise ConfigError(f"missing section {name!r} for this command")
    return cfg.sections[name]


def _fmt(x):
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _write_csv(path, header, rows, stamp=True):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if stamp:
            now = datetime.datetime.now(datetime.timezone.utc).isoformat()
            fh.write(f"# generated={now}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _stamp(cfg, seed=None):
    rec = {"config_digest": cfg.digest}
    if seed is not None:
        rec["seed"] = int(seed)
    return rec


def _cmd_exact(cfg, out):
    sec = _require_section(cfg, "exact")
    n = int(sec["n"])
    partition = build_finite_partition(n, cfg.limit)
    cap = int(sec.get("cap", exact_mod.DEFAULT_CAP))
    result = exact_mod.log_partition_enumerate(partition, cfg.params, cap=cap)
    payload = result.to_dict()
    payload.update(_stamp(cfg))
    _write_json(out / "exact_report.json", payload)
    table = out / "exact_table.csv"
    fresh = not table.exists()
    with open(table, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(["n", "k", "log_z", "free_energy_n",
                             "mean_edge_density", "params_digest"])
        writer.writerow([_fmt(x) for x in
                         (result.n, result.k, result.log_z,
                          result.free_energy_n, result.mean_edge_density,
                          result.params_digest)])
    return 0


def _solve_opts(sec):
    return var_mod.SolverOptions(
        tol=float(sec["tol"]), max_iter=int(sec["max_iter"]),
        damping=None if sec["damping"] is None else float(sec["damping"]),
        random_starts=max(0, int(sec["starts"]) - 3))


def _cmd_solve(cfg, out):
    sec = cfg.sections["solve"]
    report = var_mod.solve_fixed_point(cfg.limit, cfg.params,
                                       s=float(sec["s"]),
                                       opts=_solve_opts(sec))
    payload = report.to_dict()
    payload["edge_density_pred"] = var_mod.predicted_edge_density(
        cfg.limit, report.c_star)
    payload.update(_stamp(cfg))
    _write_json(out / "solve_report.json", payload)
    return 0


def _cmd_sample(cfg, out, seed_override):
    sec = _require_section(cfg, "sample")
    seed = int(seed_override if seed_override is not None else sec["seed"])
    chain_cfg = sampler_mod.ChainConfig(
        n=int(sec["n"]), sweeps=int(sec["sweeps"]),
        burn_in=int(sec["burn_in"]), thin=int(sec["thin"]),
        seed=seed, chains=int(sec["chains"]))
    report = sampler_mod.lln_experiment(cfg.limit, cfg.params, chain_cfg.n,
                                        chain_cfg, keep_traces=True)
    payload = report.to_dict()
    payload.update(_stamp(cfg, seed=seed))
    _write_json(out / "lln_report.json", payload)
    for trace in report.traces:
        sweeps = [chain_cfg.burn_in + (i + 1) * chain_cfg.thin
                  for i in range(trace.densities.size)]
        _write_csv(out / f"trace_chain{trace.chain_index}.csv",
                   ["sweep", "edge_density"],
                   list(zip(sweeps, trace.densities)))
    return 0


def _cmd_sweep(cfg, out):
    sec = _require_section(cfg, "sweep")
    if sec.get("parameter") not in ("s", "solve.s"):
        raise ConfigError("sweep.parameter must be 's' (edge-weight shift)")
    grid = [float(x) for x in sec["grid"]]
    opts = _solve_opts(cfg.sections["solve"])
    rows = []
    for s in grid:
        report = var_mod.solve_fixed_point(cfg.limit, cfg.params, s=s,
                                           opts=opts)
        rows.append([s, report.free_energy,
                     var_mod.predicted_edge_density(cfg.limit, report.c_star),
                     report.el_residual, report.regime])
    _write_csv(out / "sweep.csv",
               ["s", "free_energy", "edge_density_pred", "el_residual",
                "regime"], rows)
    payload = {"rows": len(rows)}
    payload.update(_stamp(cfg))
    _write_json(out / "sweep_report.json", payload)
    return 0


def _cmd_distance(cfg, out):
    sec = _require_section(cfg, "distance")
    paths = sec.get("graphons")
    if not isinstance(paths, list) or len(paths) != 2:
        raise ConfigError("distance.graphons must list exactly two files")
    gs = []
    for p in paths:
        with open(p, "r", encoding="utf-8") as fh:
            gs.append(graphon_mod.graphon_from_json(fh.read()))
    plain = graphon_mod.cut_norm(gs[0], gs[1])
    colored = graphon_mod.colored_cut_distance(gs[0], gs[1])
    payload = {
        "cut_norm": plain.value,
        "cut_norm_exact": plain.exact,
        "colored_cut_distance": colored.value,
        "colored_cut_distance_exact": colored.exact,
    }
    payload.update(_stamp(cfg))
    _write_json(out / "distance_report.json", payload)
    return 0


def _cmd_render(cfg, out):
    sec = _require_section(cfg, "render")
    with open(sec["graphon"], "r", encoding="utf-8") as fh:
        g = graphon_mod.graphon_from_json(fh.read())
    res = int(sec.get("resolution", 200))
    grid = graphon_mod.render_grid(g, resolution=res)
    _write_csv(out / "render_grid.csv",
               [f"x{c}" for c in range(res)], grid.tolist())
    return 0


def _certify_checks(cfg, seed):
    """Cross-module invariant suite on the configured model."""
    rng = np.random.default_rng(seed)
    limit, params = cfg.limit, cfg.params
    k = limit.k
    n = max(6, 2 * k)
    partition = build_finite_partition(n, limit)
    checks = []

    def add(name, measured, bound, passed):
        checks.append({"name": name, "measured": float(measured),
                       "bound": float(bound), "passed": bool(passed)})

    # factorization of log Z at alpha = 0 against enumeration
    zero_alpha = ModelParams(alpha=np.zeros((k, k, k)), h=params.h)
    enum = exact_mod.log_partition_enumerate(partition, zero_alpha)
    fact = exact_mod.log_partition_factorized(partition, params.h)
    rel = abs(enum.log_z - fact) / max(1.0, abs(fact))
    add("factorization_alpha0", rel, 1e-10, rel <= 1e-10)

    # Hamiltonian equals n^2 times the density form on a random graph
    adj = np.zeros((n, n), dtype=np.uint8)
    iu = np.triu_indices(n, 1)
    bits = rng.random(iu[0].size) < 0.5
    adj[iu[0][bits], iu[1][bits]] = 1
    adj += adj.T
    g = ColoredGraph(adjacency=adj, partition=partition)
    t1, t2 = discrete_cell_densities(g)
    u_form = (np.sum(params.alpha * t2) / 6.0 + np.sum(params.h * t1) / 2.0)
    ham = hamiltonian(g, params)
    rel = abs(ham - n**2 * u_form) / max(1.0, abs(ham))
    add("hamiltonian_density_identity", rel, 1e-9, rel <= 1e-9)

    # Euler-Lagrange residual at the solved optimum
    report = var_mod.solve_fixed_point(limit, params)
    add("el_residual", report.el_residual, 1e-10,
        report.el_residual <= 1e-10)

    # observed contraction of the fixed-point map vs the Lipschitz constant
    L = var_mod.lipschitz_bound(params)
    c1 = var_mod.BlockMatrix(c=np.full((k, k), 0.3))
    c2 = var_mod.BlockMatrix(c=np.full((k, k), 0.7))
    num = np.max(np.abs(var_mod.fixed_point_map(limit, params, c1).c
                        - var_mod.fixed_point_map(limit, params, c2).c))
    den = np.max(np.abs(c1.c - c2.c))
    add("lipschitz_bound", num / den, L + 1e-12, num / den <= L + 1e-12)

    # cyclic-product certificate (nonnegative alpha only)
    if np.all(params.alpha >= 0.0):
        gx = graphon_mod.checkerboard(g, coloring="limit")
        cert = var_mod.holder_certificate(limit, params, gx)
        add("holder_gap_nonnegative", cert.gap, -1e-12, cert.gap >= -1e-12)

    # cut-norm sandwich and triangle-density continuity on random graphons
    def random_aligned_graphon():
        parts, colors = [limit.boundaries[0]], []
        for i in range(k):
            cuts = np.sort(rng.random(2)) * (limit.boundaries[i + 1]
                                             - limit.boundaries[i])
            parts.extend(limit.boundaries[i] + cuts)
            parts.append(limit.boundaries[i + 1])
            colors.extend([i] * 3)
        bounds = np.asarray(parts)
        m = bounds.size - 1
        vals = rng.random((m, m))
        return graphon_mod.StepGraphon(boundaries=bounds,
                                       values=(vals + vals.T) / 2,
                                       coloring=np.asarray(colors))

    g1, g2 = random_aligned_graphon(), random_aligned_graphon()
    plain = graphon_mod.cut_norm(g1, g2)
    colored = graphon_mod.colored_cut_distance(g1, g2)
    ok = (plain.value - 1e-12 <= colored.value
          <= k**2 * plain.value + 1e-12)
    add("cut_norm_sandwich", colored.value, k**2 * plain.value, ok)

    worst = 0.0
    for i in range(k):
        for j in range(k):
            for l in range(k):
                d = abs(graphon_mod.cell_density("triangle", g1, (i, j, l))
                        - graphon_mod.cell_density("triangle", g2, (i, j, l)))
                worst = max(worst, d)
    bound = 3.0 * colored.value
    add("triangle_density_continuity", worst, bound, worst <= bound + 1e-12)
    return checks


def _cmd_certify(cfg, out, seed_override):
    seed = int(seed_override if seed_override is not None else 0)
    checks = _certify_checks(cfg, seed)
    payload = {"checks": checks,
               "passed": all(c["passed"] for c in checks)}
    payload.update(_stamp(cfg, seed=seed))
    _write_json(out / "certify_report.json", payload)
    _write_csv(out / "certify_table.csv",
               ["name", "measured", "bound", "passed"],
               [[c["name"], c["measured"], c["bound"], c["passed"]]
                for c in checks])
    if not payload["passed"]:
        failing = [c["name"] for c in checks if not c["passed"]]
        raise InvariantFailure("failed checks: " + ", ".join(failing))
    return 0


def run(command, cfg, out_dir, seed_override=None):
    """Execute one command; returns the exit status and writes report files."""
    if command not in _COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if command == "exact":
        return _cmd_exact(cfg, out)
    if command == "solve":
        return _cmd_solve(cfg, out)
    if command == "sample":
        return _cmd_sample(cfg, out, seed_override)
    if command == "sweep":
        return _cmd_sweep(cfg, out)
    if command == "distance":
        return _cmd_distance(cfg, out)
    if command == "render":
        return _cmd_render(cfg, out)
    return _cmd_certify(cfg, out, seed_override)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="blockergm",
        description="Block edge-triangle ERGM experiments from a JSON config.")
    parser.add_argument("command", choices=_COMMANDS)
    parser.add_argument("-c", "--config", required=True,
                        help="path to the JSON config document")
    parser.add_argument("-o", "--out", default="out",
                        help="output directory for reports")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the seed in the config")
    args = parser.parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
        return run(args.command, cfg, args.out, seed_override=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return 3
    except InvariantFailure as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 4
    except NonConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return 5
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
