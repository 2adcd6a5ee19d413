"""End-to-end runs: identify an S+L predictor, evaluate it, repeat over seeds."""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import io, metrics
from .estimator import PredictorEstimate, posterior_mean_g, posterior_mean_sl
from .hyperloop import HyperloopOptions, run_algorithm1
from .kernel import tc_kernel, unstructured_kernel
from .likelihood import estimate_ktilde_hyper
from .model import generate_sl_model, simulate, true_predictor
from .noise import default_order, estimate_sigma, regularize_sigma
from .regression import ThetaLayout, build_regressor, stack_outputs

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid run configuration (CLI exit code 2)."""


@dataclass
class RunConfig:
    m: int = 6
    n: int = 1
    nnz: int = 4
    T: int = 20
    T_true: int = 20
    decay: float = 0.8
    N: int = 500
    N_test: int | None = None
    seeds: list = field(default_factory=lambda: [1])
    threshold: float = metrics.DEFAULT_THRESHOLD
    rmax: int | None = None
    arx_order: int | None = None
    tol: float = 1e-6
    max_iter: int = 500
    method: str = "auto"
    workers: int = 1

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.m >= 1, "m must be at least 1")
        need(0 <= self.n < self.m, "n must satisfy 0 <= n < m")
        need(0 <= self.nnz <= self.m * self.m, "nnz must lie in [0, m^2]")
        need(self.T >= 1 and self.T_true >= 1, "T and T_true must be positive")
        need(0.0 < self.decay < 1.0, "decay must lie in (0, 1)")
        need(self.N > self.T + 1, "N must exceed T + 1")
        need(self.test_length > self.T, "test length must exceed T")
        need(len(self.seeds) > 0, "at least one seed is required")
        need(len(set(self.seeds)) == len(self.seeds), "seeds must be distinct")
        need(all(int(s) >= 0 for s in self.seeds), "seeds must be nonnegative integers")
        need(0.0 <= self.threshold < 1.0, "threshold must lie in [0, 1)")
        need(self.rmax is None or 0 <= self.rmax <= self.m, "rmax must lie in [0, m]")
        need(self.arx_order is None or self.arx_order >= 1, "arx_order must be positive")
        need(self.tol > 0 and self.max_iter >= 1, "optimizer tolerances must be positive")
        need(self.method in ("auto", "primal", "dual"), "method must be auto, primal or dual")
        need(self.workers >= 1, "workers must be at least 1")
        return self

    @property
    def test_length(self):
        return self.N if self.N_test is None else self.N_test

    def to_dict(self):
        d = asdict(self)
        d["seeds"] = [int(s) for s in self.seeds]
        return d

    def hashable(self):
        """Config without the knobs that cannot change results."""
        d = self.to_dict()
        d.pop("workers")
        return d

    def hyperloop_options(self):
        return HyperloopOptions(r_max=self.rmax, method=self.method,
                                sgp={"tol": self.tol, "max_iter": self.max_iter})


def derived_seeds(seed):
    """(model, train, test) integer seeds spawned from one run seed."""
    return tuple(int(s) for s in np.random.SeedSequence(int(seed)).generate_state(3))


@dataclass
class Identification:
    estimate: PredictorEstimate
    tc_estimate: PredictorEstimate
    r: int
    U: np.ndarray
    hyper: object
    report: object
    sigma: object
    ktilde: object
    edges: set
    graph: metrics.NetworkGraph


def identify(train, T, threshold=metrics.DEFAULT_THRESHOLD, options=None, arx_order=None):
    """Sigma from a long ARX fit, then Ktilde, the rank-selection loop and the S+L posterior mean."""
    options = options or HyperloopOptions()
    m = train.values.shape[1]
    order = arx_order or default_order(train.values.shape[0], m, T)
    sig = estimate_sigma(train, order)
    Sigma = regularize_sigma(sig.Sigma)
    data, reg = stack_outputs(train, T), build_regressor(train, T)
    c, lam = estimate_ktilde_hyper(data, reg, Sigma)
    kt = tc_kernel(c, lam, T)
    r, U, hyper, report = run_algorithm1(data, reg, kt, Sigma, options)
    est = posterior_mean_sl(data, reg, hyper.sparse_kernel(), hyper.lowrank_kernel(), Sigma,
                            method=options.method)
    est.diagnostics.update({"r": r, "c": c, "lambda": lam, "arx_order": order})
    tc_theta = report.tc_estimate
    if tc_theta is None:
        tc_theta = posterior_mean_g(data, reg, unstructured_kernel(m, kt), Sigma, method=options.method)
    tc = PredictorEstimate(tc_theta, np.zeros_like(tc_theta), ThetaLayout(m, T), sigma=Sigma,
                           diagnostics={"c": c, "lambda": lam})
    edges = metrics.support(est, threshold)
    return Identification(est, tc, r, U, hyper, report, sig, kt, edges, metrics.network_from(edges, m, r))


def _coeffs_for_airf(G, T):
    return metrics._pad(G, T)


def run_single(config, seed):
    """One Monte Carlo replicate; returns (row, arrays) with arrays holding true/SL/TC coefficients."""
    t0 = time.perf_counter()
    s_model, s_train, s_test = derived_seeds(seed)
    model = generate_sl_model(config.m, config.n, config.nnz, config.T_true, config.decay, s_model)
    train = simulate(model, config.N, s_train)
    test = simulate(model, config.test_length, s_test)
    ident = identify(train, config.T, config.threshold, config.hyperloop_options(), config.arx_order)
    truth = true_predictor(model)
    L = max(config.T, config.T_true)
    row = {
        "seed": int(seed),
        "cod_sl": metrics.cod(test, ident.estimate),
        "cod_tc": metrics.cod(test, ident.tc_estimate),
        "cod_true": metrics.cod(test, truth),
        "support_size": len(ident.edges),
        "selected_r": int(ident.r),
        "ac_contrib": 100.0 * metrics.complexity(len(ident.edges), ident.r, config.m, config.T)
        / (config.m ** 2 * config.T),
        "true_support_recovered": bool(set(model.sparsity_support) <= ident.edges),
        "wallclock": time.perf_counter() - t0,
    }
    arrays = {
        "G_true": _coeffs_for_airf(model.G_coeffs, L),
        "G_sl": _coeffs_for_airf(ident.estimate.G_coeffs(), L),
        "G_tc": _coeffs_for_airf(ident.tc_estimate.G_coeffs(), L),
    }
    return row, arrays


def _checkpoint_paths(out, seed):
    base = Path(out) / "runs"
    return base / f"seed_{seed}.json", base / f"seed_{seed}.npz"


def _load_checkpoint(out, seed, chash):
    jpath, npath = _checkpoint_paths(out, seed)
    if not (jpath.exists() and npath.exists()):
        return None
    doc = io.read_json(jpath)
    if doc.get("provenance", {}).get("config_hash") != chash:
        return None
    with np.load(npath) as z:
        arrays = {k: z[k] for k in z.files}
    return doc["row"], arrays


def _run_and_store(config, seed, out, prov):
    row, arrays = run_single(config, seed)
    jpath, npath = _checkpoint_paths(out, seed)
    np.savez(npath, **arrays)
    # json last: its presence marks a complete checkpoint
    io.write_json(jpath, {"row": row}, dict(prov, seed=int(seed)))
    return row, arrays


def _quartiles(x):
    x = np.asarray(x, dtype=float)
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    return {"q1": float(q1), "median": float(med), "q3": float(q3),
            "min": float(x.min()), "max": float(x.max()), "mean": float(x.mean())}


def summarize(rows, arrays, config):
    """Attach per-run AIRF (suite-wide Gbar) and aggregate box-plot statistics."""
    G_true = [a["G_true"] for a in arrays]
    airf_sl = metrics.airf_per_run(G_true, [a["G_sl"] for a in arrays])
    airf_tc = metrics.airf_per_run(G_true, [a["G_tc"] for a in arrays])
    for k, row in enumerate(rows):
        row["run_id"] = k
        row["airf_sl"] = float(airf_sl[k])
        row["airf_tc"] = float(airf_tc[k])
    summary = {
        "runs": len(rows),
        "AC": metrics.ac((r["support_size"], r["selected_r"], config.m, config.T) for r in rows),
        "AIRF_pooled": {"sl": metrics.airf(G_true, [a["G_sl"] for a in arrays]),
                        "tc": metrics.airf(G_true, [a["G_tc"] for a in arrays])},
        "selected_r_counts": {str(v): int(c) for v, c in zip(*np.unique([r["selected_r"] for r in rows],
                                                                         return_counts=True))},
    }
    for key in ("cod_sl", "cod_tc", "cod_true", "airf_sl", "airf_tc", "ac_contrib"):
        summary[key] = _quartiles([r[key] for r in rows])
    return rows, summary


RUN_COLUMNS = ["run_id", "seed", "cod_sl", "cod_tc", "cod_true", "airf_sl", "airf_tc", "ac_contrib",
               "selected_r", "support_size", "true_support_recovered"]


def montecarlo(config, out, resume=True):
    """Run every seed (resuming from checkpoints), then write per-run, long-format and summary files.

    Returns (rows, summary). Rows follow the order of ``config.seeds`` whatever
    the worker count.
    """
    config.validate()
    out = Path(out)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    prov = io.provenance(config.hashable())
    chash = prov["config_hash"]
    results = {}
    todo = []
    for seed in config.seeds:
        cached = _load_checkpoint(out, seed, chash) if resume else None
        if cached is None:
            todo.append(seed)
        else:
            log.info("seed %d: loaded checkpoint", seed)
            results[seed] = cached
    if config.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {s: pool.submit(_run_and_store, config, s, out, prov) for s in todo}
            for s in todo:
                results[s] = futures[s].result()
    else:
        for s in todo:
            log.info("seed %d: running", s)
            results[s] = _run_and_store(config, s, out, prov)
    rows = [dict(results[s][0]) for s in config.seeds]
    arrays = [results[s][1] for s in config.seeds]
    rows, summary = summarize(rows, arrays, config)
    io.write_csv(out / "runs.csv", RUN_COLUMNS, ([r[c] for c in RUN_COLUMNS] for r in rows), prov)
    long_rows = []
    for r in rows:
        for metric, est in (("cod", "sl"), ("cod", "tc"), ("cod", "true"), ("airf", "sl"), ("airf", "tc")):
            long_rows.append([r["run_id"], r["seed"], metric, est, r[f"{metric}_{est}"]])
    io.write_csv(out / "long.csv", ["run_id", "seed", "metric", "estimator", "value"], long_rows, prov)
    io.write_json(out / "summary.json", {"config": config.to_dict(), "summary": summary}, prov)
    return rows, summary
