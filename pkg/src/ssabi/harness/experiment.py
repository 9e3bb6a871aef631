"""Experiment orchestration: data, paired baseline/SC training, oracle
evaluation, and the results directory layout.

Results directory::

    manifest.json            config echo, seeds, build id, format versions, status
    metrics.csv              one row per (method, seed, observation[, param])
    reports/*.json           full MetricReports
    logs/<method>_seed<s>.jsonl
    checkpoints/<method>_seed<s>.json
    observations.npz         evaluation observations (and ar1 ground truth)
    oracle/<id>.npy          MH reference samples (ar1)
    table_ar1.csv            per-parameter averages over countries (ar1)
"""
from __future__ import annotations

import csv
import json
import logging
import platform
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import __version__, _kernels
from ..errors import DataError, NumericalError
from ..metrics import MetricReport, metric_report
from ..model_zoo import (AR1Model, GaussianModel, MHConfig, gaussian_analytic_posterior,
                         mh_reference_posterior, synthetic_countries)
from ..model_zoo.oracle import OracleResult
from ..rng import substream
from ..training import FORMAT_VERSION as CHECKPOINT_VERSION
from ..training import TrainResult, save_checkpoint, train
from .config import ExperimentConfig
from .ingest import ingest_unlabeled_csv

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
METRICS_VERSION = 1
METRICS_HEADER = ("task", "factor", "value", "method", "seed", "mu_obs", "param",
                  "mean_bias", "sd_bias", "mmd", "wasserstein")


def method_names(likelihood_mode: str) -> tuple[str, str]:
    return ("nple", "nple_sc") if likelihood_mode == "estimated" else ("npe", "npe_sc")


def build_id() -> str:
    return (f"ssabi-{__version__}+{_kernels.BACKEND}"
            f"-numpy{np.__version__}-py{platform.python_version()}")


def make_model(cfg: ExperimentConfig):
    if cfg.task == "gaussian":
        return GaussianModel(D=cfg.D, K=cfg.K)
    return AR1Model(T=cfg.T)


@dataclass
class Evaluation:
    method: str
    seed: int
    obs_id: str
    report: MetricReport


@dataclass
class ExperimentResult:
    out_dir: Path
    evaluations: list = field(default_factory=list)
    aborted: list = field(default_factory=list)
    trained: dict = field(default_factory=dict)     # (method, seed) -> Approximator

    @property
    def ok(self) -> bool:
        return not self.aborted

    def select(self, method: str, obs_id: str | None = None) -> list[Evaluation]:
        return [e for e in self.evaluations
                if e.method == method and (obs_id is None or e.obs_id == obs_id)]


def _obs_id(task: str, value) -> str:
    return f"{float(value):g}" if task == "gaussian" else str(value)


# data

def gaussian_observations(cfg: ExperimentConfig, model: GaussianModel, seed: int):
    return np.stack([model.observation(mu, substream(seed, "observation", i))
                     for i, mu in enumerate(cfg.mu_obs)])


def ar1_panel(cfg: ExperimentConfig, model: AR1Model):
    """``(ids, observations, true_theta or None)``; fixed across refits."""
    if cfg.unlabeled_csv:
        data = ingest_unlabeled_csv(cfg.unlabeled_csv, "ar1")
        if data.observations.shape[1] != model.T + 1:
            raise DataError(f"CSV series have {data.observations.shape[1]} years, "
                            f"configured T+1 = {model.T + 1}")
        return data.ids, data.observations, None
    theta, obs = synthetic_countries(cfg.n_countries, model, substream(cfg.first_seed, "countries"))
    return [f"country_{j:02d}" for j in range(cfg.n_countries)], obs, theta


def unlabeled_data(cfg: ExperimentConfig, model, seed: int, panel=None):
    if cfg.M == 0:
        return None
    if cfg.task == "ar1":
        return panel[:cfg.M]
    if cfg.unlabeled_csv:
        data = ingest_unlabeled_csv(cfg.unlabeled_csv, "gaussian", D=cfg.D)
        return data.observations[:cfg.M]
    return model.unlabeled(cfg.M, cfg.mu_star, substream(seed, "unlabeled_data"))


def ar1_oracles(cfg: ExperimentConfig, model: AR1Model, obs: np.ndarray) -> list[OracleResult]:
    mh = MHConfig(n_samples=cfg.mh_samples, burn_in=cfg.mh_burn_in, thin=cfg.mh_thin)
    return [mh_reference_posterior(model, obs[j], config=mh,
                                   rng=substream(cfg.first_seed, "mh", j))
            for j in range(len(obs))]


# training

def train_pair(cfg: ExperimentConfig, model, seed: int, labeled, unlabeled,
               out_dir: Path | None = None) -> dict:
    """Baseline (lambda = 0) and SC runs from the same initialization and data."""
    base, sc = method_names(cfg.likelihood_mode)
    results = {}
    for method, lam in ((base, 0.0), (sc, cfg.lam)):
        tcfg = replace(cfg.train, seed=seed, lam=lam)
        log_path = out_dir / "logs" / f"{method}_seed{seed}.jsonl" if out_dir else None
        t0 = time.perf_counter()
        res = train(tcfg, labeled, unlabeled if lam != 0 else None, model, log_path=log_path)
        log.info("%s seed %d trained in %.1fs (clips %d)", method, seed,
                 time.perf_counter() - t0, res.clip_events)
        if out_dir:
            save_checkpoint(res.approximator, out_dir / "checkpoints" / f"{method}_seed{seed}.json",
                            config=tcfg.to_dict(),
                            provenance={"experiment_seed": seed, "method": method,
                                        "build": build_id()})
        results[method] = res
    return results


def evaluate_approximator(approx, observations, oracles, ids, seed: int, n_eval: int,
                          method: str) -> list[Evaluation]:
    out = []
    for i, (x, oracle, oid) in enumerate(zip(observations, oracles, ids)):
        a = approx.sample(n_eval, x, substream(seed, "eval", i))
        if not np.all(np.isfinite(a)):
            raise NumericalError(f"{method}: non-finite posterior draws for observation {oid}")
        b = oracle.draw(n_eval, substream(seed, "oracle", i))
        out.append(Evaluation(method, seed, oid, metric_report(a, oracle, b)))
    return out


# output

def metrics_rows(cfg: ExperimentConfig, evaluations: list[Evaluation], param_names) -> list[dict]:
    """Gaussian: one row per observation with ``param='all'`` (means over
    dimensions); ar1: one row per parameter with the country id in ``mu_obs``."""
    rows = []
    for e in evaluations:
        r = e.report
        common = {"task": cfg.task, "factor": cfg.factor, "value": cfg.factor_value,
                  "method": e.method, "seed": e.seed, "mu_obs": e.obs_id, "mmd": r.mmd}
        if cfg.task == "gaussian":
            rows.append({**common, "param": "all", "mean_bias": float(np.mean(r.mean_bias)),
                         "sd_bias": float(np.mean(r.sd_bias)),
                         "wasserstein": float(np.mean(r.wasserstein))})
        else:
            for d, name in enumerate(param_names):
                rows.append({**common, "param": name, "mean_bias": r.mean_bias[d],
                             "sd_bias": r.sd_bias[d], "wasserstein": r.wasserstein[d]})
    return rows


def write_metrics_csv(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRICS_HEADER, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def write_ar1_table(path: Path, evaluations: list[Evaluation], param_names) -> list[dict]:
    """Per-parameter averages over countries (and refits) for each method."""
    methods = sorted({e.method for e in evaluations})
    table = []
    for d, name in enumerate(param_names):
        for m in methods:
            reps = [e.report for e in evaluations if e.method == m]
            table.append({"param": name, "method": m,
                          "mean_bias": float(np.mean([r.mean_bias[d] for r in reps])),
                          "sd_bias": float(np.mean([r.sd_bias[d] for r in reps])),
                          "wasserstein": float(np.mean([r.wasserstein[d] for r in reps])),
                          "n": len(reps)})
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(table[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(table)
    return table


def _prepare_dir(out: Path) -> Path:
    out = Path(out)
    for sub in ("reports", "logs", "checkpoints", "oracle"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out: Path, cfg: ExperimentConfig, status: str, aborted: list,
                   elapsed: float, extra: dict | None = None) -> None:
    doc = {
        "manifest_version": MANIFEST_VERSION,
        "format_versions": {"checkpoint": CHECKPOINT_VERSION, "metrics_csv": METRICS_VERSION,
                            "manifest": MANIFEST_VERSION},
        "build": build_id(),
        "kernel_backend": _kernels.BACKEND,
        "config": cfg.to_dict(),
        "seeds": cfg.seeds,
        "methods": list(method_names(cfg.likelihood_mode)),
        "status": status,
        "aborted": aborted,
        "elapsed_seconds": round(elapsed, 3),
    }
    doc.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentResult:
    """Run every refit: train baseline and SC, evaluate both against the oracle."""
    t0 = time.perf_counter()
    out = _prepare_dir(out_dir if out_dir is not None else cfg.out)
    model = make_model(cfg)
    result = ExperimentResult(out)
    truth = None
    if cfg.task == "gaussian":
        ids = [_obs_id("gaussian", mu) for mu in cfg.mu_obs]
        panel = None
    else:
        ids, panel, truth = ar1_panel(cfg, model)
        oracles = ar1_oracles(cfg, model, panel)
        for oid, o in zip(ids, oracles):
            np.save(out / "oracle" / f"{oid}.npy", o.samples)
        diag = {oid: o.diagnostics for oid, o in zip(ids, oracles)}
        (out / "oracle" / "diagnostics.json").write_text(json.dumps(diag, indent=1) + "\n")
    saved_obs = {}
    for seed in cfg.seeds:
        labeled = model.simulate(cfg.N, substream(seed, "labeled"))
        if cfg.task == "gaussian":
            observations = gaussian_observations(cfg, model, seed)
            oracles = [gaussian_analytic_posterior(model, x) for x in observations]
            saved_obs[f"seed{seed}"] = observations
        else:
            observations = panel
        unl = unlabeled_data(cfg, model, seed, panel)
        runs: dict[str, TrainResult] = train_pair(cfg, model, seed, labeled, unl, out)
        for method, res in runs.items():
            if res.aborted:
                result.aborted.append({"method": method, "seed": seed, "error": res.error})
                log.error("%s seed %d aborted: %s", method, seed, res.error)
            result.trained[(method, seed)] = res.approximator
            try:
                evals = evaluate_approximator(res.approximator, observations, oracles, ids,
                                              seed, cfg.n_eval, method)
            except NumericalError as exc:
                result.aborted.append({"method": method, "seed": seed, "error": str(exc)})
                continue
            for e in evals:
                path = out / "reports" / f"{method}_seed{seed}_{e.obs_id}.json"
                path.write_text(json.dumps(e.report.to_dict(), indent=1, sort_keys=True) + "\n")
            result.evaluations.extend(evals)
    if cfg.task == "ar1":
        saved_obs["panel"] = panel
        if truth is not None:
            saved_obs["true_theta"] = truth
    np.savez(out / "observations.npz", ids=np.array(ids), **saved_obs)
    rows = metrics_rows(cfg, result.evaluations, model.param_names)
    write_metrics_csv(out / "metrics.csv", rows)
    if cfg.task == "ar1" and result.evaluations:
        write_ar1_table(out / "table_ar1.csv", result.evaluations, model.param_names)
    status = "ok" if result.ok else "partial"
    write_manifest(out, cfg, status, result.aborted, time.perf_counter() - t0,
                   {"observation_ids": ids})
    return result


# factor sweeps

FACTOR_LEVELS = {
    "D": [2, 10, 100],
    "M": [1, 4, 32],
    "mu_star": [0.0, 1.0, 2.0, 3.0, 5.0],
    "K": [1, 10],
    "likelihood_mode": ["known", "estimated"],
}


def factor_configs(base: dict, factors: dict | None = None) -> list[ExperimentConfig]:
    """One config per factor level, all other factors at ``base``."""
    out = []
    for factor, levels in (factors or FACTOR_LEVELS).items():
        for level in levels:
            d = {**base, factor: level, "factor": factor}
            d["out"] = str(Path(base.get("out", "results")) / f"{factor}={level}")
            out.append(ExperimentConfig.from_dict(d))
    return out
