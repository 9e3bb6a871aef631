"""Plot-ready CSV data from a results directory (no rendering)."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from scipy.stats import gaussian_kde

from ..errors import ConfigError, DataError
from ..model_zoo import AR1Model, GaussianModel
from ..rng import substream
from ..training import load_checkpoint

FIGURES = ("contour", "forest", "sweep")
GRID_POINTS = 100
GRID_HALF_WIDTH = 4.0          # in posterior standard deviations
QUANTILES = (2.5, 25.0, 50.0, 75.0, 97.5)


def _load(results_dir: Path):
    manifest = results_dir / "manifest.json"
    if not manifest.exists():
        raise DataError(f"no results in {results_dir} (manifest.json missing)")
    doc = json.loads(manifest.read_text())
    obs_file = results_dir / "observations.npz"
    if not obs_file.exists():
        raise DataError(f"{obs_file} missing")
    return doc, np.load(obs_file, allow_pickle=False)


def _checkpoints(results_dir: Path, doc: dict):
    for method in doc["methods"]:
        for seed in doc["seeds"]:
            path = results_dir / "checkpoints" / f"{method}_seed{seed}.json"
            if not path.exists():
                raise DataError(f"checkpoint {path} missing")
            yield method, seed, load_checkpoint(path)[0]


def _write(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def posterior_grid(mean, sd, n: int = GRID_POINTS, half_width: float = GRID_HALF_WIDTH):
    """Axes of an ``n``-point grid over ``mean +- half_width * sd`` per dimension."""
    return [np.linspace(m - half_width * s, m + half_width * s, n) for m, s in zip(mean, sd)]


def analytic_grid_density(model: GaussianModel, x_obs, axes) -> np.ndarray:
    """Exact marginal posterior density of the first ``len(axes)`` coordinates."""
    mean, var = model.posterior_params(x_obs)
    mesh = np.meshgrid(*axes, indexing="ij")
    z2 = sum((g - mean[d]) ** 2 for d, g in enumerate(mesh)) / var
    k = len(axes)
    return np.exp(-0.5 * z2 - 0.5 * k * np.log(2.0 * np.pi * var))


def _flow_grid_density(approx, x_obs, axes, D: int, seed: int, i: int) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    if D == len(axes):
        dens = np.exp(approx.log_prob(pts, x_obs))
    else:
        draws = approx.sample(4000, x_obs, substream(seed, "eval", i))[:, :len(axes)]
        dens = gaussian_kde(draws.T)(pts.T)
    return dens.reshape(mesh[0].shape)


def contour_data(results_dir: Path, doc: dict, obs) -> list:
    cfg = doc["config"]
    model = GaussianModel(D=cfg["D"], K=cfg["K"])
    k = min(model.D, 2)
    rows = []
    for method, seed, approx in _checkpoints(results_dir, doc):
        observations = obs[f"seed{seed}"]
        for i, (mu, x) in enumerate(zip(cfg["mu_obs"], observations)):
            mean, var = model.posterior_params(x)
            axes = posterior_grid(mean[:k], np.full(k, np.sqrt(var)))
            dens = _flow_grid_density(approx, x, axes, model.D, seed, i)
            exact = analytic_grid_density(model, x, axes)
            mesh = np.meshgrid(*axes, indexing="ij")
            for idx in np.ndindex(dens.shape):
                coords = [float(g[idx]) for g in mesh] + [""] * (2 - k)
                rows.append([method, seed, mu, *coords, float(dens[idx]), float(exact[idx])])
    return rows


def forest_data(results_dir: Path, doc: dict, obs) -> list:
    cfg = doc["config"]
    model = AR1Model(T=cfg["T"])
    ids = [str(s) for s in obs["ids"]]
    panel = obs["panel"]
    rows = []
    for j, oid in enumerate(ids):
        path = results_dir / "oracle" / f"{oid}.npy"
        if not path.exists():
            raise DataError(f"oracle samples {path} missing")
        q = np.percentile(np.load(path), QUANTILES, axis=0)
        for d, name in enumerate(model.param_names):
            rows.append([oid, name, "oracle", "", *q[:, d].tolist()])
    for method, seed, approx in _checkpoints(results_dir, doc):
        for j, oid in enumerate(ids):
            draws = approx.sample(cfg["n_eval"], panel[j], substream(seed, "eval", j))
            q = np.percentile(draws, QUANTILES, axis=0)
            for d, name in enumerate(model.param_names):
                rows.append([oid, name, method, seed, *q[:, d].tolist()])
    return rows


def sweep_data(results_dir: Path) -> list:
    """Mean and sd over refits of every metric, per (factor, value, method, mu_obs, param)."""
    paths = sorted(results_dir.rglob("metrics.csv"))
    if not paths:
        raise DataError(f"no metrics.csv under {results_dir}")
    groups: dict[tuple, list] = {}
    for p in paths:
        with p.open(newline="") as fh:
            for r in csv.DictReader(fh):
                key = (r["task"], r["factor"], r["value"], r["method"], r["mu_obs"], r["param"])
                groups.setdefault(key, []).append(
                    [float(r[c]) for c in ("mean_bias", "sd_bias", "mmd", "wasserstein")])
    rows = []
    for key, vals in sorted(groups.items()):
        a = np.array(vals)
        sd = a.std(axis=0, ddof=1) if len(a) > 1 else np.zeros(4)
        rows.append([*key, len(a), *a.mean(axis=0).tolist(), *sd.tolist()])
    return rows


def generate_figure_data(results_dir, figure_id: str, out_path=None) -> Path:
    """Write the CSV for ``figure_id`` (contour, forest or sweep) and return its path."""
    results_dir = Path(results_dir)
    if figure_id not in FIGURES:
        raise ConfigError(f"figure id must be one of {FIGURES}, got {figure_id!r}")
    if not results_dir.is_dir():
        raise DataError(f"results directory {results_dir} does not exist")
    out_path = Path(out_path) if out_path else results_dir / f"figure_{figure_id}.csv"
    if figure_id == "sweep":
        header = ["task", "factor", "value", "method", "mu_obs", "param", "n",
                  "mean_bias", "sd_bias", "mmd", "wasserstein",
                  "mean_bias_sd", "sd_bias_sd", "mmd_sd", "wasserstein_sd"]
        return _write(out_path, header, sweep_data(results_dir))
    doc, obs = _load(results_dir)
    task = doc["config"]["task"]
    if figure_id == "contour":
        if task != "gaussian":
            raise ConfigError("contour data needs a gaussian results directory")
        header = ["method", "seed", "mu_obs", "theta_0", "theta_1", "density",
                  "analytic_density"]
        return _write(out_path, header, contour_data(results_dir, doc, obs))
    if task != "ar1":
        raise ConfigError("forest data needs an ar1 results directory")
    header = ["country", "param", "method", "seed"] + [f"q{q:g}" for q in QUANTILES]
    return _write(out_path, header, forest_data(results_dir, doc, obs))
