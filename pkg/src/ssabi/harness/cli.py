"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical abort.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError, NumericalError, SSABIError
from ..model_zoo import gaussian_analytic_posterior, mh_reference_posterior, MHConfig
from ..rng import substream
from ..training import load_checkpoint, save_checkpoint, train
from .config import ExperimentConfig, apply_preset, load_config_file
from .experiment import (FACTOR_LEVELS, evaluate_approximator, factor_configs, make_model,
                         run_experiment, unlabeled_data)
from .figures import FIGURES, generate_figure_data
from .ingest import ingest_unlabeled_csv

log = logging.getLogger("ssabi")

# flag name -> config key
FLAG_KEYS = {"task": "task", "D": "D", "M": "M", "mu_star": "mu_star", "K": "K",
             "likelihood_mode": "likelihood_mode", "N": "N", "L": "L", "lam": "lam",
             "epochs": "epochs", "refits": "refits", "seed": "first_seed", "out": "out",
             "unlabeled_csv": "unlabeled_csv", "flow_layers": "flow_layers",
             "flow_hidden": "flow_hidden"}

CASE_STUDIES = ("figure1", "factors", "ar1")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--preset", choices=["desk"], help="shrink budgets for a quick run")
    p.add_argument("--task", choices=["gaussian", "ar1"])
    p.add_argument("--D", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--mu-star", dest="mu_star", type=float)
    p.add_argument("--K", type=int)
    p.add_argument("--likelihood-mode", dest="likelihood_mode", choices=["known", "estimated"])
    p.add_argument("--N", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--refits", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--unlabeled-csv", dest="unlabeled_csv")
    p.add_argument("--flow-layers", dest="flow_layers", type=int)
    p.add_argument("--flow-hidden", dest="flow_hidden", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config field")


def config_from_args(args, base: dict | None = None) -> ExperimentConfig:
    d = dict(base or {})
    if args.config:
        d.update(load_config_file(args.config))
    for flag, key in FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is not None:
            d[key] = v
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        d[k.strip()] = _parse_value(v)
    return ExperimentConfig.from_dict(apply_preset(d, args.preset))


# subcommands

def cmd_simulate(args) -> int:
    cfg = config_from_args(args)
    model = make_model(cfg)
    theta, x = model.simulate(args.n or cfg.N, substream(cfg.first_seed, "labeled"))
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savez(out, theta=theta, x=x)
    print(f"wrote {len(theta)} simulations to {out}")
    return 0


def _load_labeled(path):
    try:
        with np.load(path) as f:
            return f["theta"], f["x"]
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read labeled data {path}: {exc}") from exc


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    model = make_model(cfg)
    seed = cfg.first_seed
    labeled = (_load_labeled(args.data) if args.data
               else model.simulate(cfg.N, substream(seed, "labeled")))
    if cfg.task == "ar1":
        if not cfg.unlabeled_csv:
            raise ConfigError("ar1 training needs --unlabeled-csv")
        panel = ingest_unlabeled_csv(cfg.unlabeled_csv, "ar1").observations
        unl = unlabeled_data(cfg, model, seed, panel)
    else:
        unl = unlabeled_data(cfg, model, seed)
    tcfg = replace(cfg.train, seed=seed)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    res = train(tcfg, labeled, unl, model, log_path=args.log)
    save_checkpoint(res.approximator, out, config=tcfg.to_dict(),
                    provenance={"experiment": cfg.to_dict()})
    print(f"checkpoint written to {out} (clip events: {res.clip_events})")
    if res.aborted:
        print(f"training aborted: {res.error}", file=sys.stderr)
        return NumericalError.exit_code
    return 0


def cmd_evaluate(args) -> int:
    cfg = config_from_args(args)
    model = make_model(cfg)
    approx, doc = load_checkpoint(args.checkpoint)
    if tuple(approx.arch.obs_shape) != tuple(model.obs_shape):
        raise ConfigError(f"checkpoint expects observations {tuple(approx.arch.obs_shape)}, "
                          f"task config gives {tuple(model.obs_shape)}")
    seed = cfg.first_seed
    if cfg.task == "gaussian":
        ids = [f"{mu:g}" for mu in cfg.mu_obs]
        observations = [model.observation(mu, substream(seed, "observation", i))
                        for i, mu in enumerate(cfg.mu_obs)]
        oracles = [gaussian_analytic_posterior(model, x) for x in observations]
    else:
        if not cfg.unlabeled_csv:
            raise ConfigError("ar1 evaluation needs --unlabeled-csv with the observations")
        data = ingest_unlabeled_csv(cfg.unlabeled_csv, "ar1")
        ids, observations = data.ids, data.observations
        mh = MHConfig(n_samples=cfg.mh_samples, burn_in=cfg.mh_burn_in, thin=cfg.mh_thin)
        oracles = [mh_reference_posterior(model, x, config=mh, rng=substream(seed, "mh", j))
                   for j, x in enumerate(observations)]
    evals = evaluate_approximator(approx, observations, oracles, ids, seed, cfg.n_eval,
                                  args.method)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["obs", "param", "mean_bias", "sd_bias", "wasserstein", "mmd"])
    for e in evals:
        for d, name in enumerate(model.param_names):
            w.writerow([e.obs_id, name, f"{e.report.mean_bias[d]:.6g}",
                        f"{e.report.sd_bias[d]:.6g}", f"{e.report.wasserstein[d]:.6g}",
                        f"{e.report.mmd:.6g}"])
    return 0


def _summary(results_dir: Path) -> str:
    path = results_dir / "metrics.csv"
    if not path.exists():
        raise DataError(f"{path} missing")
    groups: dict[tuple, list] = {}
    with path.open(newline="") as fh:
        for r in csv.DictReader(fh):
            key = (r["method"], r["param"] if r["task"] == "ar1" else r["mu_obs"])
            groups.setdefault(key, []).append((float(r["mean_bias"]), float(r["sd_bias"]),
                                               float(r["mmd"]), float(r["wasserstein"])))
    lines = [f"{'method':<10} {'obs/param':<12} {'mean_bias':>10} {'sd_bias':>10} "
             f"{'mmd':>8} {'W1':>8}"]
    for (m, k), v in sorted(groups.items()):
        a = np.mean(v, axis=0)
        lines.append(f"{m:<10} {k:<12} {a[0]:>10.4f} {a[1]:>10.4f} {a[2]:>8.4f} {a[3]:>8.4f}")
    return "\n".join(lines)


def cmd_report(args) -> int:
    results = Path(args.results)
    if (results / "metrics.csv").exists():
        print(_summary(results))
    for fig in args.figure:
        path = generate_figure_data(results, fig)
        print(f"figure data: {path}")
    return 0


def _reproduce_configs(args) -> list[ExperimentConfig]:
    case = args.case
    out = Path(args.out or f"results/{case}")
    if case == "figure1":
        return [config_from_args(args, {"task": "gaussian", "D": 2, "out": str(out)})]
    if case == "ar1":
        return [config_from_args(args, {"task": "ar1", "out": str(out)})]
    base = config_from_args(args, {"task": "gaussian", "out": str(out)}).to_dict()
    levels = FACTOR_LEVELS
    if args.preset == "desk":
        levels = {"D": [2, 10], "M": [4, 32], "mu_star": [1.0, 3.0], "K": [1, 10],
                  "likelihood_mode": ["known", "estimated"]}
        base["D"] = 10
    return factor_configs(base, levels)


def cmd_reproduce(args) -> int:
    status = 0
    for cfg in _reproduce_configs(args):
        print(f"running {cfg.task} factor={cfg.factor} value={cfg.factor_value} -> {cfg.out}")
        res = run_experiment(cfg)
        print(_summary(res.out_dir))
        if cfg.task == "gaussian" and cfg.factor == "default":
            generate_figure_data(res.out_dir, "contour")
        if cfg.task == "ar1":
            generate_figure_data(res.out_dir, "forest")
        if not res.ok:
            print(f"partial results: {res.aborted}", file=sys.stderr)
            status = NumericalError.exit_code
    if args.case == "factors":
        print(f"figure data: {generate_figure_data(Path(args.out or 'results/factors'), 'sweep')}")
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ssabi", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate labeled (theta, x) pairs to .npz")
    _add_config_flags(s)
    s.add_argument("-n", type=int, help="number of simulations (default: N)")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="train one approximator and write a checkpoint")
    _add_config_flags(t)
    t.add_argument("--data", help=".npz with theta and x (default: simulate N pairs)")
    t.add_argument("--log", help="JSON-lines training log path")
    t.add_argument("-o", "--output", required=True, help="checkpoint path")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint against the oracle posterior")
    _add_config_flags(e)
    e.add_argument("checkpoint")
    e.add_argument("--method", default="checkpoint", help="label for the output rows")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="summarize a results directory and emit figure data")
    r.add_argument("results")
    r.add_argument("--figure", action="append", default=[], choices=FIGURES)
    r.set_defaults(func=cmd_report)

    x = sub.add_parser("reproduce", help="run a case study end to end")
    x.add_argument("case", choices=CASE_STUDIES)
    _add_config_flags(x)
    x.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SSABIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
