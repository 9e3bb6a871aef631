import csv
import json

import numpy as np
import pytest
from scipy.integrate import trapezoid

from ssabi.errors import ConfigError, DataError
from ssabi.harness import (ExperimentConfig, apply_preset, factor_configs, generate_figure_data,
                           ingest_unlabeled_csv, run_experiment)
from ssabi.harness.cli import main
from ssabi.harness.experiment import METRICS_HEADER
from ssabi.model_zoo import AR1Model, ar1_simulate


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


TINY = {"N": 64, "epochs": 1, "flow_layers": 2, "flow_hidden": 8, "n_eval": 200, "L": 4}


# config

def test_config_defaults():
    c = ExperimentConfig()
    assert (c.task, c.D, c.M, c.mu_star, c.K, c.likelihood_mode) == (
        "gaussian", 10, 32, 3.0, 1, "known")
    assert (c.N, c.L) == (1024, 32)
    assert c.mu_obs == [float(v) for v in range(12)]
    assert c.train.epochs == 100 and c.train.lam == 1.0


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="bogus"):
        ExperimentConfig.from_dict({"bogus": 1})


def test_config_round_trip():
    c = ExperimentConfig.from_dict({"D": 2, "epochs": 7, "lam": 0.5})
    again = ExperimentConfig.from_dict(c.to_dict())
    assert again == c and again.train.epochs == 7 and again.train.lam == 0.5


def test_ar1_task_training_defaults():
    c = ExperimentConfig.from_dict({"task": "ar1"})
    assert c.M == 8 and c.train.flow_layers == 6 and c.train.activation == "elu"


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(task="poisson")
    with pytest.raises(ConfigError):
        ExperimentConfig(task="ar1", likelihood_mode="estimated")
    with pytest.raises(ConfigError):
        ExperimentConfig(L=1)


def test_desk_preset():
    d = apply_preset({"epochs": 3}, "desk")
    assert d["N"] == 512 and d["epochs"] == 3 and d["D"] == 2
    assert apply_preset({"D": 10}, "desk")["D"] == 2
    with pytest.raises(ConfigError):
        apply_preset({}, "laptop")


def test_factor_configs():
    cfgs = factor_configs({"out": "r"}, {"M": [4, 32], "D": [2]})
    assert [(c.factor, c.factor_value) for c in cfgs] == [("M", 4), ("M", 32), ("D", 2)]
    assert cfgs[0].out.endswith("M=4") and cfgs[0].D == 10


# ingestion

def write_ar1_csv(path, countries=2, years=5, shuffle=False, drop=None):
    rng = np.random.default_rng(0)
    rows = []
    for c in range(countries):
        block = [[f"C{c}", 2000 + t, *rng.standard_normal(3).round(4).tolist()]
                 for t in range(years)]
        if shuffle and c == 0:
            block[1], block[2] = block[2], block[1]
        rows += block
    cols = ["country", "year", "passengers_diff", "household_debt", "gdp_per_capita"]
    if drop:
        i = cols.index(drop)
        cols.pop(i)
        rows = [r[:i] + r[i + 1:] for r in rows]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        w.writerows(rows)
    return path


def test_ingest_two_countries(tmp_path):
    data = ingest_unlabeled_csv(write_ar1_csv(tmp_path / "a.csv"), "ar1")
    assert len(data) == 2 and data.observations.shape == (2, 5, 3)
    assert data.ids == ["C0", "C1"]
    np.testing.assert_allclose(data.observations[:, :, 1].std(), 1.0)


def test_ingest_missing_column(tmp_path):
    with pytest.raises(DataError, match="household_debt"):
        ingest_unlabeled_csv(write_ar1_csv(tmp_path / "a.csv", drop="household_debt"), "ar1")


def test_ingest_non_monotone_years(tmp_path):
    with pytest.raises(DataError, match="year"):
        ingest_unlabeled_csv(write_ar1_csv(tmp_path / "a.csv", shuffle=True), "ar1")


def test_ingest_bad_value_names_row_and_column(tmp_path):
    p = write_ar1_csv(tmp_path / "a.csv")
    lines = p.read_text().splitlines()
    parts = lines[3].split(",")
    parts[2] = "abc"
    lines[3] = ",".join(parts)
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match=r"row \d+, column 'passengers_diff'"):
        ingest_unlabeled_csv(p, "ar1")


def test_ingest_gaussian(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("obs,point,x_0,x_1\n0,0,1.0,2.0\n0,1,1.5,2.5\n1,0,3.0,4.0\n1,1,3.5,4.5\n")
    data = ingest_unlabeled_csv(p, "gaussian", D=2)
    assert data.observations.shape == (2, 2, 2)
    assert data.observations[1, 1, 0] == 3.5


def test_ingest_unknown_task(tmp_path):
    with pytest.raises(ConfigError):
        ingest_unlabeled_csv(write_ar1_csv(tmp_path / "a.csv"), "poisson")


# gaussian experiment

@pytest.fixture(scope="module")
def gaussian_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("gauss")
    cfg = ExperimentConfig.from_dict({**TINY, "D": 2, "M": 4, "refits": 2, "out": str(out)})
    return cfg, run_experiment(cfg)


def test_metrics_cardinality_and_header(gaussian_run):
    cfg, res = gaussian_run
    path = res.out_dir / "metrics.csv"
    assert path.read_text().splitlines()[0] == ",".join(METRICS_HEADER)
    rows = read_csv(path)
    assert len(rows) == 12 * 2 * 2
    assert {r["method"] for r in rows} == {"npe", "npe_sc"}
    assert {r["mu_obs"] for r in rows} == {f"{v:g}" for v in range(12)}


def test_results_layout(gaussian_run):
    _, res = gaussian_run
    out = res.out_dir
    for name in ("npe_seed0.jsonl", "npe_sc_seed1.jsonl"):
        assert (out / "logs" / name).exists()
    assert (out / "checkpoints" / "npe_sc_seed0.json").exists()
    assert len(list((out / "reports").glob("*.json"))) == 48


def test_manifest_contents(gaussian_run):
    cfg, res = gaussian_run
    doc = json.loads((res.out_dir / "manifest.json").read_text())
    assert doc["seeds"] == [0, 1]
    assert doc["config"] == json.loads(json.dumps(cfg.to_dict()))
    assert set(doc["format_versions"]) >= {"checkpoint", "metrics_csv", "manifest"}
    assert doc["build"] and doc["status"] == "ok"
    assert doc["methods"] == ["npe", "npe_sc"]


def test_contour_integrates_to_one(gaussian_run):
    _, res = gaussian_run
    path = generate_figure_data(res.out_dir, "contour")
    rows = read_csv(path)
    sel = [r for r in rows if r["method"] == "npe" and r["seed"] == "0" and r["mu_obs"] == "3.0"]
    assert len(sel) == 100 * 100
    t0 = np.array([float(r["theta_0"]) for r in sel]).reshape(100, 100)
    t1 = np.array([float(r["theta_1"]) for r in sel]).reshape(100, 100)
    exact = np.array([float(r["analytic_density"]) for r in sel]).reshape(100, 100)
    flow = np.array([float(r["density"]) for r in sel]).reshape(100, 100)
    mass = trapezoid(trapezoid(exact, t1[0], axis=1), t0[:, 0])
    assert mass == pytest.approx(1.0, abs=1e-3)
    assert np.all(flow >= 0) and np.all(np.isfinite(flow))


def test_sweep_figure(gaussian_run):
    _, res = gaussian_run
    rows = read_csv(generate_figure_data(res.out_dir, "sweep"))
    assert len(rows) == 24 and all(r["n"] == "2" for r in rows)


def test_figure_errors(gaussian_run, tmp_path):
    _, res = gaussian_run
    with pytest.raises(DataError):
        generate_figure_data(tmp_path / "nothing", "contour")
    with pytest.raises(DataError):
        generate_figure_data(tmp_path, "contour")
    with pytest.raises(ConfigError):
        generate_figure_data(res.out_dir, "forest")
    with pytest.raises(ConfigError):
        generate_figure_data(res.out_dir, "violin")


def test_epochs_zero_gives_identical_methods(tmp_path):
    cfg = ExperimentConfig.from_dict({**TINY, "D": 1, "M": 4, "epochs": 0, "out": str(tmp_path)})
    res = run_experiment(cfg)
    for mu in ("0", "5"):
        a = res.select("npe", mu)[0].report
        b = res.select("npe_sc", mu)[0].report
        assert a.to_dict() == b.to_dict()


def test_baseline_and_sc_share_initialization(tmp_path):
    from ssabi.training import load_checkpoint
    cfg = ExperimentConfig.from_dict({**TINY, "D": 1, "epochs": 0, "out": str(tmp_path)})
    run_experiment(cfg)
    a, _ = load_checkpoint(tmp_path / "checkpoints" / "npe_seed0.json")
    b, _ = load_checkpoint(tmp_path / "checkpoints" / "npe_sc_seed0.json")
    np.testing.assert_array_equal(a.params.flatten(), b.params.flatten())


def test_estimated_mode_method_names(tmp_path):
    cfg = ExperimentConfig.from_dict({**TINY, "D": 1, "K": 2, "likelihood_mode": "estimated",
                                      "mu_obs": [0, 3], "out": str(tmp_path)})
    res = run_experiment(cfg)
    assert {e.method for e in res.evaluations} == {"nple", "nple_sc"}


# ar1 experiment

AR1_SMALL = {"task": "ar1", "N": 64, "epochs": 1, "flow_layers": 2, "flow_hidden": 8, "L": 4,
             "n_countries": 3, "M": 2, "n_eval": 300, "mh_samples": 300, "mh_burn_in": 500,
             "mh_thin": 2}


@pytest.fixture(scope="module")
def ar1_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ar1")
    cfg = ExperimentConfig.from_dict({**AR1_SMALL, "out": str(out)})
    return cfg, run_experiment(cfg)


def test_ar1_tables(ar1_run):
    _, res = ar1_run
    rows = read_csv(res.out_dir / "metrics.csv")
    assert len(rows) == 3 * 5 * 2
    table = read_csv(res.out_dir / "table_ar1.csv")
    assert len(table) == 5 * 2
    assert {r["param"] for r in table} == set(AR1Model().param_names)
    assert all(r["n"] == "3" for r in table)


def test_forest_quantiles(ar1_run):
    _, res = ar1_run
    rows = read_csv(generate_figure_data(res.out_dir, "forest"))
    assert len(rows) == 3 * 5 * 3
    for r in rows:
        q = [float(r[k]) for k in ("q2.5", "q25", "q50", "q75", "q97.5")]
        assert q == sorted(q)
    oracle = [r for r in rows if r["method"] == "oracle" and r["country"] == "country_00"
              and r["param"] == AR1Model().param_names[0]]
    samples = np.load(res.out_dir / "oracle" / "country_00.npy")[:, 0]
    assert float(oracle[0]["q50"]) == pytest.approx(np.percentile(samples, 50))


# cli

def test_cli_config_error_exit_code(tmp_path, capsys):
    assert main(["simulate", "-o", str(tmp_path / "s.npz"), "--set", "nonsense=1"]) == 2
    assert "nonsense" in capsys.readouterr().err


def test_cli_argparse_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["simulate"])
    assert exc.value.code == 2


def test_cli_data_error_exit_code(tmp_path):
    assert main(["report", str(tmp_path / "missing"), "--figure", "contour"]) == 3


def test_cli_simulate_train_evaluate(tmp_path, capsys):
    data = tmp_path / "sim.npz"
    assert main(["simulate", "--D", "1", "-n", "50", "-o", str(data)]) == 0
    with np.load(data) as f:
        assert f["theta"].shape == (50, 1) and f["x"].shape == (50, 1, 1)
    ckpt = tmp_path / "m.json"
    log = tmp_path / "log.jsonl"
    assert main(["train", "--D", "1", "--M", "4", "--epochs", "2", "--flow-layers", "2",
                 "--flow-hidden", "8", "--L", "4", "--data", str(data), "--log", str(log),
                 "-o", str(ckpt)]) == 0
    assert len(log.read_text().splitlines()) == 2
    capsys.readouterr()
    assert main(["evaluate", str(ckpt), "--D", "1", "--set", "mu_obs=[0,4]",
                 "--set", "n_eval=200"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "obs,param,mean_bias,sd_bias,wasserstein,mmd"
    assert len(out) == 3


def test_cli_evaluate_shape_mismatch(tmp_path):
    ckpt = tmp_path / "m.json"
    assert main(["train", "--D", "1", "--M", "0", "--epochs", "0", "--N", "8",
                 "-o", str(ckpt)]) == 0
    assert main(["evaluate", str(ckpt), "--D", "3"]) == 2


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"D": 1, "epochs": 0, "N": 8}))
    assert main(["train", "--config", str(cfg), "-o", str(tmp_path / "m.json")]) == 0
    cfg.write_text(json.dumps({"train": {"epochs": 1}}))
    assert main(["train", "--config", str(cfg), "-o", str(tmp_path / "m.json")]) == 2


def test_cli_reproduce_and_report(tmp_path, capsys):
    out = tmp_path / "f1"
    code = main(["reproduce", "figure1", "--preset", "desk", "--epochs", "1", "--N", "32",
                 "--set", "mu_obs=[0,5]", "--set", "n_eval=200", "--flow-layers", "2",
                 "--flow-hidden", "8", "--L", "4", "--out", str(out)])
    assert code == 0
    assert (out / "figure_contour.csv").exists()
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    assert "npe_sc" in capsys.readouterr().out


def test_ar1_csv_unlabeled_experiment(tmp_path):
    rng = np.random.default_rng(3)
    model = AR1Model(T=6)
    rows = []
    for c in range(3):
        u, w = rng.standard_normal(7), rng.standard_normal(7)
        y = np.concatenate([[0.0], ar1_simulate(model.sample_prior(1, rng)[0], u, w, 0.0, 6,
                                                rng)])
        rows += [[f"K{c}", 1990 + t, y[t], u[t], w[t]] for t in range(7)]
    path = tmp_path / "panel.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["country", "year", "passengers_diff", "household_debt", "gdp_per_capita"])
        wr.writerows(rows)
    cfg = ExperimentConfig.from_dict({**AR1_SMALL, "T": 6, "unlabeled_csv": str(path),
                                      "out": str(tmp_path / "r")})
    res = run_experiment(cfg)
    assert res.ok
    assert {e.obs_id for e in res.evaluations} == {"K0", "K1", "K2"}
