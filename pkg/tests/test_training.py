import json

import numpy as np
import pytest

from ssabi.approximator import Approximator
from ssabi.diffmath import ParamStore
from ssabi.errors import CheckpointVersionError, ConfigError, DataError, NumericalError
from ssabi.model_zoo import GaussianModel
from ssabi.training import (AdamState, TrainConfig, adam_step, architecture_for, clip_gradients,
                            full_nll, load_checkpoint, save_checkpoint, train)


def store_with(value):
    s = ParamStore()
    s.add("p", np.array([value]))
    return s


# adam

def test_adam_first_step_magnitude():
    s = store_with(0.0)
    state = AdamState.zeros(s)
    adam_step(s, {"p": np.array([1.0])}, state, 1e-3)
    assert abs(s["p"][0] + 1e-3) <= 1e-6
    assert state.step == 1


def test_adam_zero_gradient_keeps_params():
    s = store_with(0.7)
    state = AdamState.zeros(s)
    for _ in range(3):
        adam_step(s, {"p": np.array([0.0])}, state, 1e-2)
    assert s["p"][0] == 0.7
    assert state.step == 3


def test_adam_deterministic():
    outs = []
    for _ in range(2):
        s = store_with(0.3)
        state = AdamState.zeros(s)
        for g in (0.5, -1.2, 3.0):
            adam_step(s, {"p": np.array([g])}, state, 1e-3)
        outs.append((s["p"].copy(), state.m["p"].copy(), state.v["p"].copy()))
    for a, b in zip(*outs):
        np.testing.assert_array_equal(a, b)


def test_adam_rejects_non_finite_gradient():
    s = store_with(0.0)
    with pytest.raises(NumericalError, match="'p'"):
        adam_step(s, {"p": np.array([np.nan])}, AdamState.zeros(s), 1e-3)


def test_adam_shape_mismatch():
    s = store_with(0.0)
    with pytest.raises(ConfigError):
        adam_step(s, {"p": np.zeros(2)}, AdamState.zeros(s), 1e-3)


def test_clip_gradients():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    norm, clipped = clip_gradients(g, 1.0)
    assert norm == 5.0 and clipped
    assert np.hypot(g["a"][0], g["b"][0]) == pytest.approx(1.0)
    _, clipped = clip_gradients({"a": np.array([0.1])}, 1.0)
    assert not clipped


# config

def test_train_config_defaults():
    c = TrainConfig()
    assert (c.epochs, c.batch_size, c.learning_rate, c.L, c.gamma_l2, c.dropout) == (
        100, 32, 5e-4, 32, 1e-3, 0.05)
    assert c.lr_schedule == "constant" and c.early_stopping_patience == 0
    assert c.clip_norm == 10.0


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(L=1)
    with pytest.raises(ConfigError):
        TrainConfig(proposal="mixture")
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"epochz": 3})


def test_lambda_warmup():
    c = TrainConfig(lam=2.0, lam_warmup_epochs=4)
    assert [c.lam_at(e) for e in (0, 2, 4, 9)] == [0.0, 1.0, 2.0, 2.0]


# training loop

def data(D=1, K=1, N=64, M=4, seed=0):
    model = GaussianModel(D=D, K=K)
    rng = np.random.default_rng(seed)
    theta, x = model.simulate(N, rng)
    _, xu = model.simulate(M, rng)
    return model, (theta, x), xu + 3.0


def small_config(**kw):
    base = dict(epochs=2, batch_size=16, L=4, flow_layers=2, flow_hidden=8, seed=3)
    base.update(kw)
    return TrainConfig(**base)


def test_epochs_zero_returns_initialization():
    model, lab, xu = data()
    cfg = small_config(epochs=0)
    res = train(cfg, lab, xu, model)
    init = Approximator(architecture_for(model, cfg), seed=cfg.seed)
    for name in init.params.names():
        np.testing.assert_array_equal(res.approximator.params[name], init.params[name])
    assert res.log == []


def test_same_seed_bit_identical(tmp_path):
    model, lab, xu = data()
    runs = []
    for i in range(2):
        res = train(small_config(), lab, xu, model, log_path=tmp_path / f"log{i}.jsonl")
        runs.append(res)
    for name in runs[0].approximator.params.names():
        np.testing.assert_array_equal(runs[0].approximator.params[name],
                                      runs[1].approximator.params[name])
    assert (tmp_path / "log0.jsonl").read_bytes() == (tmp_path / "log1.jsonl").read_bytes()


def test_different_seed_differs():
    model, lab, xu = data()
    a = train(small_config(seed=1), lab, xu, model).approximator
    b = train(small_config(seed=2), lab, xu, model).approximator
    assert not np.array_equal(a.params.flatten(), b.params.flatten())


class CountingModel:
    def __init__(self, model):
        self.model = model
        self.calls = 0

    def __getattr__(self, name):
        return getattr(self.model, name)

    def log_likelihood(self, theta, x):
        self.calls += 1
        return self.model.log_likelihood(theta, x)


class Untouchable:
    def __getattribute__(self, name):
        raise AssertionError(f"unlabeled data accessed via {name}")

    def __len__(self):
        raise AssertionError("unlabeled data accessed via len")


def test_lambda_zero_never_touches_unlabeled_or_likelihood():
    model, lab, _ = data()
    counting = CountingModel(model)
    train(small_config(lam=0.0), lab, Untouchable(), counting)
    assert counting.calls == 0


def test_lambda_positive_uses_likelihood():
    model, lab, xu = data()
    counting = CountingModel(model)
    train(small_config(epochs=1), lab, xu, counting)
    assert counting.calls == 4  # one per labeled batch


def test_log_records_breakdown_identity(tmp_path):
    model, lab, xu = data()
    path = tmp_path / "log.jsonl"
    res = train(small_config(epochs=3, lam=0.5), lab, xu, model, log_path=path)
    lines = [json.loads(l) for l in path.read_text().splitlines()]
    assert lines == res.log and len(lines) == 3
    for rec in lines:
        assert rec["total"] == rec["nll"] + rec["lambda_used"] * rec["sc"] + rec["l2"]
        assert rec["sc"] > 0
        assert {"epoch", "clip_events", "max_grad_norm"} <= set(rec)


def test_estimated_mode_trains_likelihood():
    model, lab, xu = data(D=2, K=3)
    res = train(small_config(likelihood_mode="estimated"), lab, xu, model)
    assert res.approximator.likelihood is not None
    assert all(r["nll_likelihood"] > 0 for r in res.log)


def test_nll_decreases_on_d1_npe():
    model, lab, _ = data(N=256)
    cfg = TrainConfig(epochs=50, lam=0.0, flow_layers=2, flow_hidden=16, seed=0)
    init = Approximator(architecture_for(model, cfg), seed=0)
    res = train(cfg, lab, None, model)
    assert full_nll(res.approximator, *lab) < full_nll(init, *lab)


def test_nll_decreases_after_twenty_adam_steps():
    model, lab, _ = data(N=32)
    cfg = TrainConfig(epochs=20, batch_size=32, lam=0.0, flow_layers=2, flow_hidden=16, seed=0)
    init = Approximator(architecture_for(model, cfg), seed=0)
    res = train(cfg, lab, None, model)
    assert full_nll(res.approximator, *lab) < full_nll(init, *lab)


def test_abort_keeps_last_good_parameters():
    model, lab, xu = data()

    class Exploding(CountingModel):
        def log_likelihood(self, theta, x):
            self.calls += 1
            if self.calls > 4:
                return np.full(theta.shape[:2], np.nan)
            return self.model.log_likelihood(theta, x)

    cfg = small_config(epochs=3)
    res = train(cfg, lab, xu, Exploding(model))
    assert res.aborted and "non-finite" in res.error
    ref = train(small_config(epochs=1), lab, xu, model)
    np.testing.assert_array_equal(res.approximator.params.flatten(),
                                  ref.approximator.params.flatten())
    assert len(res.log) == 1


def test_train_rejects_empty_labeled():
    model, _, _ = data()
    with pytest.raises(DataError):
        train(small_config(), (np.zeros((0, 1)), np.zeros((0, 1, 1))), None, model)


def test_snapshot_is_immutable():
    model, lab, xu = data()
    res = train(small_config(epochs=1), lab, xu, model)
    name = res.approximator.params.names()[0]
    with pytest.raises(ValueError):
        res.approximator.params[name][...] = 0.0


# checkpoints

def test_checkpoint_round_trip_byte_identical(tmp_path):
    model, lab, xu = data(D=2, K=3)
    res = train(small_config(likelihood_mode="estimated"), lab, xu, model)
    a = save_checkpoint(res.approximator, tmp_path / "a.json", config={"x": 1},
                        provenance={"seed": 3})
    loaded, doc = load_checkpoint(a)
    b = save_checkpoint(loaded, tmp_path / "b.json", config=doc["config"],
                        provenance=doc["provenance"])
    assert a.read_bytes() == b.read_bytes()
    probe_t = np.random.default_rng(0).standard_normal((20, 2))
    probe_x = np.random.default_rng(1).standard_normal((3, 2))
    np.testing.assert_array_equal(res.approximator.log_prob(probe_t, probe_x),
                                  loaded.log_prob(probe_t, probe_x))


def test_checkpoint_version_error(tmp_path):
    model, lab, _ = data()
    path = save_checkpoint(train(small_config(epochs=0), lab, None, model).approximator,
                           tmp_path / "c.json")
    doc = json.loads(path.read_text())
    doc["format_version"] = 0
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(path)


def test_checkpoint_corrupt_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(DataError):
        load_checkpoint(path)
