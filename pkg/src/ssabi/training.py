"""Deterministic training loop, Adam, and checkpoint persistence."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .approximator import Approximator, Architecture
from .diffmath import ParamStore, Tape
from .errors import CheckpointVersionError, ConfigError, DataError, NumericalError
from .losses import PROPOSALS, LossBreakdown, nll_term, semi_supervised_loss
from .rng import substream

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 5e-4
    lam: float = 1.0
    lam_warmup_epochs: int = 0
    L: int = 32
    gamma_l2: float = 1e-3
    dropout: float = 0.05
    seed: int = 0
    proposal: str = "current_posterior"
    likelihood_mode: str = "known"
    unlabeled_batch: int = 32
    clip_norm: float = 10.0
    lr_schedule: str = "constant"      # constant | cosine
    early_stopping_patience: int = 0   # 0 disables
    flow_layers: int = 5
    flow_hidden: int = 128
    activation: str = "relu"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.L < 2:
            raise ConfigError("epochs >= 0, batch_size >= 1 and L >= 2 required")
        if self.proposal not in PROPOSALS:
            raise ConfigError(f"proposal must be one of {PROPOSALS}")
        if self.likelihood_mode not in ("known", "estimated"):
            raise ConfigError("likelihood_mode must be 'known' or 'estimated'")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError("lr_schedule must be 'constant' or 'cosine'")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)

    def lam_at(self, epoch: int) -> float:
        if self.lam_warmup_epochs > 0:
            return self.lam * min(1.0, epoch / self.lam_warmup_epochs)
        return self.lam

    def lr_at(self, epoch: int) -> float:
        if self.lr_schedule == "cosine" and self.epochs > 0:
            return 0.5 * self.learning_rate * (1.0 + math.cos(math.pi * epoch / self.epochs))
        return self.learning_rate


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: ParamStore) -> "AdamState":
        return cls(m=params.zeros_like(), v=params.zeros_like())


def adam_step(params: ParamStore, grads: dict, state: AdamState, lr: float):
    """Bias-corrected Adam update, applied in place.  Returns ``(params, state)``."""
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ConfigError(f"gradient shape mismatch for {name!r}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        params[name] = params[name] - update
    return params, state


def clip_gradients(grads: dict, max_norm: float) -> tuple[float, bool]:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
        return norm, True
    return norm, False


@dataclass
class TrainResult:
    approximator: Approximator
    log: list = field(default_factory=list)
    aborted: bool = False
    error: str | None = None
    clip_events: int = 0


def architecture_for(model, config: TrainConfig, summary: str | None = None,
                     **overrides) -> Architecture:
    if summary is None:
        if model.name == "ar1":
            summary = "lstm"
        else:
            summary = "deepset" if model.obs_shape[0] > 1 else "none"
    if model.name == "ar1" and config.likelihood_mode == "estimated":
        raise ConfigError("estimated likelihood is only available for the gaussian task")
    arch = Architecture(
        param_dim=model.param_dim,
        obs_shape=tuple(model.obs_shape),
        summary=summary,
        flow_layers=config.flow_layers,
        flow_hidden=config.flow_hidden,
        activation=config.activation,
        dropout=config.dropout,
        likelihood=config.likelihood_mode == "estimated",
    )
    for k, v in overrides.items():
        setattr(arch, k, v)
    return arch


def full_nll(approx: Approximator, theta, x, batch: int = 512) -> float:
    total = 0.0
    for s in range(0, len(theta), batch):
        v, _ = nll_term(approx, theta[s:s + batch], x[s:s + batch], None)
        total += v * len(theta[s:s + batch])
    return total / len(theta)


def _epoch_record(epoch: int, parts: list[LossBreakdown], lam: float, clip: int,
                  grad_norm: float) -> dict:
    nll = float(np.mean([p.nll for p in parts]))
    sc = float(np.mean([p.sc for p in parts]))
    l2 = float(np.mean([p.l2 for p in parts]))
    rec = LossBreakdown(nll=nll, sc=sc, l2=l2, total=nll + lam * sc + l2, lambda_used=lam,
                        nll_posterior=float(np.mean([p.nll_posterior for p in parts])),
                        nll_likelihood=float(np.mean([p.nll_likelihood for p in parts])))
    d = rec.to_dict()
    d.update(epoch=epoch, clip_events=clip, max_grad_norm=grad_norm)
    return d


def train(config: TrainConfig, labeled, unlabeled, model, approximator: Approximator | None = None,
          log_path: str | Path | None = None, arch: Architecture | None = None) -> TrainResult:
    """Train on ``labeled = (theta, x)`` and optional ``unlabeled`` observations.

    On a numerical failure training stops and the result carries the last good
    parameters with ``aborted=True``.
    """
    theta, x = labeled
    theta = np.asarray(theta, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    N = len(theta)
    if N < 1 or len(x) != N:
        raise DataError("labeled data needs N >= 1 matching (theta, x) pairs")
    if approximator is None:
        approximator = Approximator(arch or architecture_for(model, config), seed=config.seed)
    approx = approximator
    params = approx.params
    state = AdamState.zeros(params)
    records: list[dict] = []
    clip_total = 0
    use_sc = config.lam != 0 and unlabeled is not None and len(unlabeled) > 0
    M = len(unlabeled) if use_sc else 0
    best, stale = math.inf, 0
    n_batches = math.ceil(N / config.batch_size)
    fh = open(log_path, "w") if log_path else None
    last_good = params.copy()
    try:
        for epoch in range(config.epochs):
            lam = config.lam_at(epoch)
            lr = config.lr_at(epoch)
            order = substream(config.seed, "shuffle", epoch).permutation(N)
            parts = []
            clip_epoch = 0
            max_norm = 0.0
            for b in range(n_batches):
                idx = order[b * config.batch_size:(b + 1) * config.batch_size]
                xu = None
                if use_sc and lam != 0:
                    if M <= config.unlabeled_batch:
                        xu = unlabeled
                    else:
                        pick = substream(config.seed, "unlabeled", epoch, b).choice(
                            M, config.unlabeled_batch, replace=False)
                        xu = unlabeled[np.sort(pick)]
                tape = Tape(params, training=True, rng=substream(config.seed, "dropout", epoch, b))
                part = semi_supervised_loss(
                    approx, model, (theta[idx], x[idx]), xu, lam, config.L, config.gamma_l2,
                    substream(config.seed, "proposal", epoch, b), tape=tape,
                    proposal=config.proposal, likelihood_mode=config.likelihood_mode)
                if not math.isfinite(part.total):
                    raise NumericalError(f"non-finite loss at epoch {epoch}, batch {b}")
                norm, clipped = clip_gradients(tape.grads, config.clip_norm)
                clip_epoch += clipped
                max_norm = max(max_norm, norm)
                adam_step(params, tape.grads, state, lr)
                if not params.all_finite():
                    raise NumericalError(f"non-finite parameters after epoch {epoch}, batch {b}")
                parts.append(part)
            last_good = params.copy()
            clip_total += clip_epoch
            rec = _epoch_record(epoch, parts, lam, clip_epoch, max_norm)
            records.append(rec)
            if fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
                fh.flush()
            log.debug("epoch %d total %.4f nll %.4f sc %.4f", epoch, rec["total"], rec["nll"],
                      rec["sc"])
            if config.early_stopping_patience > 0:
                if rec["total"] < best - 1e-8:
                    best, stale = rec["total"], 0
                else:
                    stale += 1
                    if stale >= config.early_stopping_patience:
                        break
    except NumericalError as exc:
        for name in params.names():
            params[name] = last_good[name]
        return TrainResult(approx.snapshot(), records, aborted=True, error=str(exc),
                           clip_events=clip_total)
    finally:
        if fh:
            fh.close()
    return TrainResult(approx.snapshot(), records, clip_events=clip_total)


# checkpoints

def _encode_params(params: ParamStore) -> dict:
    return {
        name: {"shape": list(v.shape), "decay": params.decays(name),
               "data": [float(a).hex() for a in v.ravel()]}
        for name, v in params.items()
    }


def checkpoint_document(approx: Approximator, config: dict | None = None,
                        provenance: dict | None = None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "ssabi.approximator",
        "architecture": approx.arch.to_dict(),
        "seed": approx.seed,
        "config": config or {},
        "provenance": provenance or {},
        "params": _encode_params(approx.params),
    }


def save_checkpoint(approx: Approximator, path, config: dict | None = None,
                    provenance: dict | None = None) -> Path:
    path = Path(path)
    doc = checkpoint_document(approx, config, provenance)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def load_checkpoint(path) -> tuple[Approximator, dict]:
    """Return ``(snapshot, document)``; parameters are restored bit-exactly."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt checkpoint {path}: {exc}") from exc
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format_version {version} != supported {FORMAT_VERSION}")
    try:
        arch = Architecture.from_dict(doc["architecture"])
        store = ParamStore()
        for name, entry in doc["params"].items():
            data = np.array([float.fromhex(s) for s in entry["data"]], dtype=np.float64)
            store.add(name, data.reshape(entry["shape"]), decay=entry["decay"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"corrupt checkpoint {path}: {exc}") from exc
    approx = Approximator(arch, seed=doc.get("seed", 0))
    if sorted(store.names()) != sorted(approx.params.names()):
        raise DataError("checkpoint parameters do not match its architecture")
    ordered = ParamStore()
    for name in approx.params.names():
        ordered.add(name, store[name], decay=store.decays(name))
    approx._bind(ordered.frozen())
    return approx, doc
