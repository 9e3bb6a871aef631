"""Posterior-quality metrics: Gaussian-kernel MMD, mean/sd bias, 1-D Wasserstein."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import pdist

from . import _kernels
from .errors import DataError, NumericalError

MEDIAN_SUBSAMPLE = 1000


def _as_samples(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(-1, 1) if a.ndim == 1 else a


def median_heuristic(A, B) -> float:
    """Median pairwise Euclidean distance over the pooled samples.

    Pools larger than ``MEDIAN_SUBSAMPLE`` points are thinned with an even
    stride first.
    """
    pooled = np.concatenate([_as_samples(A), _as_samples(B)], axis=0)
    if len(pooled) > MEDIAN_SUBSAMPLE:
        idx = np.linspace(0, len(pooled) - 1, MEDIAN_SUBSAMPLE).round().astype(int)
        pooled = pooled[idx]
    return float(np.median(pdist(pooled)))


def mmd_gaussian(A, B, bandwidth="median_heuristic") -> float:
    """Square root of the biased (V-statistic) MMD^2 with kernel
    ``exp(-|a-b|^2 / (2 h^2))``."""
    A, B = _as_samples(A), _as_samples(B)
    if len(A) < 1 or len(B) < 1 or A.shape[1] != B.shape[1]:
        raise DataError("mmd needs non-empty sample sets of equal dimension")
    # canonical argument order makes the result exactly symmetric
    if (len(A), A.tobytes()) > (len(B), B.tobytes()):
        A, B = B, A
    if bandwidth == "median_heuristic":
        h = median_heuristic(A, B)
        if h == 0.0:
            pooled = np.concatenate([A, B])
            if np.all(pooled == pooled[0]):
                return 0.0
            raise NumericalError("median heuristic bandwidth is zero")
    else:
        h = float(bandwidth)
        if h <= 0:
            raise DataError("bandwidth must be positive")
    kaa = _kernels.gaussian_kernel_mean(A, A, h)
    kbb = _kernels.gaussian_kernel_mean(B, B, h)
    kab = _kernels.gaussian_kernel_mean(A, B, h)
    return float(np.sqrt(max(kaa + kbb - 2.0 * kab, 0.0)))


def bias_report(approx_samples, oracle) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension ``|mean - oracle.mean|`` and ``|sd - oracle.sd|``."""
    s = _as_samples(approx_samples)
    if len(s) < 100:
        raise DataError("bias_report needs at least 100 approximate samples")
    mean_bias = np.abs(s.mean(axis=0) - np.asarray(oracle.mean))
    sd = np.where(np.ptp(s, axis=0) == 0, 0.0, s.std(axis=0, ddof=1))
    sd_bias = np.abs(sd - np.asarray(oracle.sd))
    return mean_bias, sd_bias


def wasserstein_1d(A, B) -> float:
    """Empirical W1 between equal-size scalar samples: mean |sorted(A) - sorted(B)|."""
    A = np.sort(np.asarray(A, dtype=np.float64).ravel())
    B = np.sort(np.asarray(B, dtype=np.float64).ravel())
    if len(A) != len(B):
        raise DataError(f"wasserstein_1d needs equal sizes, got {len(A)} and {len(B)}")
    return float(np.mean(np.abs(A - B)))


@dataclass
class MetricReport:
    mean_bias: list
    sd_bias: list
    mmd: float
    wasserstein: list
    n_samples: int
    bandwidth: str = "median_heuristic"
    sd_relative_bias: list | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def metric_report(approx_samples, oracle, oracle_samples) -> MetricReport:
    """All metrics from one approximate and one reference sample set of equal size."""
    a = _as_samples(approx_samples)
    b = _as_samples(oracle_samples)
    mean_bias, sd_bias = bias_report(a, oracle)
    w1 = [wasserstein_1d(a[:, d], b[:, d]) for d in range(a.shape[1])]
    return MetricReport(
        mean_bias=mean_bias.tolist(),
        sd_bias=sd_bias.tolist(),
        mmd=mmd_gaussian(a, b),
        wasserstein=w1,
        n_samples=len(a),
        sd_relative_bias=(sd_bias / np.asarray(oracle.sd)).tolist(),
    )
