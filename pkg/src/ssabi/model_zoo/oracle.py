from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OracleResult:
    """Reference posterior summary; ``kind`` is ``"analytic"`` or ``"mcmc"``."""

    kind: str
    mean: np.ndarray
    sd: np.ndarray
    samples: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` samples: exact draws for analytic results, resampled chain otherwise."""
        if self.kind == "analytic":
            return self.mean + self.sd * rng.standard_normal((n, len(self.mean)))
        if self.samples is None:
            raise ValueError("mcmc oracle has no samples")
        if n == len(self.samples):
            return self.samples
        idx = rng.choice(len(self.samples), size=n, replace=n > len(self.samples))
        return self.samples[idx]
