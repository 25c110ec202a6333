"""Synthetic tariff profiles built around a mean profile."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TariffSynthesisSpec:
    mean_profile: np.ndarray  # EUR/kWh per interval
    relative_std: float = 0.10
    variance_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        m = np.array(self.mean_profile, dtype=float)
        if m.ndim != 1 or m.size == 0 or not np.all(np.isfinite(m)):
            raise ValueError("mean_profile must be a non-empty finite vector")
        if self.relative_std < 0 or self.variance_scale < 0:
            raise ValueError("relative_std and variance_scale must be >= 0")
        m.setflags(write=False)
        object.__setattr__(self, "mean_profile", m)


def amplify_variance(mean_profile, scale: float) -> np.ndarray:
    """Stretch the profile about its own time average.

    ``scale = 0`` returns the profile unchanged; ``scale = k`` multiplies
    every deviation from the average by ``1 + k``.  Negative prices are
    clipped to zero.
    """
    if scale < 0:
        raise ValueError("variance scale must be >= 0")
    m = np.asarray(mean_profile, dtype=float)
    return np.maximum(m + scale * (m - m.mean()), 0.0)


def gaussian_profile(spec: TariffSynthesisSpec, index: int = 0) -> np.ndarray:
    """One day's tariff: each interval ``N(mean, (relative_std * mean)^2)``
    around the variance-scaled profile, clipped at zero.  Deterministic in
    ``(seed, index)``."""
    base = amplify_variance(spec.mean_profile, spec.variance_scale)
    rng = np.random.default_rng([int(spec.seed), int(index)])
    noise = rng.standard_normal(base.size)
    return np.maximum(base * (1.0 + spec.relative_std * noise), 0.0)
