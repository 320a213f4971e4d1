"""Arrival streams for the n-th system.

The n-th system receives customers at rate ``n * lam``. Three kinds are
supported: Poisson, deterministic (equally spaced) and renewal with gamma
interarrival times of a given squared coefficient of variation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ArrivalProcess", "ArrivalError", "KINDS"]

KINDS = ("poisson", "deterministic", "renewal")


class ArrivalError(ValueError):
    pass


@dataclass(frozen=True)
class ArrivalProcess:
    """Arrival process with fluid rate ``lam``.

    ``scv`` applies to renewal arrivals only. ``equilibrium`` starts a
    renewal stream in equilibrium (first gap drawn from the stationary
    excess law of the interarrival distribution).
    """

    kind: str
    lam: float
    scv: float = 1.0
    equilibrium: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArrivalError(f"unknown arrival kind {self.kind!r}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ArrivalError("arrival rate lambda must be >= 0")
        if self.kind == "renewal" and not self.scv > 0:
            raise ArrivalError("renewal scv must be > 0")

    @property
    def sigma2(self) -> float:
        """Variance coefficient of the Brownian limit of the arrival count."""
        if self.kind == "poisson":
            return self.lam
        if self.kind == "deterministic":
            return 0.0
        return self.lam * self.scv

    def fluid_count(self, t):
        return self.lam * np.asarray(t, dtype=float)

    def sample_arrivals(self, n: int, horizon: float, rng: np.random.Generator) -> np.ndarray:
        """Sorted arrival times in ``[0, horizon]`` for the n-th system."""
        if n < 1:
            raise ArrivalError("scaling index n must be >= 1")
        if not horizon > 0:
            raise ArrivalError("horizon must be > 0")
        rate = n * self.lam
        if rate == 0:
            return np.empty(0)
        if self.kind == "poisson":
            count = rng.poisson(rate * horizon)
            return np.sort(rng.uniform(0.0, horizon, count))
        if self.kind == "deterministic":
            m = int(np.floor(rate * horizon * (1 + 1e-12)))
            return np.arange(1, m + 1) / rate
        shape = 1.0 / self.scv
        scale = self.scv / rate
        expect = rate * horizon
        chunk = int(expect + 6 * np.sqrt(expect * self.scv) + 16)
        gaps = rng.gamma(shape, scale, chunk)
        if self.equilibrium:
            # excess of gamma(k, theta): U * gamma(k + 1, theta)
            gaps[0] = rng.uniform() * rng.gamma(shape + 1.0, scale)
        times = np.cumsum(gaps)
        while times[-1] <= horizon:
            more = np.cumsum(rng.gamma(shape, scale, chunk)) + times[-1]
            times = np.concatenate([times, more])
        return times[times <= horizon]
