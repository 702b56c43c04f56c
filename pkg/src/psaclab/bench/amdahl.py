"""Fitting throughput curves to Amdahl's law, X(N) = λN / (1 + σ(N−1)).

The fit starts from the closed-form solution of the linearised model
1/X = a/N + b (a = (1−σ)/λ, b = σ/λ) and then refines λ and σ with at most
50 Gauss–Newton steps on the untransformed residuals, σ kept in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_STEPS = 50
# below this σ is numerical noise around perfectly linear scaling
SIGMA_EPS = 1e-12


class AmdahlError(ValueError):
    pass


@dataclass(frozen=True)
class AmdahlFit:
    lam: float
    sigma: float
    residual: float

    @property
    def a_inf(self) -> float:
        return asymptote(self.lam, self.sigma)

    def predict(self, n: float) -> float:
        return amdahl(n, self.lam, self.sigma)


def amdahl(n, lam: float, sigma: float):
    n = np.asarray(n, dtype=float)
    return lam * n / (1.0 + sigma * (n - 1.0))


def asymptote(lam: float, sigma: float) -> float:
    """Throughput ceiling λ/σ; infinite for perfectly linear scaling."""
    return math.inf if sigma <= 0 else lam / sigma


def _clamp(sigma: float) -> float:
    return min(max(sigma, 0.0), 1.0)


def _initial(n: np.ndarray, x: np.ndarray) -> tuple[float, float]:
    design = np.column_stack([1.0 / n, np.ones_like(n)])
    (a, b), *_ = np.linalg.lstsq(design, 1.0 / x, rcond=None)
    if a + b > 0:
        lam, sigma = 1.0 / (a + b), _clamp(b / (a + b))
    else:
        lam, sigma = float(np.max(x / n)), 0.0
    return lam, sigma


def amdahl_fit(points: Iterable[tuple[float, float]]) -> AmdahlFit:
    pts = list(points)
    if not pts:
        raise AmdahlError("no points")
    n = np.array([p[0] for p in pts], dtype=float)
    x = np.array([p[1] for p in pts], dtype=float)
    if not (np.all(np.isfinite(n)) and np.all(np.isfinite(x))):
        raise AmdahlError("points must be finite")
    if np.any(n < 1) or np.any(x <= 0):
        raise AmdahlError("need N >= 1 and positive throughput")
    if len(np.unique(n)) < 2:
        raise AmdahlError("need at least two distinct N values")

    lam, sigma = _initial(n, x)
    for _ in range(MAX_STEPS):
        d = 1.0 + sigma * (n - 1.0)
        r = x - lam * n / d
        jac = np.column_stack([n / d, -lam * n * (n - 1.0) / d ** 2])
        step, *_ = np.linalg.lstsq(jac, r, rcond=None)
        new_lam, new_sigma = lam + step[0], _clamp(sigma + step[1])
        if not (math.isfinite(new_lam) and new_lam > 0):
            break
        done = abs(new_lam - lam) <= 1e-13 * lam and abs(new_sigma - sigma) <= 1e-15
        lam, sigma = float(new_lam), float(new_sigma)
        if done:
            break
    if sigma < SIGMA_EPS:
        sigma = 0.0
    residual = float(np.sum((x - amdahl(n, lam, sigma)) ** 2))
    if not (math.isfinite(lam) and math.isfinite(sigma) and math.isfinite(residual)):
        raise AmdahlError("fit did not converge to finite values")
    return AmdahlFit(lam, sigma, residual)


def synthetic_points(lam: float, sigma: float, ns: Sequence[int]) -> list[tuple[float, float]]:
    return [(float(n), float(amdahl(n, lam, sigma))) for n in ns]
