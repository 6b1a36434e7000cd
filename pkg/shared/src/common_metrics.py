"""Evaluation metrics shared by tests, the CLI and the case pipelines."""
from __future__ import annotations

from dataclasses import asdict, dataclass
import logging
from typing import Callable

import numpy as np
from sklearn.metrics import accuracy_score

from .errors import DomainError, SampleSizeError
from .oracle import GaussianMixture, class_posteriors
from .schedules import AffineLogSnrCurve, MSigmaRelation, coefficients_for

logger = logging.getLogger(__name__)


def empirical_moments(samples) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate mean and unbiased variance of an (n, d) sample."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.shape[0] < 2:
        raise SampleSizeError(f"need at least 2 samples, got {samples.shape[0]}")
    return samples.mean(axis=0), samples.var(axis=0, ddof=1)


def w2_gaussian(mean1, var1, mean2, var2) -> float:
    """Wasserstein-2 distance between diagonal Gaussians."""
    mean1, var1 = np.asarray(mean1, dtype=float), np.asarray(var1, dtype=float)
    mean2, var2 = np.asarray(mean2, dtype=float), np.asarray(var2, dtype=float)
    if np.any(var1 <= 0.0) or np.any(var2 <= 0.0):
        raise DomainError("w2_gaussian needs strictly positive variances")
    shift = np.sum((mean1 - mean2) ** 2)
    spread = np.sum((np.sqrt(var1) - np.sqrt(var2)) ** 2)
    return float(np.sqrt(shift + spread))


def w2_to_reference(samples, mean, var) -> float:
    m, v = empirical_moments(samples)
    return w2_gaussian(m, v, mean, var)


def finite_diff_grad(fn: Callable[[np.ndarray], float], x, step: float = 1e-5) -> np.ndarray:
    if step <= 0.0:
        raise DomainError(f"finite difference step must be positive, got {step}")
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up = x.copy()
        down = x.copy()
        up[idx] += step
        down[idx] -= step
        grad[idx] = (fn(up) - fn(down)) / (2.0 * step)
    return grad


def relative_l2(a, b) -> float:
    """||a - b|| / ||b||, or ||a|| when the reference is zero."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ref = np.linalg.norm(b)
    diff = np.linalg.norm(a - b)
    return float(diff / ref) if ref > 0.0 else float(diff)


def purity(predicted, target: int) -> float:
    predicted = np.asarray(predicted).reshape(-1)
    return float(accuracy_score(np.full(predicted.shape, target), predicted))


def bayes_labels(gm: GaussianMixture, samples) -> np.ndarray:
    post = np.atleast_2d(class_posteriors(gm, samples))
    return np.asarray(gm.classes)[np.argmax(post, axis=1)]


def bayes_purity(gm: GaussianMixture, samples, target: int) -> float:
    """Share of samples the clean-data Bayes classifier assigns to `target`."""
    return purity(bayes_labels(gm, samples), target)


def block_energies(samples, blocks: int = 8) -> np.ndarray:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n, d = samples.shape
    if d % blocks:
        raise DomainError(f"dimension {d} is not divisible into {blocks} blocks")
    return np.sum(samples.reshape(n, blocks, d // blocks) ** 2, axis=-1)


def envelope_violation_rate(samples, blocks: int = 8) -> float:
    """Mean share of adjacent block pairs whose energy grows instead of decaying."""
    energy = block_energies(samples, blocks)
    rises = np.diff(energy, axis=1) > 0.0
    return float(rises.mean())


@dataclass(frozen=True)
class AffineLogSnrReport:
    a: float
    b: float
    max_residual: float
    degenerate: bool
    passed: bool


def check_affine_logsnr(
    a: float,
    b: float,
    relation: MSigmaRelation | None = None,
    grid_size: int = 100,
    tolerance: float = 1e-9,
) -> AffineLogSnrReport:
    """Verify g^2 = a sigma^2 on the curve whose log(sigma^2/m^2) is a t + b."""
    if a < 0.0:
        raise DomainError(f"log SNR slope must be >= 0, got {a}")
    relation = relation or MSigmaRelation.from_name("vp")
    curve = AffineLogSnrCurve(a, b, relation)
    t = np.linspace(0.0, 1.0, grid_size)
    c = coefficients_for(curve, relation, t)
    residual = float(np.max(np.abs(c.g ** 2 - a * c.sigma ** 2)))
    degenerate = a == 0.0
    if degenerate:
        logger.warning("affine log SNR with a=0: SNR is constant and g vanishes")
    return AffineLogSnrReport(a, b, residual, degenerate, residual <= tolerance)


@dataclass(frozen=True)
class MetricRecord:
    """One acceptance statistic. `upper` tolerances pass when value <= tolerance."""

    name: str
    value: float
    tolerance: float
    upper: bool = True

    @property
    def passed(self) -> bool:
        return self.value <= self.tolerance if self.upper else self.value >= self.tolerance

    def to_dict(self) -> dict:
        out = asdict(self)
        out["value"] = float(self.value)
        out["pass"] = bool(self.passed)
        del out["upper"]
        return out


def records_to_dict(records: list[MetricRecord]) -> list[dict]:
    return [r.to_dict() for r in records]
