"""Labelled diagonal Gaussian mixtures with exact noisy marginals.

Every quantity a sampler or classifier needs (score, eps, class posteriors and
their input gradients) is available in closed form, so these mixtures serve
as ground truth for the learned models.
"""
from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Iterable

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import DimensionError, DomainError, UnknownLabelError
from .schedules import MSigmaRelation, Schedule, coeffs


@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        variances = np.atleast_2d(np.asarray(self.variances, dtype=float))
        labels = np.asarray(self.labels, dtype=int).reshape(-1)
        k = weights.shape[0]
        if k == 0:
            raise DomainError("mixture needs at least one component")
        if means.shape[0] != k or variances.shape != means.shape or labels.shape[0] != k:
            raise DimensionError(
                f"inconsistent mixture shapes: weights {weights.shape}, means {means.shape}, "
                f"variances {variances.shape}, labels {labels.shape}"
            )
        if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-12:
            raise DomainError(f"mixture weights must be >= 0 and sum to 1, got {weights.tolist()}")
        if np.any(variances <= 0.0):
            raise DomainError("mixture variances must be positive")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    @property
    def classes(self) -> tuple[int, ...]:
        return tuple(int(y) for y in dict.fromkeys(self.labels.tolist()))

    @classmethod
    def from_spec(cls, components: Iterable[dict]) -> "GaussianMixture":
        """Build from config records {weight, mean[], var[], class}."""
        components = list(components)
        try:
            return cls(
                weights=[float(c["weight"]) for c in components],
                means=[list(c["mean"]) for c in components],
                variances=[list(c["var"]) for c in components],
                labels=[int(c.get("class", 0)) for c in components],
            )
        except KeyError as exc:
            raise DomainError(f"mixture component missing key {exc.args[0]!r}") from None

    def to_spec(self) -> list[dict]:
        return [
            {
                "weight": float(w),
                "mean": [float(v) for v in mu],
                "var": [float(v) for v in var],
                "class": int(y),
            }
            for w, mu, var, y in zip(self.weights, self.means, self.variances, self.labels)
        ]


def single_gaussian(mean, var, label: int = 0) -> GaussianMixture:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    var = np.broadcast_to(np.asarray(var, dtype=float), mean.shape)
    return GaussianMixture([1.0], [mean], [var], [label])


def _as_batch(gm: GaussianMixture, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != gm.dim:
        raise DimensionError(f"point dimension {x.shape[-1]} does not match mixture dimension {gm.dim}")
    return x, single


def push_forward(gm: GaussianMixture, m: float, sigma: float) -> GaussianMixture:
    """Law of m X + sigma Z for X ~ gm."""
    return GaussianMixture(
        weights=gm.weights,
        means=m * gm.means,
        variances=m * m * gm.variances + sigma * sigma,
        labels=gm.labels,
    )


def marginal_at(gm: GaussianMixture, schedule: Schedule, t: float) -> GaussianMixture:
    c = coeffs(schedule, t)
    return push_forward(gm, c.m, c.sigma)


def component_log_densities(gm: GaussianMixture, x) -> np.ndarray:
    """(n, K) array of log w_k + log N(x; mu_k, diag v_k)."""
    x, _ = _as_batch(gm, x)
    diff = x[:, None, :] - gm.means[None, :, :]
    quad = np.sum(diff * diff / gm.variances[None, :, :], axis=-1)
    log_norm = np.sum(np.log(2.0 * math.pi * gm.variances), axis=-1)
    with np.errstate(divide="ignore"):
        log_w = np.log(gm.weights)
    return log_w[None, :] - 0.5 * (quad + log_norm[None, :])


def log_density(gm: GaussianMixture, x):
    x, single = _as_batch(gm, x)
    out = logsumexp(component_log_densities(gm, x), axis=1)
    return float(out[0]) if single else out


def score(gm: GaussianMixture, x) -> np.ndarray:
    """grad_x log p(x), responsibilities via a max-shifted softmax."""
    x, single = _as_batch(gm, x)
    resp = softmax(component_log_densities(gm, x), axis=1)
    comp = -(x[:, None, :] - gm.means[None, :, :]) / gm.variances[None, :, :]
    out = np.einsum("nk,nkd->nd", resp, comp)
    return out[0] if single else out


def eps_at_sigma(gm: GaussianMixture, relation: MSigmaRelation, x, sigma: float) -> np.ndarray:
    """-sigma * score of the noisy marginal at level sigma; zero at sigma = 0."""
    x = np.asarray(x, dtype=float)
    if sigma == 0.0:
        _as_batch(gm, x)
        return np.zeros_like(x)
    m = float(relation.m_of_sigma(sigma))
    return -sigma * score(push_forward(gm, m, sigma), x)


def eps_oracle(gm: GaussianMixture, x, schedule: Schedule, t: float) -> np.ndarray:
    c = coeffs(schedule, t)
    x = np.asarray(x, dtype=float)
    if c.sigma == 0.0:
        _as_batch(gm, x)
        return np.zeros_like(x)
    return -c.sigma * score(push_forward(gm, c.m, c.sigma), x)


@dataclass(frozen=True)
class OracleEps:
    """EpsFn backed by the exact mixture; m is recovered from sigma through the relation."""

    gm: GaussianMixture
    relation: MSigmaRelation

    def __call__(self, x, sigma: float) -> np.ndarray:
        return eps_at_sigma(self.gm, self.relation, x, float(sigma))


def restrict_to_label(gm: GaussianMixture, y: int) -> GaussianMixture:
    keep = gm.labels == int(y)
    if not np.any(keep):
        raise UnknownLabelError(f"label {y} not in mixture classes {gm.classes}")
    total = gm.weights[keep].sum()
    if total <= 0.0:
        raise DomainError(f"label {y} carries zero mixture weight")
    return GaussianMixture(
        weights=gm.weights[keep] / total,
        means=gm.means[keep],
        variances=gm.variances[keep],
        labels=gm.labels[keep],
    )


def class_log_posteriors(gm: GaussianMixture, x) -> np.ndarray:
    """(n, C) log p(y | x), columns ordered as gm.classes."""
    x, single = _as_batch(gm, x)
    logs = component_log_densities(gm, x)
    total = logsumexp(logs, axis=1)
    cols = [logsumexp(logs[:, gm.labels == y], axis=1) - total for y in gm.classes]
    out = np.stack(cols, axis=1)
    return out[0] if single else out


def class_posteriors(gm: GaussianMixture, x) -> np.ndarray:
    return np.exp(class_log_posteriors(gm, x))


def _class_index(gm: GaussianMixture, y: int) -> int:
    try:
        return gm.classes.index(int(y))
    except ValueError:
        raise UnknownLabelError(f"label {y} not in mixture classes {gm.classes}") from None


def posterior_grad(gm: GaussianMixture, x, y: int):
    """(log p(y|x), grad_x log p(y|x)) for an already noised mixture."""
    idx = _class_index(gm, y)
    x = np.asarray(x, dtype=float)
    log_post = class_log_posteriors(gm, x)[..., idx]
    grad = score(restrict_to_label(gm, y), x) - score(gm, x)
    return log_post, grad


def class_posterior_grad(gm: GaussianMixture, x, schedule: Schedule, t: float, y: int):
    return posterior_grad(marginal_at(gm, schedule, t), x, y)


def mixture_moments(gm: GaussianMixture) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-coordinate mean and variance."""
    w = gm.weights[:, None]
    mean = np.sum(w * gm.means, axis=0)
    second = np.sum(w * (gm.variances + gm.means ** 2), axis=0)
    return mean, second - mean ** 2


def sample_data(gm: GaussianMixture, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """n i.i.d. draws and their labels; component choice first, then noise."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    idx = rng.choice(len(gm.weights), size=n, p=gm.weights)
    z = rng.standard_normal((n, gm.dim))
    x = gm.means[idx] + np.sqrt(gm.variances[idx]) * z
    return x, gm.labels[idx].copy()
