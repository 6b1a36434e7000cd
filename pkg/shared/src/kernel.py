"""Gaussian perturbation kernel and denoising score matching tuples."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DimensionError, DomainError
from .schedules import Schedule, evaluate


class Weighting(str, Enum):
    """Loss weighting lambda(t); the stored weight is sqrt(lambda) / sigma."""

    SIGMA2 = "sigma2"
    G2 = "g2"
    UNIT = "unit"

    @classmethod
    def parse(cls, value: "str | Weighting") -> "Weighting":
        try:
            return cls(value)
        except ValueError:
            choices = [w.value for w in cls]
            raise DomainError(f"unknown weighting {value!r}; expected one of {choices}") from None


def loss_weight(schedule: Schedule, weighting: Weighting, t) -> np.ndarray:
    c = evaluate(schedule, t)
    if weighting is Weighting.SIGMA2:
        return np.ones_like(c.sigma)
    if weighting is Weighting.UNIT:
        return 1.0 / c.sigma
    return c.g / c.sigma


def perturb(x0, t, eps, schedule: Schedule) -> np.ndarray:
    """m(t) x0 + sigma(t) eps. `t` may be a scalar or one time per row of x0."""
    x0 = np.asarray(x0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x0.shape != eps.shape:
        raise DimensionError(f"x0 shape {x0.shape} does not match eps shape {eps.shape}")
    c = evaluate(schedule, t)
    m, sigma = np.asarray(c.m), np.asarray(c.sigma)
    if m.ndim == 1 and x0.ndim > 1:
        m = m.reshape((-1,) + (1,) * (x0.ndim - 1))
        sigma = sigma.reshape(m.shape)
    return m * x0 + sigma * eps


@dataclass(frozen=True)
class TrainingTuple:
    x_t: np.ndarray
    sigma: float
    eps: np.ndarray
    weight: float
    t: float


@dataclass(frozen=True)
class TrainingBatch:
    """Stacked tuples: x_t and eps are (n, d); sigma, weight and t are (n,)."""

    x_t: np.ndarray
    sigma: np.ndarray
    eps: np.ndarray
    weight: np.ndarray
    t: np.ndarray

    def __len__(self) -> int:
        return int(self.x_t.shape[0])

    def __getitem__(self, i: int) -> TrainingTuple:
        return TrainingTuple(
            self.x_t[i], float(self.sigma[i]), self.eps[i], float(self.weight[i]), float(self.t[i])
        )

    @classmethod
    def from_tuples(cls, tuples: list[TrainingTuple]) -> "TrainingBatch":
        return cls(
            x_t=np.stack([tp.x_t for tp in tuples]),
            sigma=np.array([tp.sigma for tp in tuples]),
            eps=np.stack([tp.eps for tp in tuples]),
            weight=np.array([tp.weight for tp in tuples]),
            t=np.array([tp.t for tp in tuples]),
        )


def sample_training_batch(
    x0, schedule: Schedule, weighting: Weighting | str, rng: np.random.Generator
) -> TrainingBatch:
    """One tuple per row of x0, with t uniform on [t_min, 1].

    Draw order: all times first, then all noise.
    """
    weighting = Weighting.parse(weighting)
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    t = rng.uniform(schedule.t_min, 1.0, size=x0.shape[0])
    eps = rng.standard_normal(x0.shape)
    c = evaluate(schedule, t)
    return TrainingBatch(
        x_t=perturb(x0, t, eps, schedule),
        sigma=np.asarray(c.sigma),
        eps=eps,
        weight=loss_weight(schedule, weighting, t),
        t=t,
    )


def sample_training_tuple(
    x0, schedule: Schedule, weighting: Weighting | str, rng: np.random.Generator
) -> TrainingTuple:
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1:
        raise DimensionError(f"expected a single vector, got shape {x0.shape}")
    return sample_training_batch(x0[None, :], schedule, weighting, rng)[0]
