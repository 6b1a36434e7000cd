"""Noise-conditioned classifiers exposing input gradients of log p(y | x).

Two implementations share one interface: the exact Bayes posterior of a
Gaussian mixture, and a trained FiLM MLP with a softmax head.
"""
from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import Protocol, Sequence

import numpy as np
import pandas as pd
from scipy.special import log_softmax, softmax
from sklearn.metrics import accuracy_score

from .errors import DomainError, UnknownLabelError
from .kernel import Weighting, sample_training_batch
from .oracle import GaussianMixture, class_posteriors, posterior_grad, push_forward
from .samplers import GuidanceSpec
from .schedules import MSigmaRelation, Schedule
from .scorenet import DEFAULT_HIDDEN, LEARNING_RATE, AdamState, Architecture, FiLMMLP

logger = logging.getLogger(__name__)


class NoisyClassifier(Protocol):
    classes: tuple[int, ...]

    def posterior(self, x, sigma: float) -> np.ndarray: ...

    def input_grad(self, x, sigma: float, y: int) -> np.ndarray: ...


def _class_index(classes: tuple[int, ...], y: int) -> int:
    try:
        return classes.index(int(y))
    except ValueError:
        raise UnknownLabelError(f"label {y} not among classifier classes {classes}") from None


@dataclass(frozen=True)
class BayesClassifier:
    """Exact posterior of the mixture corrupted to level sigma."""

    gm: GaussianMixture
    relation: MSigmaRelation

    @property
    def classes(self) -> tuple[int, ...]:
        return self.gm.classes

    def _noised(self, sigma: float) -> GaussianMixture:
        return push_forward(self.gm, float(self.relation.m_of_sigma(sigma)), float(sigma))

    def posterior(self, x, sigma: float) -> np.ndarray:
        return class_posteriors(self._noised(sigma), x)

    def input_grad(self, x, sigma: float, y: int) -> np.ndarray:
        _class_index(self.classes, y)
        return posterior_grad(self._noised(sigma), x, y)[1]


class NoiseClassifierNet(FiLMMLP):
    kind = "classifier"

    @classmethod
    def create(
        cls,
        dim: int,
        classes: Sequence[int],
        rng: np.random.Generator,
        hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    ) -> "NoiseClassifierNet":
        classes = tuple(int(y) for y in classes)
        arch = Architecture(cls.kind, dim, len(classes), tuple(hidden), classes=classes)
        return cls.initialize(arch, rng)

    @property
    def classes(self) -> tuple[int, ...]:
        return self.arch.classes

    def posterior(self, x, sigma: float) -> np.ndarray:
        return softmax(self(x, sigma), axis=-1)

    def input_grad(self, x, sigma: float, y: int) -> np.ndarray:
        """Backprop of log softmax_y through the trunk; d log p_y / d logits = onehot - p."""
        idx = _class_index(self.classes, y)
        _, _, single = self._inputs(x, sigma)
        logits, cache = self.forward(x, sigma)
        grad_out = -softmax(logits, axis=1)
        grad_out[:, idx] += 1.0
        _, grad_x = self.backward(cache, grad_out)
        return grad_x[0] if single else grad_x


def clf_posterior(clf: NoisyClassifier, x, sigma: float) -> np.ndarray:
    return clf.posterior(x, sigma)


def clf_input_grad(clf: NoisyClassifier, x, sigma: float, y: int) -> np.ndarray:
    return clf.input_grad(x, sigma, y)


def clf_predict(clf: NoisyClassifier, x, sigma: float) -> np.ndarray:
    post = np.atleast_2d(clf.posterior(x, sigma))
    return np.asarray(clf.classes)[np.argmax(post, axis=1)]


def clf_accuracy(clf: NoisyClassifier, x, y, sigma: float) -> float:
    return float(accuracy_score(np.asarray(y).reshape(-1), clf_predict(clf, x, sigma)))


def guidance_for(clf: NoisyClassifier, labels: Sequence[int], weights: Sequence[float]) -> GuidanceSpec:
    for y in labels:
        _class_index(tuple(clf.classes), y)
    return GuidanceSpec(clf.input_grad, tuple(labels), tuple(weights))


def cross_entropy_and_grads(net: NoiseClassifierNet, x_t, sigma, label_idx) -> tuple[float, dict]:
    logits, cache = net.forward(x_t, sigma)
    n = logits.shape[0]
    logp = log_softmax(logits, axis=1)
    loss = float(-logp[np.arange(n), label_idx].mean())
    grad_out = np.exp(logp)
    grad_out[np.arange(n), label_idx] -= 1.0
    grads, _ = net.backward(cache, grad_out / n)
    return loss, grads


@dataclass
class ClassifierTrainResult:
    net: NoiseClassifierNet
    loss_curve: pd.DataFrame
    steps: int


def clf_train(
    x,
    labels,
    schedule: Schedule,
    epochs: int = 10,
    seed: int = 0,
    batch_size: int = 128,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    lr: float = LEARNING_RATE,
) -> ClassifierTrainResult:
    """Cross-entropy on (perturb(x0, t, eps), sigma(t), label) with t uniform on [t_min, 1]."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    labels = np.asarray(labels, dtype=int).reshape(-1)
    classes = tuple(int(y) for y in np.unique(labels))
    if len(classes) < 2:
        raise DomainError(f"classifier training needs at least 2 classes, got {classes}")
    if x.shape[0] != labels.shape[0]:
        raise DomainError("one label per sample required")
    label_idx = np.searchsorted(np.asarray(classes), labels)

    init_seq, data_seq = np.random.SeedSequence(seed).spawn(2)
    net = NoiseClassifierNet.create(x.shape[1], classes, np.random.default_rng(init_seq), hidden)
    data_rng = np.random.default_rng(data_seq)
    adam = AdamState.zeros_like(net.params, lr)

    rows = []
    step = 0
    for epoch in range(epochs):
        order = data_rng.permutation(x.shape[0])
        total = 0.0
        for start in range(0, x.shape[0], batch_size):
            idx = order[start : start + batch_size]
            batch = sample_training_batch(x[idx], schedule, Weighting.SIGMA2, data_rng)
            loss, grads = cross_entropy_and_grads(net, batch.x_t, batch.sigma, label_idx[idx])
            adam.apply(net.params, grads)
            total += loss * len(idx)
            step += 1
        rows.append({"epoch": epoch + 1, "step": step, "loss": total / x.shape[0]})
        logger.debug("classifier epoch %d cross-entropy %.6f", epoch + 1, rows[-1]["loss"])
    logger.info("trained classifier over %d classes in %d steps", len(classes), step)
    return ClassifierTrainResult(net, pd.DataFrame(rows, columns=["epoch", "step", "loss"]), step)
