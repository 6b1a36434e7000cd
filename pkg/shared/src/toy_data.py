"""Toy datasets: a separable 2D mixture and 'drumlets' (decaying sinusoids)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ConfigError
from .oracle import GaussianMixture, sample_data

DATASET_KINDS = ("mixture2d", "drumlet")
DRUMLET_DIM = 64
BAND_NAMES = ("low", "mid", "high")
BAND_FREQUENCIES = ((1, 2), (3, 4, 5), (6, 7, 8))


def mixture2d(separation: float = 3.0) -> GaussianMixture:
    """Two unit-variance classes at +/-(separation, separation)."""
    s = float(separation)
    return GaussianMixture(
        weights=[0.5, 0.5],
        means=[[-s, -s], [s, s]],
        variances=[[1.0, 1.0], [1.0, 1.0]],
        labels=[0, 1],
    )


def drumlets(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """x_j = A exp(-tau j / 64) sin(2 pi k j / 64); the label is the band of k.

    Draw order: amplitudes, decays, bands, then the position of k in its band.
    """
    amp = rng.uniform(0.5, 1.0, size=n)
    tau = rng.uniform(4.0, 16.0, size=n)
    band = rng.integers(0, len(BAND_FREQUENCIES), size=n)
    pick = rng.random(n)
    sizes = np.array([len(b) for b in BAND_FREQUENCIES])
    lows = np.array([b[0] for b in BAND_FREQUENCIES])
    k = lows[band] + np.floor(pick * sizes[band]).astype(int)
    j = np.arange(DRUMLET_DIM)[None, :]
    x = amp[:, None] * np.exp(-tau[:, None] * j / DRUMLET_DIM) * np.sin(2.0 * np.pi * k[:, None] * j / DRUMLET_DIM)
    return x, band


def drumlet_bands(x) -> np.ndarray:
    """Band label from the dominant frequency bin among k = 1..8."""
    spectrum = np.abs(np.fft.rfft(np.atleast_2d(np.asarray(x, dtype=float)), axis=1))
    k = 1 + np.argmax(spectrum[:, 1:9], axis=1)
    band_of = np.zeros(9, dtype=int)
    for band, freqs in enumerate(BAND_FREQUENCIES):
        band_of[list(freqs)] = band
    return band_of[k]


@dataclass(frozen=True)
class ToyDataset:
    kind: str
    x: np.ndarray
    labels: np.ndarray

    @classmethod
    def generate(cls, kind: str, n: int, seed: int) -> "ToyDataset":
        rng = np.random.default_rng(seed)
        if kind == "mixture2d":
            x, labels = sample_data(mixture2d(), n, rng)
        elif kind == "drumlet":
            x, labels = drumlets(n, rng)
        else:
            raise ConfigError(f"unknown dataset {kind!r}; expected one of {DATASET_KINDS}")
        return cls(kind, x, labels)

    @property
    def dim(self) -> int:
        return int(self.x.shape[1])

    def label_counts(self) -> pd.Series:
        return pd.Series(self.labels).value_counts().sort_index()
