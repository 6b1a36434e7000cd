from __future__ import annotations

import numpy as np
import pytest

from shared.src.errors import ConfigError
from shared.src.toy_data import BAND_FREQUENCIES, DRUMLET_DIM, ToyDataset, drumlet_bands, drumlets, mixture2d


def test_mixture2d_layout() -> None:
    gm = mixture2d()
    assert gm.dim == 2
    assert gm.classes == (0, 1)
    np.testing.assert_array_equal(gm.means, [[-3.0, -3.0], [3.0, 3.0]])


def test_drumlets_are_bounded_and_balanced() -> None:
    x, band = drumlets(3000, np.random.default_rng(0))
    assert x.shape == (3000, DRUMLET_DIM)
    assert np.all(np.abs(x) <= 1.0)
    np.testing.assert_array_equal(x[:, 0], 0.0)
    shares = np.bincount(band, minlength=3) / 3000
    np.testing.assert_allclose(shares, 1.0 / 3.0, atol=0.05)


def test_band_of_pure_tones() -> None:
    j = np.arange(DRUMLET_DIM)
    for band, freqs in enumerate(BAND_FREQUENCIES):
        for k in freqs:
            tone = np.sin(2.0 * np.pi * k * j / DRUMLET_DIM)
            assert drumlet_bands(tone)[0] == band


def test_generation_is_seeded() -> None:
    a = ToyDataset.generate("mixture2d", 100, 5)
    b = ToyDataset.generate("mixture2d", 100, 5)
    np.testing.assert_array_equal(a.x, b.x)
    assert a.dim == 2
    assert a.label_counts().sum() == 100


def test_unknown_dataset() -> None:
    with pytest.raises(ConfigError):
        ToyDataset.generate("faces", 10, 0)
