from __future__ import annotations

import numpy as np
import pytest

from shared.src.oracle import GaussianMixture, single_gaussian
from shared.src.schedules import MSigmaRelation, Schedule, SigmaCurve
from shared.src.toy_data import mixture2d

RELATIONS = ("vp", "subvp", "subvp11", "subvp12", "ve")


def make_schedule(relation: str = "vp", curve: str = "cos") -> Schedule:
    return Schedule(SigmaCurve(curve), MSigmaRelation.from_name(relation))


@pytest.fixture
def vp() -> Schedule:
    return make_schedule("vp")


@pytest.fixture
def ve() -> Schedule:
    return make_schedule("ve")


@pytest.fixture
def unit_gaussian() -> GaussianMixture:
    return single_gaussian([0.0], [1.0])


@pytest.fixture
def two_class() -> GaussianMixture:
    return mixture2d()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
