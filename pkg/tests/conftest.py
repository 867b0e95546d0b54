import numpy as np
import pytest

from mitarget.background import BackgroundModel, fit_background
from mitarget.bags import Bag, BagSet, Label
from mitarget.synth import SyntheticConfig, generate_scene, sample_bags


def naive_objective(mean, cov, signature, bags: BagSet, alpha=None, beta=None):
    """Direct transcription with an explicit inverse and Python loops."""
    inv = np.linalg.inv(cov)
    d = np.asarray(signature, float) - mean
    norm = np.sqrt(d @ inv @ d)

    def f(b):
        return (d @ inv @ (np.asarray(b) - mean)) / norm

    alpha = 1.0 / bags.n_positive if alpha is None else alpha
    total = alpha * sum(max(f(p.spectrum) for p in bag.pixels) for bag in bags.positive)
    if bags.n_negative:
        beta = 1.0 / bags.n_negative if beta is None else beta
        total += beta * sum(
            -sum(f(p.spectrum) for p in bag.pixels) / len(bag.pixels) for bag in bags.negative
        )
    return total


@pytest.fixture
def identity2():
    return BackgroundModel.from_moments([0.0, 0.0], np.eye(2))


@pytest.fixture
def paper_model():
    return BackgroundModel.from_moments([5.0, 5.0], [[1.0, 0.5], [0.5, 1.0]])


@pytest.fixture(scope="session")
def synthetic():
    cfg = SyntheticConfig(seed=0)
    scene, truth = generate_scene(cfg)
    bags = sample_bags(scene, truth, cfg)
    model = fit_background(scene.pixels)
    return cfg, scene, truth, bags, model


def bagset(pos, neg=()):
    return BagSet(
        tuple(Bag.from_array(Label.POSITIVE, p, f"p{i}") for i, p in enumerate(pos)),
        tuple(Bag.from_array(Label.NEGATIVE, n, f"n{i}") for i, n in enumerate(neg)),
    )
