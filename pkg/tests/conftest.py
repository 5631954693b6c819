import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from topoinc.geometry import make_dataset
from topoinc.latent import standard_mixture
from topoinc.train import TrainConfig, train


@pytest.fixture(scope="session")
def moons():
    return make_dataset("two-moons")


@pytest.fixture(scope="session")
def circles():
    return make_dataset("circles")


@pytest.fixture(scope="session")
def spirals():
    return make_dataset("spirals")


@pytest.fixture(scope="session")
def segments():
    return make_dataset("segments")


def quick_train(dataset: str, class_aware: bool, iterations: int = 4000, seed: int = 11):
    m = make_dataset(dataset)
    n_z = m.n_classes if class_aware else max(1, m.n_classes - 1)
    cfg = TrainConfig(iterations=iterations, seed=seed, class_aware=class_aware,
                      batch=300 if dataset == "spirals" else 200)
    return train(m, cfg, standard_mixture(n_z), metadata={"dataset": dataset})


CACHE_DIR = Path(__file__).parent / ".model_cache"


def trained_model(dataset: str, class_aware: bool, seed: int, iterations: int = 30_000,
                  latent_rotation: float = 0.0):
    """Fully trained flow, cached on disk; checkpoints round-trip exactly,
    so cached models are bit-identical to freshly trained ones."""
    from topoinc.bench import train_variant
    from topoinc.dataio import load_model, save_model

    CACHE_DIR.mkdir(exist_ok=True)
    variant = "aware" if class_aware else "ignorant"
    rot = f"-rot{latent_rotation:.6f}" if latent_rotation else ""
    path = CACHE_DIR / f"{dataset}-{variant}-s{seed}-i{iterations}{rot}.json"
    if path.exists():
        return load_model(path)
    cfg = TrainConfig(iterations=iterations, seed=seed)
    model = train_variant(dataset, class_aware, cfg, latent_rotation=latent_rotation)
    save_model(path, model)
    return model


@pytest.fixture(scope="session")
def quick_moons_ignorant():
    """Short-trained class-ignorant two-moons flow shared across tests."""
    return quick_train("two-moons", class_aware=False)


@pytest.fixture(scope="session")
def quick_moons_aware():
    return quick_train("two-moons", class_aware=True)


@pytest.fixture(scope="session")
def full_moons_ignorant():
    return trained_model("two-moons", class_aware=False, seed=0)


@pytest.fixture(scope="session")
def full_moons_aware():
    return trained_model("two-moons", class_aware=True, seed=0)
