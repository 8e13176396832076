import numpy as np
import pytest

from ftg.kg import KnowledgeGraph, synthetic_kg
from ftg.models import init_model
from ftg.training import TrainConfig, train


@pytest.fixture(scope="session")
def tiny_kg() -> KnowledgeGraph:
    """Hand-written 8-entity graph with a self-loop, an isolated entity, and
    two known-true tails for (0, 0)."""
    entities = [f"ent{i}" for i in range(8)]
    relations = ["likes", "knows"]
    train = [
        (0, 0, 1),
        (0, 0, 2),  # second true tail for (0, likes)
        (1, 1, 2),
        (2, 0, 3),
        (3, 1, 0),
        (4, 0, 4),  # self-loop
        (5, 1, 1),
        (0, 1, 5),
    ]
    valid = [(1, 0, 3)]
    test = [(2, 1, 0)]
    # entity 7 never appears in a triple; entity 6 appears only as a tail
    train.append((5, 0, 6))
    return KnowledgeGraph(entities, relations, train, valid, test)


@pytest.fixture(scope="session")
def small_kg() -> KnowledgeGraph:
    return synthetic_kg(3, 40, 4, 160)


@pytest.fixture(scope="session")
def small_model(small_kg):
    return train(small_kg, TrainConfig(d_s=16, steps=300, seed=3), "rotate")


@pytest.fixture(scope="session")
def random_model(small_kg):
    return init_model("rotate", small_kg.n_entities, small_kg.n_relations, 16, seed=9)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
