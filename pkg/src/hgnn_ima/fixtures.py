"""Small hand-built datasets shared by the CLI self-checks and the tests."""
from __future__ import annotations

import dataclasses

import numpy as np

from .data import Dataset, DatasetSplit, FeatureStore, MmhnGraph, ModalitySchema
from .model import ModelConfig
from .synthetic import SIZES, generate_synthetic_mmhn

GRADCHECK_CONFIG = ModelConfig(layers=2, hidden_dim=8, heads=2, dropout_rate=0.0, fusion_dim=8, seed=3)
# Four-point stencil: several attention gradients are ~1e-8, below the
# round-off floor of a two-point stencil with a small step.
GRADCHECK_STEP = 1e-3
GRADCHECK_ORDER = 4
GRADCHECK_COORDS = 400


def twelve_node_fixture(seed: int = 0) -> Dataset:
    """12 nodes of 3 types (6 movies, 3 actors, 3 directors), 2 modalities.

    Directors have no native vision features, so the attention loss is
    active.  Movies carry labels from 2 categories.
    """
    rng = np.random.default_rng(seed)
    node_type_of = np.array([0] * 6 + [1] * 3 + [2] * 3)
    pairs = [(0, 6), (1, 6), (1, 7), (2, 7), (3, 8), (4, 8), (5, 6),
             (0, 9), (2, 9), (3, 10), (4, 11), (5, 11), (1, 10)]
    edges = []
    for movie, other in pairs:
        fwd = 0 if other < 9 else 2
        edges += [(movie, other, fwd), (other, movie, fwd + 1)]
    edges += [(0, 1, 4), (1, 0, 4), (2, 3, 4), (3, 2, 4)]
    graph = MmhnGraph(node_type_of, np.array(edges), ("movie", "actor", "director"),
                      ("movie-actor", "actor-movie", "movie-director", "director-movie", "movie-movie"))
    schema = ModalitySchema(("text", "vision"), {0: {0, 1}, 1: {0, 1}, 2: {0}}, (4, 3), 0, ("c0", "c1"), 3)
    text = rng.standard_normal((12, 4))
    vision = rng.standard_normal((12, 3))
    vision[9:] = np.nan
    store = FeatureStore((text, vision), schema.presence_for(graph))
    labels = {0: 0, 1: 1, 2: 0, 3: 1, 4: 0, 5: 1}
    split = DatasetSplit([0, 1, 2, 3], [4], [5], labels)
    return Dataset(graph, schema, store, split)


def overfit_fixture(seed: int = 0) -> Dataset:
    """20 labeled target nodes, every one of them in the training split."""
    spec = dataclasses.replace(SIZES["tiny"], n_target=20)
    ds = generate_synthetic_mmhn(spec, seed)
    labels = ds.split.labels
    return dataclasses.replace(ds, split=DatasetSplit(sorted(labels), [], [], labels))
