"""Synthetic multi-modal heterogeneous networks with planted label signal.

Target nodes carry a label-bearing Gaussian cluster in one modality and a
label-independent "nuisance" cluster in the others.  The two kinds of
cluster live in orthogonal halves of each feature space, so a classifier
that sees every modality can tell which one is informative for a node,
while any single modality only helps for the nodes it was planted on.

Auxiliary nodes connect to targets of their own latent community with
probability ``homophily``, giving 2-hop target-target homophily; direct
target-target links follow the labels with the same probability.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, FeatureStore, MmhnGraph, ModalitySchema, split_dataset

PLANTING_MODES = ("cross-modal", "aligned", "none")


@dataclass(frozen=True)
class SyntheticSpec:
    n_target: int = 200
    target_type: str = "movie"
    aux_types: tuple[tuple[str, int], ...] = (("actor", 60), ("director", 40))
    n_categories: int = 2
    modality_names: tuple[str, ...] = ("text", "vision")
    modality_dims: tuple[int, ...] = (8, 8)
    planting: str = "cross-modal"
    missing: tuple[tuple[str, tuple[str, ...]], ...] = ()
    links_per_target: int = 3
    target_links: int = 1
    homophily: float = 0.8
    signal: float = 6.0
    nuisance: float = 1.5
    noise: float = 1.0
    ratios: tuple[float, float, float] = (0.2, 0.1, 0.7)

    def validate(self) -> None:
        if self.n_categories < 2:
            raise ValueError("need >= 2 categories")
        if not self.modality_dims or any(d < 2 for d in self.modality_dims):
            raise ValueError("every modality needs dim >= 2")
        if len(self.modality_dims) != len(self.modality_names):
            raise ValueError("modality names and dims differ in length")
        if self.planting not in PLANTING_MODES:
            raise ValueError(f"unknown planting mode {self.planting!r}")
        if self.n_target < 3 * self.n_categories:
            raise ValueError("too few target nodes for the category count")
        if any(n <= 0 for _, n in self.aux_types):
            raise ValueError("auxiliary node counts must be positive")
        if self.target_links < 0:
            raise ValueError("target_links must be non-negative")
        if not 0.0 <= self.homophily <= 1.0:
            raise ValueError("homophily must lie in [0, 1]")
        names = {t for t, _ in self.aux_types}
        for t, mods in self.missing:
            if t not in names:
                raise ValueError(f"missing-modality entry for unknown auxiliary type {t!r}")
            if set(mods) >= set(self.modality_names):
                raise ValueError(f"auxiliary type {t!r} would have no modality")


SIZES = {
    "tiny": SyntheticSpec(n_target=24, aux_types=(("actor", 8), ("director", 4)), links_per_target=2),
    "small": SyntheticSpec(),
    "medium": SyntheticSpec(n_target=400, aux_types=(("actor", 120), ("director", 80)), links_per_target=4),
    "large": SyntheticSpec(n_target=800, aux_types=(("actor", 240), ("director", 160)), links_per_target=6),
}


def _directions(rng: np.random.Generator, k: int, dim: int) -> np.ndarray:
    """``k`` unit vectors in R^dim: basis vectors when they fit, else random."""
    if k <= dim:
        return np.eye(dim)[:k]
    v = rng.standard_normal((k, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def generate_synthetic_mmhn(spec: SyntheticSpec, seed: int = 0) -> Dataset:
    spec.validate()
    rng = np.random.default_rng(seed)
    C, M = spec.n_categories, len(spec.modality_names)

    type_names = (spec.target_type,) + tuple(t for t, _ in spec.aux_types)
    counts = [spec.n_target] + [n for _, n in spec.aux_types]
    node_type_of = np.repeat(np.arange(len(counts)), counts)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    N = int(offsets[-1])

    labels = rng.integers(0, C, size=spec.n_target)
    # every category appears at least three times
    labels[: 3 * C] = np.repeat(np.arange(C), 3)
    labels = labels[rng.permutation(spec.n_target)]

    edge_names, edges = [], []
    for a, (aname, n_aux) in enumerate(spec.aux_types, start=1):
        fwd, back = len(edge_names), len(edge_names) + 1
        edge_names += [f"{spec.target_type}-{aname}", f"{aname}-{spec.target_type}"]
        community = np.arange(n_aux) % C
        members = [np.flatnonzero(community == c) for c in range(C)]
        for t in range(spec.n_target):
            chosen = set()
            for _ in range(spec.links_per_target):
                pool = members[labels[t]] if rng.random() < spec.homophily and members[labels[t]].size else np.arange(n_aux)
                chosen.add(int(rng.choice(pool)))
            for j in sorted(chosen):
                aux = int(offsets[a]) + j
                edges.append((t, aux, fwd))
                edges.append((aux, t, back))

    if spec.target_links:
        # target-target links give labeled (positive / negative) node pairs
        same = len(edge_names)
        edge_names.append(f"{spec.target_type}-{spec.target_type}")
        by_label = [np.flatnonzero(labels == c) for c in range(C)]
        pairs = set()
        for t in range(spec.n_target):
            for _ in range(spec.target_links):
                pool = by_label[labels[t]] if rng.random() < spec.homophily else np.arange(spec.n_target)
                u = int(rng.choice(pool))
                if u != t:
                    pairs.update({(t, u), (u, t)})
        edges += [(a, b, same) for a, b in sorted(pairs)]

    missing = {t: set(mods) for t, mods in spec.missing}
    native = {0: frozenset(range(M))}
    for a, (aname, _) in enumerate(spec.aux_types, start=1):
        native[a] = frozenset(m for m, name in enumerate(spec.modality_names) if name not in missing.get(aname, ()))

    if spec.planting == "cross-modal":
        informative = rng.permutation(np.arange(spec.n_target) % M)
    else:
        informative = np.full(spec.n_target, -1)

    features = []
    for m, dim in enumerate(spec.modality_dims):
        half = dim // 2
        label_dirs = np.zeros((C, dim))
        label_dirs[:, :half] = _directions(rng, C, half)
        nuisance_dirs = np.zeros((C, dim))
        nuisance_dirs[:, half:] = _directions(rng, C, dim - half)
        x = spec.noise * rng.standard_normal((N, dim))
        nuisance = rng.integers(0, C, size=N)
        x += spec.nuisance * nuisance_dirs[nuisance]
        tgt = slice(0, spec.n_target)
        if spec.planting == "aligned":
            x[tgt] = spec.noise * rng.standard_normal((spec.n_target, dim)) + spec.signal * label_dirs[labels]
        elif spec.planting == "cross-modal":
            sel = np.flatnonzero(informative == m)
            x[sel] = spec.noise * rng.standard_normal((sel.size, dim)) + spec.signal * label_dirs[labels[sel]]
        for o in range(len(counts)):
            if m not in native[o]:
                x[offsets[o]:offsets[o + 1]] = np.nan
        features.append(x)

    graph = MmhnGraph(node_type_of, np.array(edges, dtype=np.int64), type_names, tuple(edge_names))
    schema = ModalitySchema(spec.modality_names, native, spec.modality_dims, 0,
                            tuple(f"c{c}" for c in range(C)), len(type_names))
    store = FeatureStore(tuple(features), schema.presence_for(graph))
    label_map = {int(i): int(c) for i, c in enumerate(labels)}
    split = split_dataset(label_map, spec.ratios, seed)
    return Dataset(graph, schema, store, split)
