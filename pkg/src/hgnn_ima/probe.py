"""Empirical per-iteration cost of forward + backward on synthetic graphs."""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from .model import HgnnIma, ModelConfig
from .numerics import Tape, backward
from .synthetic import SyntheticSpec, generate_synthetic_mmhn


@dataclass(frozen=True)
class ProbeRow:
    nodes: int
    edges: int
    modalities: int
    seconds: float


def time_iteration(spec: SyntheticSpec, config: ModelConfig | None = None, repeats: int = 5,
                   warmup: int = 1, seed: int = 0) -> ProbeRow:
    """Median wall-clock of one training-mode forward + backward pass."""
    config = config or ModelConfig()
    ds = generate_synthetic_mmhn(spec, seed)
    model = HgnnIma.for_dataset(ds, config)
    inputs = model.prepare(ds.store)
    params = model.init_params(seed)
    ids = ds.split.train_ids
    y = ds.split.label_array(ids)
    times = []
    for it in range(warmup + repeats):
        rng = np.random.default_rng([seed, it])
        t0 = time.perf_counter()
        with Tape() as tape:
            loss = model.forward(params, inputs, "train", rng, ids, y).loss
            backward(tape, loss)
        if it >= warmup:
            times.append(time.perf_counter() - t0)
    return ProbeRow(ds.graph.node_count, ds.graph.edge_count, len(spec.modality_names), float(np.median(times)))


def complexity_probe(specs, config: ModelConfig | None = None, repeats: int = 5) -> list[ProbeRow]:
    return [time_iteration(s, config, repeats) for s in specs]


def fit_exponent(x, y) -> float:
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    if np.ptp(lx) == 0:
        raise ValueError("need at least two distinct x values")
    return float(np.polyfit(lx, ly, 1)[0])


def scaled_spec(base: SyntheticSpec, factor: float) -> SyntheticSpec:
    """Every node count multiplied by ``factor`` (edges follow, ~linearly)."""
    return dataclasses.replace(
        base, n_target=int(round(base.n_target * factor)),
        aux_types=tuple((t, int(round(n * factor))) for t, n in base.aux_types),
    )


def with_modalities(base: SyntheticSpec, count: int) -> SyntheticSpec:
    names = ("text", "vision", "audio", "meta", "graph")[:count]
    dim = base.modality_dims[0]
    return dataclasses.replace(base, modality_names=names, modality_dims=(dim,) * count)


def edge_scaling(base: SyntheticSpec, factors=(1.0, 2.0, 4.0), config=None, repeats: int = 5):
    rows = complexity_probe([scaled_spec(base, f) for f in factors], config, repeats)
    return rows, fit_exponent([r.edges for r in rows], [r.seconds for r in rows])


def modality_ratio(base: SyntheticSpec, m_from: int = 2, m_to: int = 3, config=None, repeats: int = 5):
    rows = complexity_probe([with_modalities(base, m_from), with_modalities(base, m_to)], config, repeats)
    return rows, rows[1].seconds / rows[0].seconds


def format_table(rows: list[ProbeRow]) -> str:
    lines = ["nodes\tedges\tmodalities\tseconds_per_iter"]
    lines += [f"{r.nodes}\t{r.edges}\t{r.modalities}\t{r.seconds:.6f}" for r in rows]
    return "\n".join(lines)
