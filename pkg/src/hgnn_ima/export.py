"""Attention-record export and the positive/negative pair analysis.

CSV columns, one row per (target, in-edge, head)::

    target, source, edge_type, head,
    alpha_<m> ... , lambda_<m> ... , beta, beta_bar, beta_tilde, same_label

``same_label`` is 1/0 when both endpoints are labeled and empty otherwise.
Floats are written with ``repr`` so the file reproduces the in-memory values
bit for bit.  Variants whose combined weights are per influenced modality
(``-cross``, ``+inf``) export the slice of the reference modality, and
``+inf`` exports the λ row of that modality.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import MmhnGraph
from .model import LayerState


@dataclass(frozen=True)
class PairAnalysis:
    """Share of positive pairs where β exceeds the reference-modality α, and
    of negative pairs where it falls below."""

    positive_pairs: int
    negative_pairs: int
    positive_larger: int
    negative_smaller: int

    @property
    def positive_pct(self) -> float:
        return 100.0 * self.positive_larger / self.positive_pairs if self.positive_pairs else float("nan")

    @property
    def negative_pct(self) -> float:
        return 100.0 * self.negative_smaller / self.negative_pairs if self.negative_pairs else float("nan")


def _check_layer(state: LayerState, layer: int) -> int:
    K = state.layers
    if not -K <= layer < K:
        raise IndexError(f"layer {layer} out of range for {K} layers")
    return layer % K


def _select(arr: np.ndarray, ref: int) -> np.ndarray:
    return arr[..., ref] if arr.ndim == 3 else arr


def attention_columns(state: LayerState, layer: int, ref: int = 0) -> dict[str, np.ndarray]:
    """All exported attention quantities as [E, H] arrays."""
    k = _check_layer(state, layer)
    cols = {}
    alpha = state.alpha[k]
    for m, name in enumerate(state.modality_names):
        cols[f"alpha_{name}"] = alpha[..., m]
    lam = state.lam[k]
    if lam is not None:
        lam = lam[:, :, ref, :] if lam.ndim == 4 else lam
        for m, name in enumerate(state.modality_names):
            cols[f"lambda_{name}"] = lam[..., m]
    cols["beta"] = _select(state.beta[k], ref)
    cols["beta_bar"] = state.beta_bar[k]
    cols["beta_tilde"] = _select(state.beta_tilde[k], ref)
    return cols


def same_label_flags(state: LayerState, labels: dict[int, int] | None) -> np.ndarray:
    """Per edge: 1 same label, 0 different, -1 unknown."""
    flags = np.full(state.src.shape[0], -1, dtype=np.int64)
    if not labels:
        return flags
    for e, (i, j) in enumerate(zip(state.dst.tolist(), state.src.tolist())):
        if i in labels and j in labels:
            flags[e] = int(labels[i] == labels[j])
    return flags


def export_attention(state: LayerState, graph: MmhnGraph, layer: int, out_path, labels=None,
                     reference_modality: int = 0) -> Path:
    cols = attention_columns(state, layer, reference_modality)
    flags = same_label_flags(state, labels)
    H = cols["beta"].shape[1]
    header = ["target", "source", "edge_type", "head", *cols, "same_label"]
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    values = list(cols.values())
    with out_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for e in range(state.src.shape[0]):
            base = [int(state.dst[e]), int(state.src[e]), graph.edge_type_names[int(state.etype[e])]]
            flag = "" if flags[e] < 0 else str(flags[e])
            for hd in range(H):
                w.writerow(base + [hd] + [repr(float(v[e, hd])) for v in values] + [flag])
    return out_path


def _analyse(beta: np.ndarray, alpha_ref: np.ndarray, same: np.ndarray) -> PairAnalysis:
    pos, neg = same == 1, same == 0
    return PairAnalysis(
        positive_pairs=int(pos.sum()),
        negative_pairs=int(neg.sum()),
        positive_larger=int(np.sum(beta[pos] > alpha_ref[pos])),
        negative_smaller=int(np.sum(beta[neg] < alpha_ref[neg])),
    )


def pair_analysis(state: LayerState, labels: dict[int, int], layer: int = -1,
                  reference_modality: int = 0) -> PairAnalysis:
    """Compare β with the reference modality's α over labeled (edge, head) pairs."""
    cols = attention_columns(state, layer, reference_modality)
    name = state.modality_names[reference_modality]
    flags = same_label_flags(state, labels)
    H = cols["beta"].shape[1]
    same = np.repeat(flags[:, None], H, axis=1)
    return _analyse(cols["beta"], cols[f"alpha_{name}"], same)


def pair_analysis_from_csv(path, reference_modality: str) -> PairAnalysis:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    beta = np.array([float(r["beta"]) for r in rows])
    alpha = np.array([float(r[f"alpha_{reference_modality}"]) for r in rows])
    same = np.array([int(r["same_label"]) if r["same_label"] else -1 for r in rows])
    return _analyse(beta, alpha, same)
