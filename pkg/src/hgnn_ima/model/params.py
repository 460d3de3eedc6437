"""Learnable parameter blocks and their naming scheme.

Names follow ``<role>.<type-name>[.<modality>].<weight|bias>``:

=================  ============================================  ==================
role               type slot                                     shape
=================  ============================================  ==================
input              node type (``shared`` for node-ind)           (in_dim, d) / (d,)
key query          node type                                     (H, dh, dh) / (H, dh)
message output     node type                                     (H, dh, dh) / (H, dh)
node_att           edge type (``shared`` for edge-ind)           (H, dh, dh)
modal_att          edge type [+ influenced modality for +inf]    (H, dh, dh)
msg                edge type                                     (H, dh, dh)
fusion             ``hidden`` / ``score``                        (d, d_f) / (d_f,), (1,)
classifier         ``fused`` or ``modality.<m>``                 (d, C)
=================  ============================================  ==================

With ``nonlinear_projections`` every node-typed map gains a second layer
under the role ``<role>_mlp``.
"""
from __future__ import annotations

from typing import Iterator

import numpy as np

from ..numerics import Tensor, glorot_init, param_rng
from .config import ModelConfig

SHARED = "shared"
NODE_ROLES = ("key", "query", "message", "output")
EDGE_ROLES = ("node_att", "modal_att", "msg")


class ParameterSet(dict):
    """Ordered ``name -> Tensor`` mapping."""

    def copy(self) -> "ParameterSet":
        return ParameterSet({k: Tensor(v.data.copy(), requires_grad=True, name=k) for k, v in self.items()})

    def numel(self) -> int:
        return int(sum(v.data.size for v in self.values()))

    def blocks(self, prefix: str) -> Iterator[str]:
        return (k for k in self if k.startswith(prefix + ".") or f".{prefix}." in f".{k}.")

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.items()}

    def load(self, values: dict[str, np.ndarray]) -> None:
        for k, v in values.items():
            self[k].data = np.array(v, dtype=np.float64, copy=True)


def node_slots(node_type_names, config: ModelConfig) -> list[str]:
    return list(node_type_names) if config.node_type_dependent_params else [SHARED]


def edge_slots(edge_type_names, config: ModelConfig) -> list[str]:
    return list(edge_type_names) if config.edge_type_dependent_params else [SHARED]


def parameter_shapes(node_type_names, edge_type_names, modality_names, input_dims, n_categories,
                     config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, H, dh = config.hidden_dim, config.heads, config.head_dim
    shapes: dict[str, tuple[int, ...]] = {}
    for o in node_slots(node_type_names, config):
        for m, in_dim in zip(modality_names, input_dims):
            shapes[f"input.{o}.{m}.weight"] = (in_dim, d)
            shapes[f"input.{o}.{m}.bias"] = (d,)
            if config.nonlinear_projections:
                shapes[f"input_mlp.{o}.{m}.weight"] = (d, d)
                shapes[f"input_mlp.{o}.{m}.bias"] = (d,)
        for role in NODE_ROLES:
            shapes[f"{role}.{o}.weight"] = (H, dh, dh)
            shapes[f"{role}.{o}.bias"] = (H, dh)
            if config.nonlinear_projections:
                shapes[f"{role}_mlp.{o}.weight"] = (H, dh, dh)
                shapes[f"{role}_mlp.{o}.bias"] = (H, dh)
    for e in edge_slots(edge_type_names, config):
        shapes[f"node_att.{e}.weight"] = (H, dh, dh)
        if config.influenced_modality_in_lambda:
            for m in modality_names:
                shapes[f"modal_att.{e}.{m}.weight"] = (H, dh, dh)
        else:
            shapes[f"modal_att.{e}.weight"] = (H, dh, dh)
        shapes[f"msg.{e}.weight"] = (H, dh, dh)
    shapes["fusion.hidden.weight"] = (d, config.fusion_dim)
    shapes["fusion.score.weight"] = (config.fusion_dim,)
    shapes["fusion.score.bias"] = (1,)
    shapes["classifier.fused.weight"] = (d, n_categories)
    if not config.share_modality_classifiers:
        for m in modality_names:
            shapes[f"classifier.modality.{m}.weight"] = (d, n_categories)
    return shapes


def init_parameters(shapes: dict[str, tuple[int, ...]], seed: int) -> ParameterSet:
    """Glorot weights, zero biases; each block draws from its own
    (seed, name)-keyed stream."""
    params = ParameterSet()
    for name, shape in shapes.items():
        if name.endswith(".bias"):
            t = Tensor(np.zeros(shape), requires_grad=True)
        elif name == "fusion.score.weight":
            t = glorot_init(shape, param_rng(seed, name), fan_in=shape[0], fan_out=1)
        else:
            t = glorot_init(shape, param_rng(seed, name))
        t.name = name
        params[name] = t
    return params
