from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class ModelConfig:
    """Architecture, ablation switches and seed.

    Defaults give the full model with the published hyper-parameters
    (K=3, d=64, 8 heads, dropout 0.6).
    """

    layers: int = 3
    hidden_dim: int = 64
    heads: int = 8
    dropout_rate: float = 0.6
    fusion_dim: int = 64
    # ablation lattice
    cross_modal_unit: bool = True
    adapt: str = "on"  # "on" | "mean"
    influenced_modality_in_lambda: bool = False
    neighbor_in_lambda: bool = True
    alignment_modulation: bool = True
    attention_loss: bool = True
    individual_modality_loss: bool = True
    modalities_enabled: tuple[str, ...] | None = None
    node_type_dependent_params: bool = True
    edge_type_dependent_params: bool = True
    nonlinear_projections: bool = False
    # documented choices the source leaves open
    alignment_sign: str = "as_written"  # "as_written" | "negated"
    attention_scale: bool = True
    normalize_by_pairs: bool = False
    share_modality_classifiers: bool = False
    add_self_loops: bool = False
    reference_modality: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim % self.heads:
            raise ValueError(f"hidden_dim {self.hidden_dim} is not divisible by heads {self.heads}")
        if self.layers < 1 or self.hidden_dim < 1 or self.heads < 1 or self.fusion_dim < 1:
            raise ValueError("layers, hidden_dim, heads and fusion_dim must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.adapt not in ("on", "mean"):
            raise ValueError(f"adapt must be 'on' or 'mean', got {self.adapt!r}")
        if self.alignment_sign not in ("as_written", "negated"):
            raise ValueError(f"alignment_sign must be 'as_written' or 'negated', got {self.alignment_sign!r}")
        if self.modalities_enabled is not None:
            object.__setattr__(self, "modalities_enabled", tuple(self.modalities_enabled))
            if not self.modalities_enabled:
                raise ValueError("modalities_enabled must not be empty")

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.heads

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        if d["modalities_enabled"] is not None:
            d["modalities_enabled"] = list(d["modalities_enabled"])
        return d


# variant name -> overrides on the full model
VARIANTS: dict[str, dict[str, Any]] = {
    "full": {},
    "-cross": {"cross_modal_unit": False},
    "-adapt": {"adapt": "mean"},
    "+inf": {"influenced_modality_in_lambda": True},
    "-nei": {"neighbor_in_lambda": False},
    "-align": {"alignment_modulation": False},
    "-Latt": {"attention_loss": False},
    "-Lind": {"individual_modality_loss": False},
    "text-only": {"modalities_enabled": ("text",)},
    "vision-only": {"modalities_enabled": ("vision",)},
    "node-ind": {"node_type_dependent_params": False},
    "edge-ind": {"edge_type_dependent_params": False},
    "nonlinear": {"nonlinear_projections": True},
}


def variant_config(base: ModelConfig, name: str) -> ModelConfig:
    try:
        overrides = VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None
    return base.replace(**overrides)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    max_iters: int = 300
    patience: int = 50
    split_ratios: tuple[float, float, float] = (0.2, 0.1, 0.7)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["split_ratios"] = list(d["split_ratios"])
        return d


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict[str, Any]:
        return {**self.model.to_dict(), **self.train.to_dict()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        model_keys = {f.name for f in dataclasses.fields(ModelConfig)}
        train_keys = {f.name for f in dataclasses.fields(TrainConfig)}
        unknown = set(d) - model_keys - train_keys
        if unknown:
            raise KeyError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        m = {k: v for k, v in d.items() if k in model_keys}
        t = {k: v for k, v in d.items() if k in train_keys}
        if m.get("modalities_enabled") is not None:
            m["modalities_enabled"] = tuple(m["modalities_enabled"])
        if "split_ratios" in t:
            t["split_ratios"] = tuple(t["split_ratios"])
        return cls(ModelConfig(**m), TrainConfig(**t))
