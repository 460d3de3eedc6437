from .config import VARIANTS, ModelConfig, RunConfig, TrainConfig, variant_config
from .network import ForwardResult, HgnnIma, LayerState, Structure, predict
from .params import ParameterSet

__all__ = ["VARIANTS", "ForwardResult", "HgnnIma", "LayerState", "ModelConfig", "ParameterSet", "RunConfig",
           "Structure", "TrainConfig", "predict", "variant_config"]
