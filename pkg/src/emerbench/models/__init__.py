from .adapter import AdapterConfig, adapter_run
from .base import EpochRecord, ModelRun, select_epoch
from .cca import CcaProjection, cca_fuse
from .softmax import LinearConfig, MlpConfig, predict, train_linear_softmax, train_mlp

__all__ = [
    "AdapterConfig", "CcaProjection", "EpochRecord", "LinearConfig", "MlpConfig", "ModelRun",
    "adapter_run", "cca_fuse", "predict", "select_epoch", "train_linear_softmax", "train_mlp",
]
