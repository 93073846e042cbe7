"""Compact Transformer forecasters (PatchTST, Informer, Autoformer) and the Deep
Koopformer, built on a small numpy reverse-mode autodiff kernel."""

from . import bench, blocks, dynsys, koopman, models, numkernel, probsparse, signals
from .models import ModelConfig, build, forward, predict

__all__ = ["bench", "blocks", "dynsys", "koopman", "models", "numkernel", "probsparse", "signals",
           "ModelConfig", "build", "forward", "predict"]
__version__ = "0.1.0"
