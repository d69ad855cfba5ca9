"""Self-distillation toy model. The ``augment`` submodule holds the augment() function itself."""

from .augment import MASK, TIMEWARP, AugmentationSpec, View, random_augment, time_warp
from .encoder import EncoderShape, backward, forward, init_params, reinit_top_layers
from .train import (
    AdamW,
    DistillConfig,
    DistillState,
    TrainingDiverged,
    cosine_lr,
    distill_loss,
    ema_update,
    sample_window,
    train_toy,
)
