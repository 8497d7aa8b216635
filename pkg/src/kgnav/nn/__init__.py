"""Minimal differentiable core: layers with explicit backward, parameters, optimizers."""

from .layers import (
    NonFiniteError,
    check_finite,
    cross_entropy,
    dense,
    dense_backward,
    gcn_layer,
    gcn_layer_backward,
    log_softmax,
    lstm_step,
    lstm_step_backward,
    relu,
    relu_backward,
    set_checked,
    sigmoid,
    softmax,
    softmax_backward,
)
from .optim import OptimConfig, apply_gradients, clip_by_global_norm, global_norm, init_state
from .params import (
    CheckpointError,
    ParameterSet,
    checkpoint_bytes,
    glorot_uniform,
    load_checkpoint,
    parse_checkpoint,
    save_checkpoint,
)
