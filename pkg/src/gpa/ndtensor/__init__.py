"""Small dense-tensor core: reverse-mode autodiff with second-order support,
1-D convolution layers, spectral normalization and Adam."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .nn import (
    PowerIterState,
    conv1d,
    conv1d_transpose,
    conv_out_len,
    conv_transpose_out_len,
    linear,
    lstm_cell,
    power_iterate,
    spectral_normalize,
    uniform_init,
)
from .optim import AdamState, TrainingError, adam_step
from .tensor import (
    ShapeError,
    Tensor,
    add,
    as_tensor,
    bce_loss,
    bce_with_logits,
    concat,
    div,
    exp,
    get_default_dtype,
    global_norm,
    grad,
    grad_of_gradnorm,
    grad_of_gradnorm_fd,
    l2_norm,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    set_default_dtype,
    sigmoid,
    softplus,
    sqrt,
    sub,
    tabs,
    tanh,
    tsum,
)

__all__ = [name for name in dir() if not name.startswith("_")]
