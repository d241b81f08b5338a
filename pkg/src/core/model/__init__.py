from .layers import Linear, TwoLayerMLP
from .params import (
    ModelParams,
    HeadsOutput,
    classifier_backward,
    encode_batch,
    encode_batch_backward,
    encoder_apply,
    heads_apply,
    init_params,
)
