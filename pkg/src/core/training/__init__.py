from .checkpoint import load_checkpoint, save_checkpoint
from .objective import LossWeights
from .optimizer import OptimState, sgd_step
from .step import LOSS_TERMS, StepResult, TrainingBatch, embed_batch, forward_backward, real_probability
