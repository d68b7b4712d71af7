from .tensor import Tensor
from . import ops
from .lstm import LstmWeights, bilstm_final, init_lstm, lstm_cell, lstm_param_count, lstm_run
from .init import seeded_init
from .optim import Adam, AdamState, adam_step
from .gradcheck import grad_check
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Tensor", "ops", "LstmWeights", "bilstm_final", "init_lstm", "lstm_cell",
    "lstm_param_count", "lstm_run", "seeded_init", "Adam", "AdamState",
    "adam_step", "grad_check", "load_checkpoint", "save_checkpoint",
]
