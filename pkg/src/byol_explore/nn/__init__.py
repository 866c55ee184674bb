from byol_explore.nn.autodiff import Tape, Var, backward, stop_gradient
from byol_explore.nn.gradcheck import finite_diff_grad, max_relative_error
from byol_explore.nn.layers import GRUSpec, MLPSpec, dense_forward, gru_step, one_hot
from byol_explore.nn.optim import AdamState, adam_update, ema_update
from byol_explore.nn.tree import ParameterTree, Scope

__all__ = [
    "AdamState",
    "GRUSpec",
    "MLPSpec",
    "ParameterTree",
    "Scope",
    "Tape",
    "Var",
    "adam_update",
    "backward",
    "dense_forward",
    "ema_update",
    "finite_diff_grad",
    "gru_step",
    "max_relative_error",
    "one_hot",
    "stop_gradient",
]
