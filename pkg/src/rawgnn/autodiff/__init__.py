from .gradcheck import GradCheckResult, NonDeterministicError, grad_check
from .params import (
    AdamState,
    MissingGradientError,
    ParamStore,
    adam_step,
    load_params,
    save_params,
)
from .tensor import (
    NonFiniteError,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    add,
    as_tensor,
    backward,
    clamp_min,
    concat,
    dropout,
    elu,
    exp,
    gather_rows,
    leaky_relu,
    log,
    matmul,
    mean,
    mul,
    neg,
    reshape,
    sigmoid,
    softmax,
    sub,
    sum,
    tanh,
    transpose,
)

__all__ = [
    "AdamState",
    "GradCheckResult",
    "MissingGradientError",
    "NonDeterministicError",
    "NonFiniteError",
    "ParamStore",
    "ShapeError",
    "Tape",
    "TapeError",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "backward",
    "clamp_min",
    "concat",
    "dropout",
    "elu",
    "exp",
    "gather_rows",
    "grad_check",
    "leaky_relu",
    "load_params",
    "log",
    "matmul",
    "mean",
    "mul",
    "neg",
    "reshape",
    "save_params",
    "sigmoid",
    "softmax",
    "sub",
    "sum",
    "tanh",
    "transpose",
]
