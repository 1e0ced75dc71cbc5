from .layers import (
    AvgPool2,
    ChannelConcat,
    Conv2d,
    Dense,
    GroupNorm,
    Parameter,
    Sequential,
    ShapeMismatchError,
    SiLU,
    UpsampleNearest2,
)
from .optim import Adam, NonFiniteGradientError, NonFiniteLossError
from .rng import derive_rng, seeded_rng
from .weights import load_weights, save_weights
from .gradcheck import finite_difference_grad, max_relative_error

__all__ = [
    "Adam",
    "AvgPool2",
    "ChannelConcat",
    "Conv2d",
    "Dense",
    "GroupNorm",
    "NonFiniteGradientError",
    "NonFiniteLossError",
    "Parameter",
    "Sequential",
    "ShapeMismatchError",
    "SiLU",
    "UpsampleNearest2",
    "derive_rng",
    "finite_difference_grad",
    "load_weights",
    "max_relative_error",
    "save_weights",
    "seeded_rng",
]
