"""Symbolic identification of ODE right-hand sides from noisy state/derivative data.

A network whose sublayers compute linear combinations, signed powers,
gated products and elementary operators is trained with sparsity-promoting
penalties, read back as a closed-form expression, and rounded at a sweep of
tolerances from which the lowest corrected-AIC model is kept.
"""

from .errors import (AllFoldsDivergedError, CorrectionUndefinedError, DivergedError,
                     DivideByZeroError, DomainError, NonFiniteError, ParseError, SchemaError,
                     SymodeError, ValidationError)
from .expr import normalize, parse_text, round_coefficients, same_model, to_text
from .loss import LossConfig
from .network import InitSpec, NetworkShape, extract_expression, init_weights, param_count, predict
from .select import select_model, tolerance_grid
from .systems import SYSTEMS, build_dataset, get_system, relative_rmse
from .train import PRESETS, TrainConfig, train_kfold

__version__ = "0.1.0"
