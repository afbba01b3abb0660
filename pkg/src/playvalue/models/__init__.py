"""Ball-carrier regression model families."""

from .base import (
    FAMILIES,
    FFNN,
    GBT,
    INTERCEPT,
    LASSO,
    LSTM,
    ConfigError,
    EmptyTrainingSet,
    ModelConfig,
    ModelError,
    NonFiniteLoss,
    SchemaMismatch,
    Unsupported,
)
from .ffnn import FeedForwardNetwork, ffnn_forward, ffnn_loss_grad
from .gbt import GradientBoostedTrees
from .intercept import InterceptModel, fit_intercept
from .lasso import LassoModel, NonConvergence, kkt_violation, lasso_path
from .lstm import LstmModel, lstm_forward, lstm_loss_grad
from .trained import (
    MODEL_FORMAT_VERSION,
    TrainedModel,
    feature_importance,
    fit_matrix,
    fit_model,
    load_model,
    predict,
    save_model,
)
