from .autodiff import Tensor, parameter
from .losses import (EdgeAggregator, hierarchy_kl, kl_gaussian_symmetric, kl_normal,
                     kl_sampled_symmetric, nll_loss, total_loss)
from .network import RecurrentNet
from .trainer import (TrainConfig, TrainedModel, TrainingError, forecast, harden_bottom_up,
                      load_model, predict_parameters, predictive_incoherence, save_model, train)
