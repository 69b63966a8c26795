"""
Imitation policy: regress offline-optimal actions from states, then repair.

Training uses minibatch SGD with momentum on the mean squared error and
keeps the parameters with the best validation loss. At inference the raw
output is clipped per user and the rates are scaled uniformly into the
rate region.
"""

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..constants import DefaultValues
from ..solvers.mlp import MlpModel
from ..solvers.rate_region import RateRegionInstance, max_feasible_scaling
from ..states.dataset import TrainingDataset
from ..states.system import Action, SystemParams, SystemState
from ..utils.error_handling import ConfigError, TrainingError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    """Hyper-parameters of ``train``."""

    hidden_layers: Tuple[int, ...] = DefaultValues.HIDDEN_LAYERS
    learning_rate: float = DefaultValues.LEARNING_RATE
    momentum: float = DefaultValues.MOMENTUM
    batch_size: int = DefaultValues.BATCH_SIZE
    epochs: int = DefaultValues.EPOCHS
    patience: int = DefaultValues.PATIENCE
    validation_fraction: float = DefaultValues.VALIDATION_FRACTION
    seed: int = DefaultValues.SEED

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("training.learning_rate", "must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("training.momentum", "must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1 or self.patience < 1:
            raise ConfigError("training", "batch_size, epochs and patience must be positive")
        if not 0 <= self.validation_fraction < 1:
            raise ConfigError("training.validation_fraction", "must lie in [0, 1)")
        if any(int(n) < 1 for n in self.hidden_layers):
            raise ConfigError("training.hidden_layers", "layer widths must be positive")


@dataclass
class TrainingHistory:
    train_loss: List[float] = field(default_factory=list)
    validation_loss: List[float] = field(default_factory=list)
    best_epoch: int = 0
    best_validation_loss: float = float("inf")
    stopped_early: bool = False


def _normalization(features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mean = features.mean(axis=0)
    scale = features.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return mean, scale


def train(dataset: TrainingDataset, config: Optional[TrainingConfig] = None) -> MlpModel:
    """
    Fit an MLP to the dataset's offline actions.

    Args:
        dataset: Non-empty offline dataset
        config: Hyper-parameters; defaults when omitted

    Returns:
        Model at the epoch with the lowest validation MSE; the loss history
        is stored in ``model.metadata["history"]``

    Raises:
        TrainingError: If a loss becomes non-finite
    """
    config = config or TrainingConfig()
    if len(dataset) == 0:
        raise ConfigError("training.dataset", "dataset is empty")
    rng = np.random.default_rng(config.seed)
    train_set, validation_set = dataset.split_by_seed(config.validation_fraction, rng)
    if len(validation_set) == 0:
        validation_set = train_set
    X, Y = train_set.features, train_set.targets
    mean, scale = _normalization(X)
    sizes = (X.shape[1], *config.hidden_layers, Y.shape[1])
    model = MlpModel.initialize(sizes, rng, input_mean=mean, input_scale=scale)
    velocity_w = [np.zeros_like(W) for W in model.weights]
    velocity_b = [np.zeros_like(b) for b in model.biases]

    history = TrainingHistory()
    best = model.copy()
    waited = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(X))
        for start in range(0, len(X), config.batch_size):
            batch = order[start:start + config.batch_size]
            loss, grad_w, grad_b = model.loss_and_gradients(X[batch], Y[batch])
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}",
                    diagnostics={"epoch": epoch, "batch_start": start, "loss": loss},
                )
            for k in range(len(model.weights)):
                velocity_w[k] = config.momentum * velocity_w[k] - config.learning_rate * grad_w[k]
                velocity_b[k] = config.momentum * velocity_b[k] - config.learning_rate * grad_b[k]
                model.weights[k] += velocity_w[k]
                model.biases[k] += velocity_b[k]

        train_loss = model.mse(X, Y)
        validation_loss = model.mse(validation_set.features, validation_set.targets)
        if not (np.isfinite(train_loss) and np.isfinite(validation_loss)):
            raise TrainingError(
                f"non-finite loss at epoch {epoch}",
                diagnostics={"epoch": epoch, "train_loss": train_loss, "validation_loss": validation_loss},
            )
        if not model.is_finite():
            raise TrainingError(
                f"non-finite parameters at epoch {epoch}",
                diagnostics={"epoch": epoch, "train_loss": train_loss},
            )
        history.train_loss.append(train_loss)
        history.validation_loss.append(validation_loss)
        if validation_loss < history.best_validation_loss:
            history.best_validation_loss = validation_loss
            history.best_epoch = epoch
            best = model.copy()
            waited = 0
        else:
            waited += 1
        if epoch == 1 or epoch % 20 == 0:
            logger.info(f"epoch {epoch}: train mse={train_loss:.5f} validation mse={validation_loss:.5f}")
        if waited >= config.patience:
            history.stopped_early = True
            logger.info(f"Early stop at epoch {epoch}; best epoch {history.best_epoch}")
            break

    best.metadata = {
        "history": asdict(history),
        "config": {**asdict(config), "hidden_layers": list(config.hidden_layers)},
        "train_records": len(train_set),
        "validation_records": len(validation_set),
    }
    logger.info(f"Training finished: best validation mse={history.best_validation_loss:.5f}")
    return best


def repair_action(state: SystemState, raw_power, raw_rate, params: SystemParams) -> Action:
    """
    Map a raw (P, rho) into the feasible set.

    P is clipped to [0, B]; rho to [0, min(r, g(h P))] per user; the rate
    vector is then scaled by the largest uniform factor that satisfies
    every subset constraint.
    """
    P = np.clip(np.asarray(raw_power, dtype=float), 0.0, state.B)
    ceiling = np.minimum(state.r, params.rate_fn(state.h * P))
    rho = np.clip(np.asarray(raw_rate, dtype=float), 0.0, ceiling)
    alpha = max_feasible_scaling(RateRegionInstance(h=state.h, P=P, g=params.rate_fn), rho)
    return Action(P=P, rho=alpha * rho)


def nn_act(state: SystemState, model: MlpModel, params: SystemParams) -> Action:
    """Forward pass followed by ``repair_action``."""
    raw = model.predict(state.as_vector())
    M = state.num_users
    return repair_action(state, raw[:M], raw[M:], params)


class TrainingService:
    """Owns the trained model of one configuration."""

    def __init__(self, params: SystemParams, config: Optional[TrainingConfig] = None):
        self.params = params
        self.config = config or TrainingConfig()
        self.model: Optional[MlpModel] = None

    def fit(self, dataset: TrainingDataset) -> MlpModel:
        self.model = train(dataset, self.config)
        return self.model

    def load(self, path: Union[str, Path]) -> MlpModel:
        model = MlpModel.load(path)
        if model.input_dim != 4 * self.params.num_users:
            raise ConfigError("model.layer_sizes",
                              f"model expects {model.input_dim} inputs, "
                              f"config has {self.params.num_users} users")
        self.model = model
        return model

    def save(self, path: Union[str, Path]) -> Path:
        if self.model is None:
            raise ConfigError("model", "no trained model to save")
        return self.model.save(path)

    def act(self, state: SystemState) -> Action:
        if self.model is None:
            raise ConfigError("model", "no trained model loaded")
        return nn_act(state, self.model, self.params)

    def summary(self) -> Dict[str, object]:
        if self.model is None:
            return {}
        history = self.model.metadata.get("history", {})
        return {
            "layer_sizes": list(self.model.layer_sizes),
            "best_epoch": history.get("best_epoch"),
            "best_validation_mse": history.get("best_validation_loss"),
        }
