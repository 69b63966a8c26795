"""
Small fully connected regression network implemented on numpy.

Hidden layers use the rectifier, the output layer is linear. Inputs are
normalized with per-feature mean and scale stored inside the model so a
saved artifact is self-contained.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..constants import FileFormats
from ..utils.error_handling import ConfigError, DimensionError

logger = logging.getLogger(__name__)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_derivative(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, 0.0)


@dataclass
class MlpModel:
    """
    Multilayer perceptron with ReLU hidden layers and identity output.

    ``weights[k]`` has shape (layer_sizes[k], layer_sizes[k + 1]); rows of
    the input batch are samples.
    """

    layer_sizes: Tuple[int, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    input_mean: np.ndarray
    input_scale: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise DimensionError("weights and biases do not match the layer sizes")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[k], self.layer_sizes[k + 1])
            if W.shape != expected or b.shape != (expected[1],):
                raise DimensionError(f"layer {k} has shape {W.shape}, expected {expected}")
        self.input_mean = np.asarray(self.input_mean, dtype=float)
        self.input_scale = np.asarray(self.input_scale, dtype=float)
        if np.any(self.input_scale <= 0):
            raise ConfigError("model.input_scale", "normalization scale must be positive")

    @classmethod
    def initialize(
        cls,
        layer_sizes: Sequence[int],
        rng: np.random.Generator,
        input_mean: Optional[np.ndarray] = None,
        input_scale: Optional[np.ndarray] = None,
    ) -> "MlpModel":
        """He-initialized weights, zero biases and identity normalization by default."""
        sizes = tuple(int(n) for n in layer_sizes)
        weights = [
            rng.normal(0.0, np.sqrt(2.0 / sizes[k]), size=(sizes[k], sizes[k + 1]))
            for k in range(len(sizes) - 1)
        ]
        biases = [np.zeros(sizes[k + 1]) for k in range(len(sizes) - 1)]
        return cls(
            layer_sizes=sizes,
            weights=weights,
            biases=biases,
            input_mean=np.zeros(sizes[0]) if input_mean is None else input_mean,
            input_scale=np.ones(sizes[0]) if input_scale is None else input_scale,
        )

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def normalize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.input_mean) / self.input_scale

    def forward_with_cache(self, X: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        """Forward pass returning the output and the pre-activations needed by ``backward``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.input_dim:
            raise DimensionError(f"input has {X.shape[1]} features, expected {self.input_dim}")
        activation = self.normalize(X)
        cache = [activation]
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = activation @ W + b
            cache.append(z)
            activation = z if k == last else relu(z)
        return activation, cache

    def forward(self, X: np.ndarray) -> np.ndarray:
        return self.forward_with_cache(X)[0]

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Output vector for a single feature vector."""
        return self.forward(np.asarray(features, dtype=float)[None, :])[0]

    def backward(
        self, cache: List[np.ndarray], d_output: np.ndarray
    ) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        """Gradients of a loss with output gradient ``d_output`` w.r.t. weights and biases."""
        grad_w: List[np.ndarray] = [np.empty(0)] * len(self.weights)
        grad_b: List[np.ndarray] = [np.empty(0)] * len(self.biases)
        delta = d_output
        for k in range(len(self.weights) - 1, -1, -1):
            z_prev = cache[k]
            activation_prev = z_prev if k == 0 else relu(z_prev)
            grad_w[k] = activation_prev.T @ delta
            grad_b[k] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.weights[k].T) * relu_derivative(z_prev)
        return grad_w, grad_b

    def loss_and_gradients(
        self, X: np.ndarray, Y: np.ndarray
    ) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
        """Mean squared error over all entries and its parameter gradients."""
        output, cache = self.forward_with_cache(X)
        residual = output - np.atleast_2d(Y)
        loss = float(np.mean(residual**2))
        d_output = 2.0 * residual / residual.size
        grad_w, grad_b = self.backward(cache, d_output)
        return loss, grad_w, grad_b

    def mse(self, X: np.ndarray, Y: np.ndarray) -> float:
        return float(np.mean((self.forward(X) - np.atleast_2d(Y)) ** 2))

    def get_parameters(self) -> np.ndarray:
        """All weights and biases flattened in layer order."""
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.extend([W.ravel(), b])
        return np.concatenate(parts)

    def set_parameters(self, flat: np.ndarray) -> None:
        offset = 0
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[k] = flat[offset:offset + W.size].reshape(W.shape).copy()
            offset += W.size
            self.biases[k] = flat[offset:offset + b.size].copy()
            offset += b.size

    def copy(self) -> "MlpModel":
        return MlpModel(
            layer_sizes=self.layer_sizes,
            weights=[W.copy() for W in self.weights],
            biases=[b.copy() for b in self.biases],
            input_mean=self.input_mean.copy(),
            input_scale=self.input_scale.copy(),
            metadata=dict(self.metadata),
        )

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.get_parameters())))

    def save(self, path: Union[str, Path]) -> Path:
        """
        Write the model as ``.npz``: format tag, JSON header, then arrays.

        Arrays are stored row-major as ``W0, b0, W1, b1, ...`` plus the
        normalization vectors.
        """
        path = Path(path)
        header = {
            "format": FileFormats.MLP_FORMAT,
            "layer_sizes": list(self.layer_sizes),
            "activation": "relu",
            "output_activation": "identity",
            "metadata": self.metadata,
        }
        arrays = {"header": np.array(json.dumps(header))}
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"W{k}"] = np.ascontiguousarray(W)
            arrays[f"b{k}"] = b
        arrays["input_mean"] = self.input_mean
        arrays["input_scale"] = self.input_scale
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as handle:
            np.savez(handle, **arrays)
        logger.info(f"Saved model {self.layer_sizes} to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MlpModel":
        """
        Read a model written by ``save``.

        Raises:
            ConfigError: If the file carries another format tag or non-finite weights
        """
        with np.load(Path(path), allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            if header.get("format") != FileFormats.MLP_FORMAT:
                raise ConfigError("model.format", f"unsupported model format {header.get('format')!r}")
            sizes = tuple(header["layer_sizes"])
            weights = [data[f"W{k}"].copy() for k in range(len(sizes) - 1)]
            biases = [data[f"b{k}"].copy() for k in range(len(sizes) - 1)]
            model = cls(
                layer_sizes=sizes,
                weights=weights,
                biases=biases,
                input_mean=data["input_mean"].copy(),
                input_scale=data["input_scale"].copy(),
                metadata=header.get("metadata", {}),
            )
        if not model.is_finite():
            raise ConfigError("model.parameters", f"{path} holds non-finite weights")
        return model
