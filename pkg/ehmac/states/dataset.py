"""
State/action records collected from offline trajectories.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import pandas as pd

from ..constants import CsvColumns
from ..utils.error_handling import ConfigError, DimensionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TrainingDataset:
    """
    NT records of (B, r, h, w) features and (P, rho) targets.

    ``path_seeds[k]`` and ``slots[k]`` (1-based) identify where record k
    came from.
    """

    features: np.ndarray
    targets: np.ndarray
    path_seeds: np.ndarray
    slots: np.ndarray

    def __post_init__(self):
        n = self.features.shape[0]
        if self.features.ndim != 2 or self.targets.ndim != 2:
            raise DimensionError("features and targets must be 2-D")
        if self.features.shape[1] % 4 or self.targets.shape[1] != self.features.shape[1] // 2:
            raise DimensionError(
                f"feature width {self.features.shape[1]} and target width "
                f"{self.targets.shape[1]} do not describe 4M inputs and 2M outputs"
            )
        if self.targets.shape[0] != n or self.path_seeds.shape != (n,) or self.slots.shape != (n,):
            raise DimensionError("dataset columns differ in length")

    @property
    def num_users(self) -> int:
        return self.features.shape[1] // 4

    def __len__(self) -> int:
        return int(self.features.shape[0])

    def subset(self, mask: np.ndarray) -> "TrainingDataset":
        return TrainingDataset(
            features=self.features[mask],
            targets=self.targets[mask],
            path_seeds=self.path_seeds[mask],
            slots=self.slots[mask],
        )

    def split_by_seed(
        self, validation_fraction: float, rng: np.random.Generator
    ) -> Tuple["TrainingDataset", "TrainingDataset"]:
        """
        Split into training and validation sets without sharing any path.

        At least one path goes to each side when there are two or more paths.
        """
        seeds = np.unique(self.path_seeds)
        shuffled = rng.permutation(seeds)
        n_val = int(round(validation_fraction * len(seeds)))
        if len(seeds) > 1:
            n_val = min(max(n_val, 1), len(seeds) - 1)
        else:
            n_val = 0
        validation_seeds = shuffled[:n_val]
        in_validation = np.isin(self.path_seeds, validation_seeds)
        return self.subset(~in_validation), self.subset(in_validation)

    def to_frame(self) -> pd.DataFrame:
        columns = CsvColumns.dataset(self.num_users)
        data = np.column_stack([self.features, self.targets])
        frame = pd.DataFrame(data, columns=columns[:-2])
        frame["path_seed"] = self.path_seeds.astype(np.int64)
        frame["slot"] = self.slots.astype(np.int64)
        return frame

    def save_csv(self, path: Union[str, Path]) -> Path:
        """Write the header row and one row per record."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        logger.info(f"Wrote {len(self)} dataset records to {path}")
        return path

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "TrainingDataset":
        value_columns = [c for c in frame.columns if c not in ("path_seed", "slot")]
        if len(value_columns) % 6 or "path_seed" not in frame or "slot" not in frame:
            raise ConfigError("dataset.columns", "unexpected dataset header")
        num_users = len(value_columns) // 6
        expected = CsvColumns.dataset(num_users)
        if list(frame.columns) != expected:
            raise ConfigError("dataset.columns", f"expected header {expected}")
        values = frame[expected[:-2]].to_numpy(dtype=float)
        return cls(
            features=values[:, : 4 * num_users],
            targets=values[:, 4 * num_users:],
            path_seeds=frame["path_seed"].to_numpy(dtype=np.int64),
            slots=frame["slot"].to_numpy(dtype=np.int64),
        )

    @classmethod
    def load_csv(cls, path: Union[str, Path]) -> "TrainingDataset":
        return cls.from_frame(pd.read_csv(path))

    @classmethod
    def concatenate(cls, parts) -> "TrainingDataset":
        parts = list(parts)
        if not parts:
            raise DimensionError("cannot concatenate an empty list of datasets")
        return cls(
            features=np.concatenate([p.features for p in parts]),
            targets=np.concatenate([p.targets for p in parts]),
            path_seeds=np.concatenate([p.path_seeds for p in parts]),
            slots=np.concatenate([p.slots for p in parts]),
        )
