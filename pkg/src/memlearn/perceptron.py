"""Perceptron learning: a classic single-layer perceptron and the hashed
multi-table variant with saturating integer weights used for off-chip
prediction.

The hashed form keeps one weight table per program feature. A feature's
raw value is hashed to an index (multiply-shift with a fixed odd salt),
the indexed weights are summed into w_sigma, and the binary prediction is
``w_sigma >= tau_act``. Training happens on mispredictions and while
w_sigma lies inside the [t_neg, t_pos] window; confidently-correct sums
train nothing, which keeps weights from pinning at the rails.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .prng import MASK64, mix64


def feature_salt(feature_id: int) -> int:
    """Fixed odd 64-bit multiplier for a feature's hash. Documented so the
    indices are reproducible: salt = mix64(0x9E3779B97F4A7C15*(id+1)) | 1."""
    return (mix64((0x9E3779B97F4A7C15 * (feature_id + 1)) & MASK64)) | 1


def hash_feature(feature_id: int, raw_value: int, table_size: int) -> int:
    """Multiply-shift hash into [0, table_size); table_size a power of two."""
    if table_size < 1 or table_size & (table_size - 1):
        raise ValueError("table_size must be a power of two")
    if table_size == 1:
        return 0
    k = table_size.bit_length() - 1
    return ((raw_value * feature_salt(feature_id)) & MASK64) >> (64 - k)


class WeightTable:
    """One feature's weight array of saturating signed integers."""

    def __init__(self, feature_id: int, table_size: int, weight_bits: int = 5):
        if table_size < 1 or table_size & (table_size - 1):
            raise ValueError("table_size must be a power of two")
        if weight_bits < 2:
            raise ValueError("weight_bits must be >= 2")
        self.feature_id = feature_id
        self.size = table_size
        self.weight_bits = weight_bits
        self.w_min = -(1 << (weight_bits - 1))
        self.w_max = (1 << (weight_bits - 1)) - 1
        self.entries = np.zeros(table_size, dtype=np.int32)

    def index(self, raw_value: int) -> int:
        return hash_feature(self.feature_id, raw_value, self.size)

    def bump(self, idx: int, up: bool) -> None:
        w = int(self.entries[idx]) + (1 if up else -1)
        self.entries[idx] = min(self.w_max, max(self.w_min, w))

    def storage_bits(self) -> int:
        return self.size * self.weight_bits


@dataclass(frozen=True)
class PerceptronConfig:
    """Thresholds plus the (feature name, table size) list."""

    tau_act: int = -18
    t_pos: int = 12
    t_neg: int = -35
    features: tuple = field(default_factory=tuple)  # ((name, table_size), ...)
    weight_bits: int = 5

    def __post_init__(self):
        if self.t_neg >= self.t_pos:
            raise ValueError("t_neg must be below t_pos")
        if not self.features:
            raise ValueError("at least one feature table is required")
        w_max = (1 << (self.weight_bits - 1)) - 1
        bound = len(self.features) * (w_max + 1)
        if abs(self.tau_act) > bound:
            raise ValueError("tau_act outside the representable sum range")


@dataclass(frozen=True)
class Prediction:
    prediction: bool
    w_sigma: int
    indices: tuple


class HashedPerceptron:
    """Weight tables + thresholds; predict/train over raw feature values."""

    def __init__(self, config: PerceptronConfig):
        self.config = config
        self.tables = [
            WeightTable(fid, size, config.weight_bits)
            for fid, (_, size) in enumerate(config.features)
        ]

    def storage_bits(self) -> int:
        return sum(t.storage_bits() for t in self.tables)

    def predict(self, raw_values) -> Prediction:
        if len(raw_values) != len(self.tables):
            raise ValueError("one raw value per configured feature")
        indices = tuple(t.index(v) for t, v in zip(self.tables, raw_values))
        w_sigma = sum(int(t.entries[i]) for t, i in zip(self.tables, indices))
        return Prediction(w_sigma >= self.config.tau_act, w_sigma, indices)

    def train(self, indices, w_sigma: int, true_outcome: bool) -> bool:
        """Bump every indexed weight toward the outcome when the prediction
        implied by w_sigma was wrong, or while w_sigma still lies inside the
        [t_neg, t_pos] window. A confidently-correct sum trains nothing,
        which is what keeps weights off the rails. Returns whether training
        happened."""
        predicted = w_sigma >= self.config.tau_act
        in_window = self.config.t_neg <= w_sigma <= self.config.t_pos
        if predicted == true_outcome and not in_window:
            return False
        for t, i in zip(self.tables, indices):
            t.bump(i, up=true_outcome)
        return True


@dataclass
class SimplePerceptronFit:
    weights: np.ndarray  # bias first
    epochs: int
    train_error: float


def fit_simple_perceptron(samples, max_epochs: int = 200,
                          error_threshold: float = 0.0) -> SimplePerceptronFit:
    """Train a single-layer perceptron on (x-vector, 0/1 label) pairs.

    Output is 1 when bias + w.x > 0, else 0; on a wrong answer every weight
    moves by (label - output) * input. Separable data reaches zero training
    error; otherwise the best effort after max_epochs is returned.
    """
    if not samples:
        raise ValueError("empty dataset")
    n = len(samples[0][0])
    w = np.zeros(n + 1, dtype=np.float64)
    err = 1.0
    epochs = 0
    for epochs in range(1, max_epochs + 1):
        wrong = 0
        for x, y in samples:
            xv = np.asarray(x, dtype=np.float64)
            out = 1 if w[0] + float(np.dot(w[1:], xv)) > 0 else 0
            if out != y:
                wrong += 1
                w[0] += y - out
                w[1:] += (y - out) * xv
        err = wrong / len(samples)
        if err <= error_threshold:
            break
    return SimplePerceptronFit(weights=w, epochs=epochs, train_error=err)
