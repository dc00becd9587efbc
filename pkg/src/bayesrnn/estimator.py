"""Scikit-learn style estimator over the recurrent network.

``RecurrentSequenceClassifier`` follows the standard fit/predict
contract (``get_params``/``set_params`` via ``BaseEstimator``) so the
cells compose with pipelines, grid search and friends.  X is a list of
[T_i x I] float arrays and y a matching list of length-T_i integer
label vectors; predictions are per step.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .activations import softmax
from .errors import DataError
from .network import NetworkConfig, masked_accuracy, stack_logits
from .tasks import Dataset, batch_from_sequences
from .trainer import TrainConfig, train


def check_sequences(X, y=None):
    """Validate and coerce a list of sequences (and optional labels).

    Every sequence must be a finite 2-d float array with a consistent
    feature dimension; labels must be non-negative integer vectors of
    matching length.
    """
    if not isinstance(X, (list, tuple)) or len(X) == 0:
        raise DataError("X must be a non-empty list of [T_i x I] arrays")
    seqs = []
    for i, s in enumerate(X):
        arr = np.asarray(s, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise DataError(f"sequence {i} must be a non-empty [T x I] array, got {arr.shape}")
        if seqs and arr.shape[1] != seqs[0].shape[1]:
            raise DataError(f"sequence {i} has {arr.shape[1]} features, expected {seqs[0].shape[1]}")
        if not np.all(np.isfinite(arr)):
            raise DataError(f"sequence {i} contains non-finite values")
        seqs.append(arr)
    if y is None:
        return seqs, None
    if len(y) != len(seqs):
        raise DataError(f"got {len(seqs)} sequences but {len(y)} label vectors")
    labels = []
    for i, (s, lab) in enumerate(zip(seqs, y)):
        lv = np.asarray(lab)
        if lv.shape != (s.shape[0],):
            raise DataError(f"labels for sequence {i} must be [T], got {lv.shape}")
        if not np.issubdtype(lv.dtype, np.integer) or np.any(lv < 0):
            raise DataError(f"labels for sequence {i} must be non-negative integers")
        labels.append(lv.astype(np.int64))
    return seqs, labels


class RecurrentSequenceClassifier(ClassifierMixin, BaseEstimator):
    """Per-step sequence classifier backed by a gated recurrent network.

    Parameters
    ----------
    cell : str, default="UBRU"
        One of GRU, LSTM, BRU, UBRU, LBRU, MGU, LiGRU.
    hidden : int, default=16
        Units per layer (per direction).
    layers : int, default=1
    bidirectional : bool, default=False
    dropout : float, default=0.0
        Inverted dropout between layers during training.
    freeze_prior : bool, default=True
        Keep the BRU initial-state prior fixed at 0.5.
    lr, epochs, batch_size, lr_halving_threshold, val_fraction, seed :
        Training-loop controls; see ``TrainConfig``.

    Attributes
    ----------
    classes_ : ndarray of consecutive class ids seen in fit.
    network_ : the trained network.
    metrics_ : list of per-epoch train/val records.
    """

    def __init__(self, cell: str = "UBRU", hidden: int = 16, layers: int = 1,
                 bidirectional: bool = False, dropout: float = 0.0,
                 freeze_prior: bool = True, lr: float = 0.05, epochs: int = 24,
                 batch_size: int = 32, lr_halving_threshold: float = 0.001,
                 val_fraction: float = 0.1, seed: int = 0):
        self.cell = cell
        self.hidden = hidden
        self.layers = layers
        self.bidirectional = bidirectional
        self.dropout = dropout
        self.freeze_prior = freeze_prior
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_halving_threshold = lr_halving_threshold
        self.val_fraction = val_fraction
        self.seed = seed

    def fit(self, X, y):
        seqs, labels = check_sequences(X, y)
        num_classes = int(max(lv.max() for lv in labels)) + 1
        if num_classes < 2:
            raise DataError("need at least two classes")
        batch = batch_from_sequences(seqs, labels, seed=self.seed)
        if batch.num_sequences == 1:
            train_split = val_split = batch
        else:
            n_val = max(1, int(round(self.val_fraction * batch.num_sequences)))
            n_val = min(n_val, batch.num_sequences - 1)
            train_split = batch.select(np.arange(0, batch.num_sequences - n_val))
            val_split = batch.select(np.arange(batch.num_sequences - n_val,
                                               batch.num_sequences))
        dataset = Dataset(train_split, val_split, val_split,
                          {"num_classes": num_classes})
        net_config = NetworkConfig(cell=self.cell, layers=self.layers,
                                   hidden=self.hidden, input_dim=seqs[0].shape[1],
                                   num_classes=num_classes,
                                   bidirectional=self.bidirectional,
                                   dropout=self.dropout,
                                   freeze_prior=self.freeze_prior)
        train_config = TrainConfig(lr=self.lr, epochs=self.epochs,
                                   batch_size=self.batch_size,
                                   lr_halving_threshold=self.lr_halving_threshold,
                                   seed=self.seed)
        result = train(net_config, train_config, dataset)
        self.classes_ = np.arange(num_classes)
        self.network_ = result.network
        self.metrics_ = result.metrics
        return self

    def _require_fitted(self):
        if not hasattr(self, "network_"):
            raise NotFittedError("call fit before predicting")

    def predict_proba(self, X):
        """Per-step class probabilities; a list of [T_i x C] arrays."""
        self._require_fitted()
        seqs, _ = check_sequences(X)
        batch = batch_from_sequences(seqs, [np.zeros(s.shape[0], dtype=np.int64)
                                            for s in seqs])
        logits = stack_logits(self.network_.forward(batch.inputs, batch.mask))
        probs = softmax(logits)
        return [probs[:s.shape[0], b] for b, s in enumerate(seqs)]

    def predict(self, X):
        """Per-step class labels; a list of [T_i] integer arrays."""
        return [p.argmax(axis=1) for p in self.predict_proba(X)]

    def score(self, X, y):
        """Per-step accuracy over all sequences."""
        self._require_fitted()
        seqs, labels = check_sequences(X, y)
        batch = batch_from_sequences(seqs, labels)
        logits = stack_logits(self.network_.forward(batch.inputs, batch.mask))
        return masked_accuracy(logits, batch.targets, batch.mask)
