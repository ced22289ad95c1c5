"""Reference logit classifiers trained by single-step SGD on cross-entropy.

Both estimators follow the scikit-learn API (``partial_fit`` performs exactly
one SGD step on the mean cross-entropy of the given batch) and keep their
parameters as plain float64 arrays with closed-form gradients, so analytic
backprop can be checked against finite differences.
"""

import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .scoring import log_sum_exp
from .validation import check_finite_vector

MODEL_KINDS = ("logreg", "mlp")

_MAGIC = b"UQRC"
_KIND_CODES = {"logreg": 1, "mlp": 2}


class TrainingDivergenceError(RuntimeError):
    """Raised when a gradient turns non-finite; parameters are left untouched."""


@dataclass(frozen=True)
class TrainStepReport:
    """Diagnostics of one SGD step."""

    loss_before: float
    grad_norm: float
    step_count: int


def cross_entropy(z, y: int) -> float:
    """LSE(z) - z_y, the numerically stable softmax cross-entropy."""
    z = check_finite_vector(z, "logits")
    if not 0 <= int(y) < z.size:
        raise ValueError(f"label {y} out of range [0, {z.size})")
    return log_sum_exp(z) - float(z[int(y)])


def _row_lse(Z: np.ndarray) -> np.ndarray:
    m = Z.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(Z - m).sum(axis=1, keepdims=True)))[:, 0]


class _OnlineLogitClassifier(BaseEstimator, ClassifierMixin):
    """Shared machinery: validation, prediction, one-step SGD, flat params."""

    def _check_fitted(self):
        if not hasattr(self, "classes_"):
            raise NotFittedError(
                f"{type(self).__name__} is not initialized; call fit, partial_fit "
                "with classes, or initialize"
            )

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-dimensional, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite values")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, model expects {self.n_features_in_}"
            )
        return X

    def _check_y(self, y, n: int) -> np.ndarray:
        y = np.asarray(y)
        if y.shape != (n,):
            raise ValueError("y must have one label per row of X")
        if not np.issubdtype(y.dtype, np.integer):
            raise ValueError("y must contain integer class indices")
        if y.size and (y.min() < 0 or y.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        return y.astype(np.int64)

    @property
    def class_count(self) -> int:
        self._check_fitted()
        return self.classes_.size

    @property
    def input_dim(self) -> int:
        self._check_fitted()
        return self.n_features_in_

    def initialize(self, input_dim: int, class_count: int, rng=None):
        """Seeded Gaussian init (scale 1/sqrt(fan_in)), zero biases."""
        if input_dim < 1 or class_count < 1:
            raise ValueError("input_dim and class_count must be >= 1")
        if rng is None:
            rng = np.random.default_rng(self.random_state)
        self.n_features_in_ = int(input_dim)
        self.classes_ = np.arange(int(class_count))
        self.step_count_ = 0
        self._init_params(rng)
        return self

    def decision_function(self, X) -> np.ndarray:
        """Raw logits, one row per input."""
        self._check_fitted()
        return self._forward(self._check_X(X))[0]

    def predict_proba(self, X) -> np.ndarray:
        Z = self.decision_function(X)
        return np.exp(Z - _row_lse(Z)[:, None])

    def predict(self, X) -> np.ndarray:
        """Argmax class per row; ties break to the lowest class index."""
        return self.decision_function(X).argmax(axis=1)

    def step(self, X, y) -> TrainStepReport:
        """One SGD step on the mean cross-entropy of (X, y)."""
        self._check_fitted()
        X = self._check_X(X)
        y = self._check_y(y, X.shape[0])
        if X.shape[0] == 0:
            raise ValueError("batch must be non-empty")
        with np.errstate(over="ignore", invalid="ignore"):
            Z, cache = self._forward(X)
            lse = _row_lse(Z)
            loss = float((lse - Z[np.arange(X.shape[0]), y]).mean())
            G = np.exp(Z - lse[:, None])
            G[np.arange(X.shape[0]), y] -= 1.0
            G /= X.shape[0]
            grads = self._backward(X, G, cache)
        if not all(np.all(np.isfinite(g)) for g in grads):
            raise TrainingDivergenceError(
                f"non-finite gradient at step {self.step_count_ + 1}; parameters preserved"
            )
        for p, g in zip(self._params(), grads):
            p -= self.learning_rate * g
        self.step_count_ += 1
        grad_norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
        return TrainStepReport(loss_before=loss, grad_norm=grad_norm, step_count=self.step_count_)

    def partial_fit(self, X, y, classes=None):
        """scikit-learn online API: first call must pass the full class set."""
        X = np.asarray(X, dtype=np.float64)
        if not hasattr(self, "classes_"):
            if classes is None:
                raise ValueError("classes must be provided on the first partial_fit call")
            classes = np.asarray(classes)
            if not np.array_equal(classes, np.arange(classes.size)):
                raise ValueError("classes must be the dense range 0..C-1")
            self.initialize(X.shape[1], classes.size)
        self.step(X, y)
        return self

    def fit(self, X, y):
        """Initialize from the data and run n_steps full-batch SGD steps."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2 or y.ndim != 1:
            raise ValueError("X must be 2-dimensional and y 1-dimensional")
        if not np.issubdtype(y.dtype, np.integer) or y.min() < 0:
            raise ValueError("y must contain non-negative integer class indices")
        self.initialize(X.shape[1], int(y.max()) + 1)
        for _ in range(self.n_steps):
            self.step(X, y)
        return self

    def get_flat_params(self) -> np.ndarray:
        self._check_fitted()
        return np.concatenate([p.ravel() for p in self._params()])

    def set_flat_params(self, theta) -> None:
        self._check_fitted()
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_parameters,):
            raise ValueError(f"expected {self.n_parameters} parameters, got {theta.shape}")
        offset = 0
        for p in self._params():
            p[...] = theta[offset : offset + p.size].reshape(p.shape)
            offset += p.size

    @property
    def n_parameters(self) -> int:
        self._check_fitted()
        return sum(p.size for p in self._params())


class SoftmaxRegression(_OnlineLogitClassifier):
    """Multinomial logistic regression: z = Wx + b."""

    def __init__(self, learning_rate: float = 0.1, n_steps: int = 100, random_state=None):
        self.learning_rate = learning_rate
        self.n_steps = n_steps
        self.random_state = random_state

    def _init_params(self, rng):
        d, c = self.n_features_in_, self.classes_.size
        self.W_ = rng.normal(0.0, 1.0 / np.sqrt(d), size=(c, d))
        self.b_ = np.zeros(c)

    def _params(self):
        return [self.W_, self.b_]

    def _forward(self, X):
        return X @ self.W_.T + self.b_, None

    def _backward(self, X, G, cache):
        return [G.T @ X, G.sum(axis=0)]


class TanhMLP(_OnlineLogitClassifier):
    """One-hidden-layer network z = W2 tanh(W1 x + b1) + b2.

    tanh keeps the loss smooth everywhere, so central finite differences are a
    valid gradient oracle.
    """

    def __init__(
        self,
        hidden: int = 32,
        learning_rate: float = 0.1,
        n_steps: int = 100,
        random_state=None,
    ):
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.n_steps = n_steps
        self.random_state = random_state

    def _init_params(self, rng):
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        d, c, h = self.n_features_in_, self.classes_.size, self.hidden
        self.W1_ = rng.normal(0.0, 1.0 / np.sqrt(d), size=(h, d))
        self.b1_ = np.zeros(h)
        self.W2_ = rng.normal(0.0, 1.0 / np.sqrt(h), size=(c, h))
        self.b2_ = np.zeros(c)

    def _params(self):
        return [self.W1_, self.b1_, self.W2_, self.b2_]

    def _forward(self, X):
        H = np.tanh(X @ self.W1_.T + self.b1_)
        return H @ self.W2_.T + self.b2_, H

    def _backward(self, X, G, H):
        dW2 = G.T @ H
        db2 = G.sum(axis=0)
        dA = (G @ self.W2_) * (1.0 - H * H)
        return [dA.T @ X, dA.sum(axis=0), dW2, db2]


def init_model(
    kind: str,
    input_dim: int,
    class_count: int,
    hidden: int = 32,
    learning_rate: float = 0.1,
    rng=None,
):
    """Construct and initialize a reference model by kind name."""
    if kind == "logreg":
        model = SoftmaxRegression(learning_rate=learning_rate)
    elif kind == "mlp":
        model = TanhMLP(hidden=hidden, learning_rate=learning_rate)
    else:
        raise ValueError(f"kind must be one of {MODEL_KINDS}, got {kind!r}")
    return model.initialize(input_dim, class_count, rng=rng)


def save_checkpoint(model, path) -> None:
    """Binary checkpoint: (kind, D, C, hidden) header + flat float64 LE params."""
    model._check_fitted()
    kind = "logreg" if isinstance(model, SoftmaxRegression) else "mlp"
    hidden = model.hidden if kind == "mlp" else 0
    header = struct.pack(
        "<4sHHIII",
        _MAGIC,
        1,
        _KIND_CODES[kind],
        model.n_features_in_,
        model.classes_.size,
        hidden,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(model.get_flat_params().astype("<f8").tobytes())


def load_checkpoint(path):
    """Rebuild the estimator stored by :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    header_size = struct.calcsize("<4sHHIII")
    if len(blob) < header_size:
        raise ValueError(f"{path}: truncated checkpoint")
    magic, version, code, d, c, hidden = struct.unpack("<4sHHIII", blob[:header_size])
    if magic != _MAGIC or version != 1:
        raise ValueError(f"{path}: not a model checkpoint")
    kinds = {v: k for k, v in _KIND_CODES.items()}
    if code not in kinds:
        raise ValueError(f"{path}: unknown model kind code {code}")
    model = init_model(kinds[code], d, c, hidden=hidden or 32, rng=np.random.default_rng(0))
    params = np.frombuffer(blob[header_size:], dtype="<f8")
    if params.size != model.n_parameters:
        raise ValueError(
            f"{path}: expected {model.n_parameters} parameters, found {params.size}"
        )
    model.set_flat_params(params.astype(np.float64))
    return model
