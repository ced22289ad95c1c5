"""Predictive-uncertainty scores computed from model logits.

Six scores share one orientation (larger = more uncertain):

* ``lc`` / ``sm`` / ``rc`` / ``en`` -- classic confidence-based scores on the
  softmax of the unperturbed logits.
* ``rm`` -- disagreement rate of predicted labels across perturbed views.
* ``bi`` -- Bregman information: the Jensen gap of log-sum-exp over the
  logits of the perturbed views. It is the variance term of a bias-variance
  decomposition of cross-entropy, needs no normalization step, and vanishes
  exactly when all views produce identical logits.
"""

from dataclasses import dataclass, field

import numpy as np

from .rng import substream
from .validation import check_finite_vector, check_logit_matrix, check_probability_vector

#: Score kind names accepted by the CLI and config files.
SCORE_KINDS = ("lc", "sm", "rc", "en", "rm", "bi")


def log_sum_exp(z) -> float:
    """ln(sum(exp(z))), max-shifted so it never overflows for |z_j| <= 700."""
    z = check_finite_vector(z, "logits")
    m = float(z.max())
    return m + float(np.log(np.exp(z - m).sum()))


def _row_log_sum_exp(Z: np.ndarray) -> np.ndarray:
    m = Z.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(Z - m).sum(axis=-1, keepdims=True)))[..., 0]


def softmax(z) -> np.ndarray:
    """exp(z - LSE(z)); shift-invariant and sums to 1."""
    z = check_finite_vector(z, "logits")
    return np.exp(z - log_sum_exp(z))


def _row_softmax(Z: np.ndarray) -> np.ndarray:
    return np.exp(Z - _row_log_sum_exp(Z)[:, None])


def least_confidence(p) -> float:
    """1 - max(p): zero for a one-hot prediction, 1 - 1/C at uniform."""
    p = check_probability_vector(p)
    return 1.0 - float(p.max())


def smallest_margin(p) -> float:
    """1 - (p_(1) - p_(2)), the complement of the top-two margin."""
    p = check_probability_vector(p)
    top2 = np.partition(p, -2)[-2:] if p.size >= 2 else np.array([0.0, p[0]])
    return 1.0 - (float(top2[1]) - float(top2[0]))


def ratio_confidence(p) -> float:
    """p_(2) / p_(1); equals 1 at a tie, 0 for a one-hot prediction."""
    p = check_probability_vector(p)
    if p.size < 2:
        return 1.0
    top2 = np.partition(p, -2)[-2:]
    if top2[1] == top2[0]:
        return 1.0
    return float(top2[0]) / float(top2[1])


def entropy(p) -> float:
    """Shannon entropy -sum(p ln p) in nats, with 0 ln 0 = 0."""
    p = check_probability_vector(p)
    nz = p[p > 0.0]
    return float(-(nz * np.log(nz)).sum())


def vote_disagreement(predicted_labels) -> float:
    """1 - (majority vote count)/P over per-view predicted labels.

    Zero exactly when every perturbed view is predicted with the same label.
    """
    labels = np.asarray(predicted_labels)
    if labels.size == 0:
        raise ValueError("predicted_labels must be non-empty")
    if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("predicted_labels must be a 1-D sequence of class indices")
    if np.any(labels < 0):
        raise ValueError("predicted_labels must be non-negative class indices")
    counts = np.bincount(labels)
    return 1.0 - float(counts.max()) / labels.size


def bregman_information(Z) -> float:
    """Jensen gap of LSE over view logits: mean(LSE(z_i)) - LSE(mean(z_i)).

    Non-negative by convexity of LSE, zero when all rows coincide, and
    invariant under adding a constant to every entry.
    """
    Z = check_logit_matrix(Z, "logit matrix")
    return float(_row_log_sum_exp(Z).mean() - log_sum_exp(Z.mean(axis=0)))


@dataclass
class PerturbationFamily:
    """Deterministic test-time views of a feature vector.

    View 0 is the identity; views 1..count-1 add zero-mean Gaussian noise of
    scale ``noise_scale``. The noise for (sample_id, view) is a pure function
    of (seed, sample_id, view), so repeated evaluations are identical and a
    per-sample cache is safe.
    """

    count: int = 4
    noise_scale: float = 0.1
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")

    def perturb(self, x, sample_id: int, view_index: int) -> np.ndarray:
        """Return view ``view_index`` of ``x``."""
        x = np.asarray(x, dtype=np.float64)
        if not 0 <= view_index < self.count:
            raise ValueError(f"view_index {view_index} out of range [0, {self.count})")
        if view_index == 0 or self.noise_scale == 0.0:
            return x.copy()
        rng = substream(self.seed, "tta", sample_id, view_index)
        return x + rng.normal(0.0, self.noise_scale, size=x.shape)

    def views(self, x, sample_id: int) -> np.ndarray:
        """All ``count`` views of ``x``, stacked into a (count, D) array."""
        x = np.asarray(x, dtype=np.float64)
        key = (int(sample_id), x.shape[0] if x.ndim else 0)
        noise = self._cache.get(key)
        if noise is None:
            noise = np.zeros((self.count, x.shape[0]))
            if self.noise_scale > 0.0:
                for v in range(1, self.count):
                    rng = substream(self.seed, "tta", sample_id, v)
                    noise[v] = rng.normal(0.0, self.noise_scale, size=x.shape)
            self._cache[key] = noise
        return x[None, :] + noise


def score_samples(model, X, sample_ids, kind: str, family: PerturbationFamily) -> np.ndarray:
    """Score a batch of feature vectors with one uncertainty kind.

    ``bi`` and ``rm`` evaluate the model on all perturbed views; the
    confidence scores use the softmax of the unperturbed logits only.
    """
    if kind not in SCORE_KINDS:
        raise ValueError(f"unknown score kind {kind!r}, expected one of {SCORE_KINDS}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-dimensional, got shape {X.shape}")
    n = X.shape[0]
    sample_ids = list(sample_ids)
    if len(sample_ids) != n:
        raise ValueError("sample_ids length must match X rows")

    if kind in ("bi", "rm"):
        views = np.concatenate([family.views(X[i], sample_ids[i]) for i in range(n)])
        logits = np.asarray(model.decision_function(views), dtype=np.float64)
        logits = logits.reshape(n, family.count, -1)
        if kind == "bi":
            per_view = _row_log_sum_exp(logits.reshape(n * family.count, -1))
            mean_lse = per_view.reshape(n, family.count).mean(axis=1)
            lse_mean = _row_log_sum_exp(logits.mean(axis=1))
            return mean_lse - lse_mean
        labels = logits.argmax(axis=2)
        return np.array([vote_disagreement(labels[i]) for i in range(n)])

    logits = np.asarray(model.decision_function(X), dtype=np.float64)
    p = _row_softmax(logits)
    if kind == "lc":
        return 1.0 - p.max(axis=1)
    if kind == "en":
        safe = np.where(p > 0.0, p, 1.0)
        return -(p * np.log(safe)).sum(axis=1)
    top2 = np.partition(p, -2, axis=1)[:, -2:]
    if kind == "sm":
        return 1.0 - (top2[:, 1] - top2[:, 0])
    # rc; softmax outputs keep p_(1) > 0
    return np.where(top2[:, 1] == top2[:, 0], 1.0, top2[:, 0] / top2[:, 1])


def score_sample(model, x, sample_id: int, kind: str, family: PerturbationFamily) -> float:
    """Score a single feature vector; see :func:`score_samples`."""
    x = np.asarray(x, dtype=np.float64)
    return float(score_samples(model, x[None, :], [sample_id], kind, family)[0])
