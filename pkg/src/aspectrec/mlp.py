"""Single-hidden-layer network: softmax classifier and feature reducer.

The network is trained with a classification head (softmax over class
logits); dimensionality reduction then keeps only the input-to-hidden half,
so the reduced feature of x is relu(b1 + W1 x).
"""

from dataclasses import dataclass

import numpy as np

from .numkit import Rng, relu, softmax


@dataclass
class MlpParams:
    """Weights of the two-layer network: hidden and class-logit affine maps."""

    w1: np.ndarray  # (hidden, input)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (classes, hidden)
    b2: np.ndarray  # (classes,)

    @property
    def input_dim(self):
        return self.w1.shape[1]

    @property
    def hidden_dim(self):
        return self.w1.shape[0]

    @property
    def classes(self):
        return self.w2.shape[0]

    def named_tensors(self):
        return [("w1", self.w1), ("b1", self.b1),
                ("w2", self.w2), ("b2", self.b2)]


@dataclass
class MlpHyper:
    """Training settings; stop_error_rate is the train misclassification
    fraction below which training halts (checked once per epoch)."""

    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    stop_error_rate: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.stop_error_rate <= 1:
            raise ValueError("stop_error_rate must be in (0, 1]")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    error_rate: float


def init_params(input_dim, hidden_dim, classes, rng):
    """Uniform init in +-sqrt(6 / (fan_in + fan_out)), biases zero."""
    lim1 = np.sqrt(6.0 / (input_dim + hidden_dim))
    lim2 = np.sqrt(6.0 / (hidden_dim + classes))
    return MlpParams(
        w1=rng.uniform_signed(lim1, (hidden_dim, input_dim)),
        b1=np.zeros(hidden_dim),
        w2=rng.uniform_signed(lim2, (classes, hidden_dim)),
        b2=np.zeros(classes),
    )


def _check_dim(params, x):
    if x.shape[-1] != params.input_dim:
        raise ValueError(f"feature dim {x.shape[-1]} does not match "
                         f"network input dim {params.input_dim}")


def forward(params, x):
    """Class probabilities softmax(b2 + W2 relu(b1 + W1 x)).

    Accepts a single feature vector or a (samples, dim) matrix; returns
    probabilities with matching leading shape.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_dim(params, x)
    hidden = relu(x @ params.w1.T + params.b1)
    return softmax(hidden @ params.w2.T + params.b2, axis=-1)


def reduce(params, x):
    """Hidden activation relu(b1 + W1 x): the reduced feature vector."""
    x = np.asarray(x, dtype=np.float64)
    _check_dim(params, x)
    return relu(x @ params.w1.T + params.b1)


def _log_softmax(z):
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def loss_and_grads(params, x, labels):
    """Mean cross-entropy over the batch and gradients for all tensors."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    n = x.shape[0]
    z1 = x @ params.w1.T + params.b1
    a1 = np.maximum(z1, 0.0)
    logits = a1 @ params.w2.T + params.b2
    logp = _log_softmax(logits)
    loss = -float(np.mean(logp[np.arange(n), labels]))
    d_logits = np.exp(logp)
    d_logits[np.arange(n), labels] -= 1.0
    d_logits /= n
    grads = {
        "w2": d_logits.T @ a1,
        "b2": d_logits.sum(axis=0),
    }
    d_a1 = d_logits @ params.w2
    d_z1 = d_a1 * (z1 > 0)
    grads["w1"] = d_z1.T @ x
    grads["b1"] = d_z1.sum(axis=0)
    return loss, grads


def train(x, labels, hidden_dim, hyper):
    """Minibatch SGD on cross-entropy; returns (params, per-epoch log).

    Halts when the training-set misclassification rate drops below
    hyper.stop_error_rate, or after hyper.max_epochs. Requires labels in
    [0, classes) with every class present at least once.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training data must be a nonempty (samples, dim) matrix")
    classes = int(labels.max()) + 1
    if labels.min() < 0:
        raise ValueError("labels must be non-negative")
    counts = np.bincount(labels, minlength=classes)
    if np.any(counts == 0):
        raise ValueError(f"every class in [0, {classes}) needs at least one "
                         f"sample; missing {np.flatnonzero(counts == 0).tolist()}")
    rng = Rng(hyper.seed)
    params = init_params(x.shape[1], hidden_dim, classes, rng)
    n = x.shape[0]
    log = []
    for epoch in range(hyper.max_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start: start + hyper.batch_size]
            loss, grads = loss_and_grads(params, x[idx], labels[idx])
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite loss at epoch {epoch}, "
                                   f"batch {start // hyper.batch_size}")
            epoch_loss += loss * len(idx)
            for name, tensor in params.named_tensors():
                tensor -= hyper.learning_rate * grads[name]
        predicted = np.argmax(forward(params, x), axis=-1)
        error_rate = float(np.mean(predicted != labels))
        log.append(EpochStats(epoch, epoch_loss / n, error_rate))
        if error_rate < hyper.stop_error_rate:
            break
    return params, log
