"""Feed-forward network trained with resilient backpropagation.

Sigmoid hidden layers, a single linear output, batch mean-squared-error
gradient, and iRPROP- updates (sign-change steps shrink and the stored
gradient is zeroed; no weight backtracking). Step sizes are per weight
and live in [delta_min, delta_max].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, NumericalError


@dataclass(frozen=True)
class AnnHyper:
    hidden: tuple | None = None  # None -> one layer of 2*n_inputs + 1
    delta0: float = 0.1
    delta_min: float = 1e-6
    delta_max: float = 50.0
    eta_plus: float = 1.2
    eta_minus: float = 0.5
    max_epochs: int = 2000
    patience: int = 50
    init_scale: float = 0.5
    restart_on_stall: bool = True  # only applies when no validation fold is given

    def hidden_for(self, n_inputs: int) -> tuple:
        if self.hidden is not None:
            return tuple(self.hidden)
        return (2 * n_inputs + 1,)


@dataclass
class AnnParams:
    """Layer weights (out x in) and biases; last layer is the linear output."""

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    @property
    def layer_sizes(self) -> tuple:
        return (self.weights[0].shape[1], *(w.shape[0] for w in self.weights))

    def copy(self) -> "AnnParams":
        return AnnParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_params(n_inputs: int, hidden, rng: np.random.Generator, scale: float = 0.7) -> AnnParams:
    sizes = (n_inputs, *hidden, 1)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.uniform(-scale, scale, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-scale, scale, size=fan_out))
    return AnnParams(weights, biases)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(params: AnnParams, X) -> np.ndarray:
    A = np.asarray(X, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        A = _sigmoid(A @ W.T + b)
    return (A @ params.weights[-1].T + params.biases[-1])[:, 0]


def mse(params: AnnParams, X, y) -> float:
    pred = forward(params, X)
    return float(np.mean((pred - np.asarray(y, dtype=float)) ** 2))


def flatten(params: AnnParams) -> np.ndarray:
    return np.concatenate(
        [w.ravel() for w in params.weights] + [b.ravel() for b in params.biases]
    )


def unflatten(vec: np.ndarray, template: AnnParams) -> AnnParams:
    weights, biases = [], []
    pos = 0
    for w in template.weights:
        weights.append(vec[pos : pos + w.size].reshape(w.shape).copy())
        pos += w.size
    for b in template.biases:
        biases.append(vec[pos : pos + b.size].copy())
        pos += b.size
    return AnnParams(weights, biases)


def _views(vec: np.ndarray, template: AnnParams) -> AnnParams:
    """AnnParams whose arrays are views into `vec` (in-place updates flow through)."""
    weights, biases = [], []
    pos = 0
    for w in template.weights:
        weights.append(vec[pos : pos + w.size].reshape(w.shape))
        pos += w.size
    for b in template.biases:
        biases.append(vec[pos : pos + b.size])
        pos += b.size
    return AnnParams(weights, biases)


def loss_and_gradient(params: AnnParams, X, y):
    """Batch MSE and its gradient, flattened in `flatten` order."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n = len(y)

    activations = [X]
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        activations.append(_sigmoid(activations[-1] @ W.T + b))
    pred = (activations[-1] @ params.weights[-1].T + params.biases[-1])[:, 0]
    residual = pred - y
    loss = float(np.mean(residual**2))

    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.biases)
    delta = (2.0 / n) * residual[:, None]  # n x 1, linear output
    for layer in range(len(params.weights) - 1, -1, -1):
        grad_w[layer] = delta.T @ activations[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            a = activations[layer]
            delta = (delta @ params.weights[layer]) * a * (1.0 - a)
    flat = np.concatenate([g.ravel() for g in grad_w] + [g.ravel() for g in grad_b])
    return loss, flat


@dataclass
class TrainInfo:
    epochs_run: int
    best_epoch: int
    best_monitor: float
    final_train_mse: float
    monitored: str  # "validation" or "train"


def rprop_fit(
    params: AnnParams,
    X,
    y,
    hyper: AnnHyper,
    X_val=None,
    y_val=None,
    rng: np.random.Generator | None = None,
):
    """Core iRPROP- loop from given starting parameters.

    With a validation fold, training stops once validation MSE has not
    improved for `patience` epochs and the best-epoch parameters are
    returned. Without one, train MSE is monitored instead and a stall
    triggers a fresh reinitialization drawn from `rng` (tiny problems have
    genuine local minima; multi-starting inside the same epoch budget is
    the standard remedy), keeping the best basin found. Restarts are
    disabled when no rng is supplied.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise DataError("empty training fold")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("non-finite values in the training fold")
    has_val = X_val is not None and y_val is not None and len(np.asarray(y_val)) > 0

    theta = flatten(params)
    working = _views(theta, params)
    delta = np.full(theta.shape, hyper.delta0)
    prev_grad = np.zeros_like(theta)

    def monitor():
        return mse(working, X_val, y_val) if has_val else mse(working, X, y)

    best_monitor = monitor()
    best_theta = theta.copy()
    best_epoch = 0
    stall = 0
    train_loss = float("nan")
    epoch = 0
    for epoch in range(1, hyper.max_epochs + 1):
        train_loss, grad = loss_and_gradient(working, X, y)
        if not np.isfinite(train_loss) or not np.isfinite(grad).all():
            raise NumericalError(f"non-finite loss or gradient at epoch {epoch}")
        sign_change = grad * prev_grad
        grew = sign_change > 0
        flipped = sign_change < 0
        delta[grew] = np.minimum(delta[grew] * hyper.eta_plus, hyper.delta_max)
        delta[flipped] = np.maximum(delta[flipped] * hyper.eta_minus, hyper.delta_min)
        grad_eff = grad.copy()
        grad_eff[flipped] = 0.0
        theta -= np.sign(grad_eff) * delta
        prev_grad = grad_eff

        m = monitor()
        if m < best_monitor - 1e-12:
            best_monitor = m
            best_theta = theta.copy()
            best_epoch = epoch
            stall = 0
        else:
            stall += 1
            if stall >= hyper.patience:
                can_restart = (
                    not has_val
                    and hyper.restart_on_stall
                    and rng is not None
                    and epoch < hyper.max_epochs
                )
                if not can_restart:
                    break
                sizes = params.layer_sizes
                fresh = init_params(sizes[0], sizes[1:-1], rng, hyper.init_scale)
                theta[:] = flatten(fresh)
                delta[:] = hyper.delta0
                prev_grad[:] = 0.0
                stall = 0

    final = unflatten(best_theta, params)
    info = TrainInfo(
        epochs_run=epoch,
        best_epoch=best_epoch,
        best_monitor=best_monitor,
        final_train_mse=mse(final, X, y),
        monitored="validation" if has_val else "train",
    )
    return final, info


def train_ann(
    X,
    y,
    hyper: AnnHyper,
    seed: int,
    X_val=None,
    y_val=None,
):
    """Seeded initialization followed by the iRPROP- loop; see rprop_fit."""
    X = np.asarray(X, dtype=float)
    n_inputs = 1 if X.ndim == 1 else X.shape[1]
    rng = np.random.default_rng(seed)
    params = init_params(n_inputs, hyper.hidden_for(n_inputs), rng, hyper.init_scale)
    return rprop_fit(params, X, y, hyper, X_val=X_val, y_val=y_val, rng=rng)
