"""Fully connected regression networks trained by mini-batch gradient
descent.

Layer l computes h(l) = g(W(l) h(l-1) + b(l)); the output layer is a single
linear unit. The loss is the mean squared error plus an L2 penalty on the
weight matrices (biases are not penalized).
"""
import copy
import logging
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
import pandas as pd

from pmbench.errors import ArgumentError

logger = logging.getLogger(__name__)

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805
# Value a SELU unit saturates to, used for dropped units
SELU_SATURATION = -SELU_SCALE * SELU_ALPHA


class ACTIVATION:
    RELU = "relu"
    SELU = "selu"
    ALL = [RELU, SELU]


class OPTIMIZER:
    RADAM = "radam"
    ADAM = "adam"
    NADAM = "nadam"
    ADAMAX = "adamax"
    RMSPROP = "rmsprop"
    SGD = "sgd"
    ALL = [RADAM, ADAM, NADAM, ADAMAX, RMSPROP, SGD]


class MODE:
    TRAIN = "train"
    INFER = "infer"


@dataclass
class MlpConfig:
    layers: int = 1
    units: int = 16
    activation: str = ACTIVATION.RELU
    dropout: float = 0.0
    l2: float = 0.0
    learn_rate: float = 1e-3
    optimizer: str = OPTIMIZER.ADAM
    seed: int = 0

    def validate(self):
        if not 1 <= self.layers <= 3:
            raise ArgumentError(
                "An MLP has 1 to 3 hidden layers, got {}."
                .format(self.layers)
            )
        if not 4 <= self.units <= 32:
            raise ArgumentError(
                "Hidden layers have 4 to 32 units, got {}."
                .format(self.units)
            )
        if self.activation not in ACTIVATION.ALL:
            raise ArgumentError(
                "The activation '{}' is not valid. Please choose between: "
                "{}.".format(self.activation, ", ".join(ACTIVATION.ALL))
            )
        if not 0 <= self.dropout <= 0.3:
            raise ArgumentError(
                "The dropout rate must lie in [0, 0.3], got {}."
                .format(self.dropout)
            )
        if not 0 <= self.l2 <= 0.1:
            raise ArgumentError(
                "The L2 coefficient must lie in [0, 0.1], got {}."
                .format(self.l2)
            )
        if not 1e-6 <= self.learn_rate <= 0.1:
            raise ArgumentError(
                "The learn rate must lie in [1e-6, 0.1], got {}."
                .format(self.learn_rate)
            )
        if self.optimizer not in OPTIMIZER.ALL:
            raise ArgumentError(
                "The optimizer '{}' is not valid. Please choose between: "
                "{}.".format(self.optimizer, ", ".join(OPTIMIZER.ALL))
            )

    def to_dict(self):
        return {
            "layers": self.layers,
            "units": self.units,
            "activation": self.activation,
            "dropout": self.dropout,
            "l2": self.l2,
            "learn_rate": self.learn_rate,
            "optimizer": self.optimizer,
            "seed": self.seed,
        }


@dataclass
class TrainSchedule:
    max_epochs: int = 99
    batch_sizes: tuple = (32, 64, 128)
    batch_switch_epochs: tuple = (33, 66)
    plateau_patience: int = 10
    lr_factor: float = 0.5
    early_stop_patience: int = 15
    min_delta: float = 1e-4
    validation_fraction: float = 0.1

    def validate(self):
        if len(self.batch_sizes) != len(self.batch_switch_epochs) + 1:
            raise ArgumentError(
                "Expected one more batch size than switch epochs."
            )
        if list(self.batch_switch_epochs) != \
                sorted(self.batch_switch_epochs):
            raise ArgumentError("Batch switch epochs must be ordered.")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ArgumentError("Patience windows must be >= 1.")
        if not 0 < self.validation_fraction < 1:
            raise ArgumentError(
                "The validation fraction must lie in (0, 1), got {}."
                .format(self.validation_fraction)
            )

    def batch_size(self, epoch):
        for size, switch in zip(self.batch_sizes, self.batch_switch_epochs):
            if epoch < switch:
                return size
        return self.batch_sizes[-1]


@dataclass
class Mlp:
    config: MlpConfig
    # weights[l] has shape (units out, units in)
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @property
    def n_inputs(self):
        return self.weights[0].shape[1]

    @property
    def n_parameters(self):
        return int(sum(W.size + b.size
                       for W, b in zip(self.weights, self.biases)))

    @property
    def params(self):
        return self.weights + self.biases

    def copy(self):
        return Mlp(
            config=copy.copy(self.config),
            weights=[W.copy() for W in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "layer_sizes": [self.n_inputs] + [len(b) for b in self.biases],
            "weights": [W.ravel().tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, args):
        sizes = args["layer_sizes"]
        return cls(
            config=MlpConfig(**args["config"]),
            weights=[
                np.asarray(W, dtype=float).reshape(sizes[i + 1], sizes[i])
                for i, W in enumerate(args["weights"])
            ],
            biases=[np.asarray(b, dtype=float) for b in args["biases"]],
        )


def init_mlp(config, n_inputs) -> Mlp:
    """He-normal weights for ReLU layers, LeCun-normal for SELU layers and
    the linear readout. Biases start at zero.
    """
    config.validate()
    if n_inputs < 1:
        raise ArgumentError("An MLP needs at least one input.")
    rng = np.random.default_rng(config.seed)
    sizes = [n_inputs] + [config.units] * config.layers + [1]
    weights, biases = [], []
    for index, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        hidden = index < config.layers
        gain = 2.0 if hidden and config.activation == ACTIVATION.RELU \
            else 1.0
        weights.append(
            rng.normal(0.0, math.sqrt(gain / fan_in), size=(fan_out, fan_in))
        )
        biases.append(np.zeros(fan_out))
    return Mlp(config=config, weights=weights, biases=biases)


def _activate(z, activation):
    if activation == ACTIVATION.RELU:
        return np.maximum(z, 0.0)
    return SELU_SCALE * np.where(z > 0, z, SELU_ALPHA * np.expm1(
        np.minimum(z, 0.0)))


def _activation_grad(z, activation):
    if activation == ACTIVATION.RELU:
        return (z > 0).astype(float)
    return SELU_SCALE * np.where(z > 0, 1.0, SELU_ALPHA * np.exp(
        np.minimum(z, 0.0)))


def _alpha_dropout_affine(rate):
    """Affine correction (a, b) keeping zero mean and unit variance of SELU
    activations after dropping units to the saturation value.
    """
    keep = 1.0 - rate
    a = (keep * (1.0 + rate * SELU_SATURATION ** 2)) ** -0.5
    b = -a * SELU_SATURATION * rate
    return a, b


@dataclass
class ForwardCache:
    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)
    masks: List[np.ndarray] = field(default_factory=list)


def forward(mlp, X, mode=MODE.INFER, rng=None):
    """Network output for the rows of X, plus the cache backward needs.

    Args:
        mlp (Mlp): The network
        X (np.ndarray): Input rows, or a single input vector
        mode (str): MODE.TRAIN applies dropout, MODE.INFER never does
        rng (np.random.Generator): Dropout mask source in train mode

    Returns:
        tuple: The predictions and a ForwardCache
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != mlp.n_inputs:
        raise ArgumentError(
            "The network expects {} inputs, got {}."
            .format(mlp.n_inputs, X.shape[1])
        )
    config = mlp.config
    dropping = mode == MODE.TRAIN and config.dropout > 0
    if dropping and rng is None:
        rng = np.random.default_rng(config.seed)

    cache = ForwardCache()
    h = X
    n_hidden = len(mlp.weights) - 1
    for index, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        cache.inputs.append(h)
        z = h @ W.T + b
        cache.pre_activations.append(z)
        if index == n_hidden:
            h = z
            break
        h = _activate(z, config.activation)
        if dropping:
            mask = rng.random(h.shape) >= config.dropout
            cache.masks.append(mask)
            if config.activation == ACTIVATION.SELU:
                a, shift = _alpha_dropout_affine(config.dropout)
                h = a * np.where(mask, h, SELU_SATURATION) + shift
            else:
                h = h * mask / (1.0 - config.dropout)
        else:
            cache.masks.append(None)

    out = h[:, 0]
    return (out[0] if single else out), cache


def backward(mlp, cache, d_out):
    """Gradients of the loss with respect to every weight and bias.

    Args:
        mlp (Mlp): The network used for the forward pass
        cache (ForwardCache): Cache of a forward pass
        d_out (np.ndarray): Loss gradient with respect to each output

    Returns:
        tuple: Lists of weight gradients and bias gradients, layer order
    """
    config = mlp.config
    delta = np.asarray(d_out, dtype=float).reshape(-1, 1)
    grad_W = [None] * len(mlp.weights)
    grad_b = [None] * len(mlp.biases)
    for index in range(len(mlp.weights) - 1, -1, -1):
        grad_W[index] = delta.T @ cache.inputs[index] + \
            2.0 * config.l2 * mlp.weights[index]
        grad_b[index] = np.sum(delta, axis=0)
        if index == 0:
            break
        d_h = delta @ mlp.weights[index]
        mask = cache.masks[index - 1]
        if mask is not None:
            if config.activation == ACTIVATION.SELU:
                a, _ = _alpha_dropout_affine(config.dropout)
                d_h = d_h * a * mask
            else:
                d_h = d_h * mask / (1.0 - config.dropout)
        delta = d_h * _activation_grad(cache.pre_activations[index - 1],
                                       config.activation)
    return grad_W, grad_b


def loss(mlp, y_hat, y):
    """MSE plus the L2 penalty, and its gradient with respect to y_hat."""
    residual = np.asarray(y_hat, dtype=float) - np.asarray(y, dtype=float)
    penalty = mlp.config.l2 * sum(float(np.sum(W * W)) for W in mlp.weights)
    return float(np.mean(residual ** 2)) + penalty, \
        2.0 * residual / residual.size


# Moment coefficients as published with each rule
OPTIMIZER_DEFAULTS = {
    OPTIMIZER.SGD: {},
    OPTIMIZER.ADAM: {"beta_1": 0.9, "beta_2": 0.999, "eps": 1e-8},
    OPTIMIZER.NADAM: {"beta_1": 0.9, "beta_2": 0.999, "eps": 1e-8},
    OPTIMIZER.ADAMAX: {"beta_1": 0.9, "beta_2": 0.999, "eps": 1e-8},
    OPTIMIZER.RADAM: {"beta_1": 0.9, "beta_2": 0.999, "eps": 1e-8},
    OPTIMIZER.RMSPROP: {"rho": 0.9, "eps": 1e-8},
}


@dataclass
class OptimizerState:
    rule: str
    step: int = 0
    first: List[np.ndarray] = field(default_factory=list)
    second: List[np.ndarray] = field(default_factory=list)


def init_optimizer(rule, params) -> OptimizerState:
    if rule not in OPTIMIZER.ALL:
        raise ArgumentError(
            "The optimizer '{}' is not valid. Please choose between: {}."
            .format(rule, ", ".join(OPTIMIZER.ALL))
        )
    return OptimizerState(
        rule=rule,
        first=[np.zeros_like(p) for p in params],
        second=[np.zeros_like(p) for p in params],
    )


def _update(rule, t, m, v, g, lr):
    """One parameter's update rule.

    Returns:
        tuple: (parameter increment, first moment, second moment)
    """
    h = OPTIMIZER_DEFAULTS[rule]
    if rule == OPTIMIZER.SGD:
        return -lr * g, m, v
    if rule == OPTIMIZER.RMSPROP:
        v = h["rho"] * v + (1 - h["rho"]) * g * g
        return -lr * g / (np.sqrt(v) + h["eps"]), m, v

    b1, b2, eps = h["beta_1"], h["beta_2"], h["eps"]
    m = b1 * m + (1 - b1) * g
    if rule == OPTIMIZER.ADAMAX:
        v = np.maximum(b2 * v, np.abs(g))
        return -lr / (1 - b1 ** t) * m / (v + eps), m, v

    v = b2 * v + (1 - b2) * g * g
    m_hat = m / (1 - b1 ** t)
    v_hat = v / (1 - b2 ** t)
    if rule == OPTIMIZER.ADAM:
        return -lr * m_hat / (np.sqrt(v_hat) + eps), m, v
    if rule == OPTIMIZER.NADAM:
        nesterov = b1 * m / (1 - b1 ** (t + 1)) + \
            (1 - b1) * g / (1 - b1 ** t)
        return -lr * nesterov / (np.sqrt(v_hat) + eps), m, v

    # Rectified Adam: plain momentum until the variance estimate is usable
    rho_inf = 2.0 / (1 - b2) - 1.0
    rho_t = rho_inf - 2.0 * t * b2 ** t / (1 - b2 ** t)
    if rho_t <= 5.0:
        return -lr * m_hat, m, v
    r_t = math.sqrt((rho_t - 4) * (rho_t - 2) * rho_inf /
                    ((rho_inf - 4) * (rho_inf - 2) * rho_t))
    return -lr * r_t * m_hat / (np.sqrt(v_hat) + eps), m, v


def optimizer_step(state, params, grads, lr):
    """Apply one update to every parameter array.

    Returns:
        tuple: The updated parameter list and the optimizer state
    """
    if state.rule not in OPTIMIZER.ALL:
        raise ArgumentError(
            "The optimizer '{}' is not valid.".format(state.rule)
        )
    state.step += 1
    updated = []
    for k, (p, g) in enumerate(zip(params, grads)):
        increment, state.first[k], state.second[k] = _update(
            state.rule, state.step, state.first[k], state.second[k], g, lr
        )
        updated.append(p + increment)
    return updated, state


def validation_split(groups, fraction, rng):
    """Hold out whole profiles until they cover the requested share of rows.

    Returns:
        tuple: Boolean masks (fit rows, validation rows)
    """
    groups = np.asarray(groups)
    ids, counts = np.unique(groups, return_counts=True)
    if len(ids) < 2:
        raise ArgumentError(
            "Early stopping needs at least two profiles, got {}."
            .format(len(ids))
        )
    order = rng.permutation(len(ids))
    target = fraction * len(groups)
    held, covered = [], 0
    for index in order[:-1]:
        if covered >= target:
            break
        held.append(ids[index])
        covered += counts[index]
    validation = np.isin(groups, held)
    return ~validation, validation


def validation_loss(mlp, X, y):
    y_hat, _ = forward(mlp, X, MODE.INFER)
    return float(np.mean((y_hat - y) ** 2))


def train(mlp, X, y, groups, schedule=None, X_val=None, y_val=None):
    """Train with the batch-doubling schedule, plateau learn-rate halving
    and early stopping. Without explicit validation data, whole profiles of
    the training set are held out.

    Returns:
        tuple: The network of the best validation epoch and the history
        DataFrame (epoch, lr, batch_size, train_loss, val_loss)
    """
    schedule = schedule or TrainSchedule()
    schedule.validate()
    config = mlp.config
    rng = np.random.default_rng([config.seed, 1])
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)

    if X_val is None:
        fit_rows, val_rows = validation_split(
            groups, schedule.validation_fraction, rng
        )
        X_fit, y_fit = X[fit_rows], y[fit_rows]
        X_val, y_val = X[val_rows], y[val_rows]
    else:
        X_fit, y_fit = X, y
        X_val = np.asarray(X_val, dtype=float)
        y_val = np.asarray(y_val, dtype=float)
    if len(y_val) == 0 or len(y_fit) == 0:
        raise ArgumentError("The validation split left an empty set.")

    net = mlp.copy()
    state = init_optimizer(config.optimizer, net.params)
    lr = config.learn_rate
    n_layers = len(net.weights)

    best_net, best_val = net.copy(), np.inf
    reference_val = np.inf
    stall = 0
    best_train, plateau = np.inf, 0
    history = []
    for epoch in range(schedule.max_epochs):
        batch = schedule.batch_size(epoch)
        order = rng.permutation(len(y_fit))
        batch_losses = []
        for start in range(0, len(order), batch):
            rows = order[start:start + batch]
            y_hat, cache = forward(net, X_fit[rows], MODE.TRAIN, rng)
            value, d_out = loss(net, y_hat, y_fit[rows])
            grad_W, grad_b = backward(net, cache, d_out)
            params, state = optimizer_step(
                state, net.params, grad_W + grad_b, lr
            )
            net.weights, net.biases = params[:n_layers], params[n_layers:]
            batch_losses.append(value)
        if not all(np.all(np.isfinite(p)) for p in net.params):
            logger.warning(
                "Training diverged at epoch %d, keeping the best epoch.",
                epoch
            )
            break

        train_loss = float(np.mean(batch_losses))
        val_loss = validation_loss(net, X_val, y_val)
        history.append({
            "epoch": epoch,
            "lr": lr,
            "batch_size": batch,
            "train_loss": train_loss,
            "val_loss": val_loss,
        })

        if val_loss < best_val:
            best_net, best_val = net.copy(), val_loss
        if val_loss < reference_val - schedule.min_delta:
            reference_val, stall = val_loss, 0
        else:
            stall += 1
            if stall >= schedule.early_stop_patience:
                logger.debug("Early stopping at epoch %d", epoch)
                break

        if train_loss < best_train:
            best_train, plateau = train_loss, 0
        else:
            plateau += 1
            if plateau >= schedule.plateau_patience:
                lr *= schedule.lr_factor
                plateau = 0
                logger.debug("Learn rate lowered to %g", lr)

    return best_net, pd.DataFrame(
        history,
        columns=["epoch", "lr", "batch_size", "train_loss", "val_loss"],
    )


def predict_mlp(mlp, X):
    y_hat, _ = forward(mlp, X, MODE.INFER)
    return y_hat
