"""Four-layer perceptron trained by minibatch Adam on cross-entropy.

Architecture: dense -> batchnorm -> relu for the first two layers, a plain
dense -> relu third layer, dropout, then a dense softmax head. Inputs are
z-scored with statistics computed on the training partition only; the fitted
model stores those vectors and applies them at prediction time. Batch norm
uses batch statistics while training and running statistics at inference.

All gradients are derived by hand; a finite-difference check in the test
suite pins them down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import Dataset, one_hot_labels
from ..errors import ConfigError, FitError, TrainingError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
BN_EPS = 1e-5
BN_MOMENTUM = 0.9
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class MlpConfig:
    widths: tuple[int, int, int] = (512, 256, 144)  # hidden widths; output = n_classes
    bn_layers: tuple[bool, bool] = (True, True)
    dropout: float = 0.2
    learning_rate: float = 0.001
    batch_size: int = 128
    epochs: int = 200
    seed: int = 0

    def validate(self) -> None:
        if len(self.widths) != 3 or any(w < 1 for w in self.widths):
            raise ConfigError("widths must be three positive hidden-layer sizes")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1), got %r" % self.dropout)
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")


class MlpNet:
    """The bare network: parameters, forward pass and hand backprop."""

    def __init__(self, n_in: int, widths: tuple[int, int, int], n_out: int,
                 bn_layers: tuple[bool, bool], dropout: float, rng: np.random.Generator):
        self.dims = (n_in,) + tuple(widths) + (n_out,)
        self.bn_layers = tuple(bn_layers)
        self.dropout = dropout
        self.params: dict[str, np.ndarray] = {}
        self.running: dict[str, np.ndarray] = {}
        for i in range(4):
            fan_in, fan_out = self.dims[i], self.dims[i + 1]
            self.params["W%d" % (i + 1)] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            if i < 2 and self.bn_layers[i]:
                self.params["gamma%d" % (i + 1)] = np.ones(fan_out)
                self.params["beta%d" % (i + 1)] = np.zeros(fan_out)
                self.running["mean%d" % (i + 1)] = np.zeros(fan_out)
                self.running["var%d" % (i + 1)] = np.ones(fan_out)
            else:
                self.params["b%d" % (i + 1)] = np.zeros(fan_out)

    def _layer_forward(self, i: int, x, training: bool, cache: dict):
        z = x @ self.params["W%d" % (i + 1)]
        if i < 2 and self.bn_layers[i]:
            g = self.params["gamma%d" % (i + 1)]
            b = self.params["beta%d" % (i + 1)]
            if training:
                mu = z.mean(axis=0)
                var = z.var(axis=0)
                rm, rv = self.running["mean%d" % (i + 1)], self.running["var%d" % (i + 1)]
                rm *= BN_MOMENTUM
                rm += (1 - BN_MOMENTUM) * mu
                rv *= BN_MOMENTUM
                rv += (1 - BN_MOMENTUM) * var
            else:
                mu = self.running["mean%d" % (i + 1)]
                var = self.running["var%d" % (i + 1)]
            ivar = 1.0 / np.sqrt(var + BN_EPS)
            zhat = (z - mu) * ivar
            out = g * zhat + b
            cache["z%d" % (i + 1)] = z
            cache["zhat%d" % (i + 1)] = zhat
            cache["ivar%d" % (i + 1)] = ivar
        else:
            out = z + self.params["b%d" % (i + 1)]
            cache["z%d" % (i + 1)] = z
        return out

    def forward(self, x: np.ndarray, training: bool, dropout_mask: np.ndarray | None = None):
        cache: dict[str, np.ndarray] = {"x": x, "training": training}
        a = x
        for i in range(3):
            pre = self._layer_forward(i, a, training, cache)
            a = np.maximum(pre, 0.0)
            cache["pre%d" % (i + 1)] = pre
            cache["a%d" % (i + 1)] = a
        if training and self.dropout > 0.0:
            if dropout_mask is None:
                raise ValueError("training forward with dropout needs a mask")
            a = a * dropout_mask
            cache["mask"] = dropout_mask
        logits = self._layer_forward(3, a, training, cache)
        cache["a3_dropped"] = a
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        probs = e / e.sum(axis=1, keepdims=True)
        return probs, cache

    def make_dropout_mask(self, n_rows: int, rng: np.random.Generator) -> np.ndarray | None:
        if self.dropout <= 0.0:
            return None
        keep = 1.0 - self.dropout
        return (rng.random((n_rows, self.dims[3])) < keep) / keep

    def loss_and_grads(self, x: np.ndarray, y_onehot: np.ndarray,
                       dropout_mask: np.ndarray | None = None):
        """Cross-entropy loss and gradients for every parameter (training mode)."""
        n = x.shape[0]
        probs, cache = self.forward(x, training=True, dropout_mask=dropout_mask)
        loss = -np.mean(np.log(np.maximum((probs * y_onehot).sum(axis=1), 1e-300)))
        grads: dict[str, np.ndarray] = {}
        dz = (probs - y_onehot) / n
        # head layer (dense with bias, no bn)
        grads["W4"] = cache["a3_dropped"].T @ dz
        grads["b4"] = dz.sum(axis=0)
        da = dz @ self.params["W4"].T
        if cache["training"] and self.dropout > 0.0:
            da = da * cache["mask"]
        for i in (2, 1, 0):
            da = da * (cache["pre%d" % (i + 1)] > 0.0)
            if i < 2 and self.bn_layers[i]:
                zhat = cache["zhat%d" % (i + 1)]
                ivar = cache["ivar%d" % (i + 1)]
                grads["gamma%d" % (i + 1)] = (da * zhat).sum(axis=0)
                grads["beta%d" % (i + 1)] = da.sum(axis=0)
                dzhat = da * self.params["gamma%d" % (i + 1)]
                m = zhat.shape[0]
                dz = (ivar / m) * (
                    m * dzhat - dzhat.sum(axis=0) - zhat * (dzhat * zhat).sum(axis=0)
                )
            else:
                grads["b%d" % (i + 1)] = da.sum(axis=0)
                dz = da
            prev = cache["x"] if i == 0 else cache["a%d" % i]
            grads["W%d" % (i + 1)] = prev.T @ dz
            if i > 0:
                da = dz @ self.params["W%d" % (i + 1)].T
        return loss, grads


class MlpModel:
    family = "mlp"

    def __init__(self, config: MlpConfig, classes, net: MlpNet, mu: np.ndarray, sd: np.ndarray,
                 loss_history: np.ndarray):
        self.config = config
        self.classes = tuple(classes)
        self.net = net
        self.standardize_mean = mu
        self.standardize_std = sd
        self.loss_history = loss_history

    def predict_proba(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        x = (rows - self.standardize_mean) / self.standardize_std
        probs, _ = self.net.forward(x, training=False)
        return probs

    def _arrays(self) -> dict:
        out = {"standardize_mean": self.standardize_mean, "standardize_std": self.standardize_std,
               "loss_history": self.loss_history, "n_in": np.array(self.net.dims[0]),
               "n_out": np.array(self.net.dims[-1])}
        for k, v in self.net.params.items():
            out["param_" + k] = v
        for k, v in self.net.running.items():
            out["running_" + k] = v
        return out

    @classmethod
    def _from_state(cls, meta: dict, arrays: dict) -> "MlpModel":
        cfg = MlpConfig(
            widths=tuple(meta["config"]["widths"]),
            bn_layers=tuple(meta["config"]["bn_layers"]),
            dropout=meta["config"]["dropout"],
            learning_rate=meta["config"]["learning_rate"],
            batch_size=meta["config"]["batch_size"],
            epochs=meta["config"]["epochs"],
            seed=meta["config"]["seed"],
        )
        net = MlpNet(int(arrays["n_in"]), cfg.widths, int(arrays["n_out"]), cfg.bn_layers,
                     cfg.dropout, np.random.default_rng(0))
        for k in list(net.params):
            net.params[k] = arrays["param_" + k]
        for k in list(net.running):
            net.running[k] = arrays["running_" + k]
        return cls(cfg, tuple(meta["classes"]), net, arrays["standardize_mean"],
                   arrays["standardize_std"], arrays["loss_history"])


def fit(train: Dataset, cfg: MlpConfig) -> MlpModel:
    """Train with minibatch Adam; deterministic per seed."""
    cfg.validate()
    if len(train) == 0:
        raise FitError("MLP needs a non-empty training set")
    rng = np.random.default_rng(cfg.seed)
    X = train.features
    mu = X.mean(axis=0)
    sd = np.maximum(X.std(axis=0), STD_FLOOR)
    Xs = (X - mu) / sd
    Y = one_hot_labels(train)
    n, k = Xs.shape
    n_classes = len(train.roster)

    net = MlpNet(k, cfg.widths, n_classes, cfg.bn_layers, cfg.dropout, rng)
    m_state = {key: np.zeros_like(v) for key, v in net.params.items()}
    v_state = {key: np.zeros_like(v) for key, v in net.params.items()}
    step = 0
    loss_history = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, cfg.batch_size):
            batch = perm[lo : lo + cfg.batch_size]
            xb, yb = Xs[batch], Y[batch]
            mask = net.make_dropout_mask(len(batch), rng)
            loss, grads = net.loss_and_grads(xb, yb, dropout_mask=mask)
            if not np.isfinite(loss):
                raise TrainingError("training diverged at epoch %d" % epoch)
            total += loss * len(batch)
            step += 1
            bc1 = 1.0 - ADAM_BETA1**step
            bc2 = 1.0 - ADAM_BETA2**step
            for key, gval in grads.items():
                m_state[key] = ADAM_BETA1 * m_state[key] + (1 - ADAM_BETA1) * gval
                v_state[key] = ADAM_BETA2 * v_state[key] + (1 - ADAM_BETA2) * gval**2
                net.params[key] -= cfg.learning_rate * (m_state[key] / bc1) / (
                    np.sqrt(v_state[key] / bc2) + ADAM_EPS
                )
        loss_history[epoch] = total / n
    return MlpModel(cfg, train.roster, net, mu, sd, loss_history)
