"""Dense feed-forward network with hand-written backpropagation.

Weights are stored ``(output_dim, input_dim)`` and inputs are batched as rows,
so a layer computes ``z = x @ W.T + b``. All math is float64.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels

CE_CLAMP = 1e-12
ACTIVATIONS = ("identity", "relu", "leaky_relu", "tanh", "softmax")


class DimensionError(ValueError):
    pass


class NumericOverflowError(ArithmeticError):
    def __init__(self, layer: int, what: str = "activation"):
        super().__init__(f"non-finite {what} in layer {layer}")
        self.layer = layer


@dataclass(frozen=True)
class Activation:
    name: str = "identity"
    gamma: float = 1e-2

    def __post_init__(self):
        if self.name not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.name!r}")
        if self.name == "leaky_relu" and not 0.0 < self.gamma < 1.0:
            raise ValueError("leaky_relu gamma must lie in (0, 1)")

    def to_dict(self) -> dict:
        if self.name == "leaky_relu":
            return {"name": self.name, "gamma": self.gamma}
        return {"name": self.name}

    @classmethod
    def from_dict(cls, d) -> "Activation":
        if isinstance(d, str):
            return cls(d)
        return cls(d["name"], d.get("gamma", 1e-2))


IDENTITY = Activation("identity")
RELU = Activation("relu")
LEAKY_RELU = Activation("leaky_relu")
TANH = Activation("tanh")
SOFTMAX = Activation("softmax")


class LossKind(str, enum.Enum):
    MSE = "mse"
    CROSS_ENTROPY = "cross_entropy"


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: Activation = IDENTITY
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("layer dims must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")


@dataclass
class Network:
    layers: list[LayerSpec]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        if not len(self.layers) == len(self.weights) == len(self.biases):
            raise DimensionError("layers, weights and biases differ in length")
        for i, spec in enumerate(self.layers):
            if i and self.layers[i - 1].output_dim != spec.input_dim:
                raise DimensionError(f"layer {i} input_dim does not chain")
            if self.weights[i].shape != (spec.output_dim, spec.input_dim):
                raise DimensionError(f"layer {i} weight shape {self.weights[i].shape}")
            if self.biases[i].shape != (spec.output_dim,):
                raise DimensionError(f"layer {i} bias shape {self.biases[i].shape}")

    @classmethod
    def init(cls, layers: list[LayerSpec], gen: np.random.Generator) -> "Network":
        """Glorot-uniform weights, zero biases."""
        weights, biases = [], []
        for spec in layers:
            bound = np.sqrt(6.0 / (spec.input_dim + spec.output_dim))
            weights.append(gen.uniform(-bound, bound, size=(spec.output_dim, spec.input_dim)))
            biases.append(np.zeros(spec.output_dim))
        return cls(list(layers), weights, biases)

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_params(self, params: list[np.ndarray]) -> "Network":
        if len(params) != 2 * len(self.layers):
            raise DimensionError("parameter count does not match network")
        return Network(list(self.layers), list(params[0::2]), list(params[1::2]))

    def copy(self) -> "Network":
        return self.with_params([p.copy() for p in self.params()])

    def n_params(self) -> int:
        return sum(p.size for p in self.params())


def mlp(sizes: list[int], hidden: list[Activation] | Activation, output: Activation = IDENTITY,
        dropout: float = 0.0) -> list[LayerSpec]:
    """Layer specs for a plain multilayer perceptron.

    ``hidden`` is either one activation for every hidden layer or one per layer.
    Dropout applies to hidden layers only.
    """
    n_hidden = len(sizes) - 2
    if isinstance(hidden, Activation):
        hidden = [hidden] * n_hidden
    if len(hidden) != n_hidden:
        raise ValueError("need one activation per hidden layer")
    specs = [LayerSpec(sizes[i], sizes[i + 1], hidden[i], dropout) for i in range(n_hidden)]
    specs.append(LayerSpec(sizes[-2], sizes[-1], output, 0.0))
    return specs


def _activate(act: Activation, z: np.ndarray) -> np.ndarray:
    if act.name == "identity":
        return z
    if act.name == "relu":
        return np.maximum(z, 0.0)
    if act.name == "leaky_relu":
        return np.where(z >= 0.0, z, act.gamma * z)
    if act.name == "tanh":
        return np.tanh(z)
    # softmax, stabilized by max shift
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _activate_backward(act: Activation, z: np.ndarray, a: np.ndarray, da: np.ndarray) -> np.ndarray:
    if act.name == "identity":
        return da
    if act.name == "relu":
        return da * (z > 0.0)
    if act.name == "leaky_relu":
        return da * np.where(z >= 0.0, 1.0, act.gamma)
    if act.name == "tanh":
        return da * (1.0 - a * a)
    return a * (da - np.sum(da * a, axis=1, keepdims=True))


def _as_batch(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionError(f"expected inputs of width {net.input_dim}, got shape {x.shape}")
    return x


def _forward(net: Network, x: np.ndarray, train: bool, gen: np.random.Generator | None):
    zs, raws, acts, masks = [], [], [x], []
    for i, (spec, w, b) in enumerate(zip(net.layers, net.weights, net.biases)):
        with np.errstate(over="ignore", invalid="ignore"):
            z = acts[-1] @ w.T + b
            a = _activate(spec.activation, z)
        if not np.all(np.isfinite(a)):
            raise NumericOverflowError(i)
        raws.append(a)
        mask = None
        if train and spec.dropout_rate > 0.0:
            if gen is None:
                raise ValueError("train-mode dropout needs a generator")
            keep = 1.0 - spec.dropout_rate
            mask = (gen.random(a.shape) < keep) / keep
            a = a * mask
        zs.append(z)
        acts.append(a)
        masks.append(mask)
    return zs, raws, acts, masks


def forward(net: Network, x, train: bool = False, gen: np.random.Generator | None = None) -> list[np.ndarray]:
    """Activations of every layer, input first.

    Accepts a single vector or a row batch; a vector input yields vector outputs.
    Train mode applies inverted dropout and needs ``gen`` when any layer drops.
    """
    single = np.ndim(x) == 1
    _, _, acts, _ = _forward(net, _as_batch(net, x), train, gen)
    return [a[0] for a in acts] if single else acts


def predict(net: Network, x) -> np.ndarray:
    return forward(net, x)[-1]


def _check_probs(pred: np.ndarray):
    if np.any(np.abs(pred.sum(axis=1) - 1.0) > 1e-6) or np.any(pred < 0.0):
        raise ValueError("cross-entropy needs probability vectors summing to 1")


def loss(pred, target, kind: LossKind) -> float:
    """Mean batch loss.

    MSE averages squared error over output components, then over samples.
    Cross-entropy is ``-ln(max(p[label], 1e-12))`` averaged over samples.
    """
    kind = LossKind(kind)
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim == 1:
        pred = pred[None, :]
    if kind is LossKind.MSE:
        t = np.asarray(target, dtype=np.float64).reshape(pred.shape)
        return float(np.mean((pred - t) ** 2))
    _check_probs(pred)
    labels = np.atleast_1d(np.asarray(target, dtype=np.int64))
    if labels.shape[0] != pred.shape[0] or np.any(labels < 0) or np.any(labels >= pred.shape[1]):
        raise DimensionError("class ids out of range for prediction width")
    picked = pred[np.arange(len(labels)), labels]
    return float(np.mean(-np.log(np.maximum(picked, CE_CLAMP))))


def loss_and_grad(net: Network, x, target, kind: LossKind, train: bool = True,
                  gen: np.random.Generator | None = None) -> tuple[float, list[np.ndarray]]:
    """Mean batch loss and its gradient, ordered like ``net.params()``."""
    kind = LossKind(kind)
    x = _as_batch(net, x)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    n = x.shape[0]
    zs, raws, acts, masks = _forward(net, x, train, gen)
    out = acts[-1]
    last = net.layers[-1].activation

    if kind is LossKind.MSE:
        t = np.asarray(target, dtype=np.float64).reshape(out.shape)
        diff = out - t
        value = float(np.mean(diff ** 2))
        da = 2.0 * diff / diff.size
        dz = None
    else:
        if last.name != "softmax":
            raise ValueError("cross-entropy requires a softmax output layer")
        labels = np.atleast_1d(np.asarray(target, dtype=np.int64))
        if labels.shape[0] != n or np.any(labels < 0) or np.any(labels >= out.shape[1]):
            raise DimensionError("class ids out of range for output width")
        rows = np.arange(n)
        picked = out[rows, labels]
        value = float(np.mean(-np.log(np.maximum(picked, CE_CLAMP))))
        live = picked >= CE_CLAMP
        if masks[-1] is None:
            # softmax and cross-entropy fold into p - onehot
            dz = out.copy()
            dz[rows, labels] -= 1.0
            dz *= (live / n)[:, None]
        else:
            da = np.zeros_like(out)
            da[rows, labels] = -live / (n * np.maximum(picked, CE_CLAMP))
            dz = None

    grads: list[np.ndarray] = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        spec = net.layers[i]
        if dz is None:
            if masks[i] is not None:
                da = da * masks[i]
            dz = _activate_backward(spec.activation, zs[i], raws[i], da)
        grads[2 * i] = dz.T @ acts[i]
        grads[2 * i + 1] = dz.sum(axis=0)
        if i:
            da = dz @ net.weights[i]
            dz = None
    return value, grads


def backprop(net: Network, x, target, kind: LossKind, train: bool = True,
             gen: np.random.Generator | None = None) -> list[np.ndarray]:
    return loss_and_grad(net, x, target, kind, train, gen)[1]


def evaluate(net: Network, x, target, kind: LossKind) -> float:
    """Accuracy for classification (argmax, ties to the lowest index) or MSE."""
    kind = LossKind(kind)
    x = _as_batch(net, x)
    if x.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    out = predict(net, x)
    if kind is LossKind.MSE:
        return float(np.mean((out - np.asarray(target, dtype=np.float64).reshape(out.shape)) ** 2))
    return float(np.mean(np.argmax(out, axis=1) == np.asarray(target)))


def _check_shapes(a: list[np.ndarray], b: list[np.ndarray]):
    if len(a) != len(b) or any(x.shape != y.shape for x, y in zip(a, b)):
        raise DimensionError("parameter and gradient shapes differ")


def sgd_step(params: list[np.ndarray], grads: list[np.ndarray], eta: float) -> list[np.ndarray]:
    _check_shapes(params, grads)
    return [p - eta * g for p, g in zip(params, grads)]


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, params: list[np.ndarray], beta1=0.9, beta2=0.999, epsilon=1e-8) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   0, beta1, beta2, epsilon)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              eta: float) -> tuple[list[np.ndarray], AdamState]:
    _check_shapes(params, grads)
    _check_shapes(params, state.m)
    b1, b2 = state.beta1, state.beta2
    t = state.t + 1
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - eta * (m / c1) / (np.sqrt(v / c2) + state.epsilon))
        new_m.append(m)
        new_v.append(v)
    return new_p, replace(state, m=new_m, v=new_v, t=t)


@dataclass
class Optimizer:
    """Stateful optimizer the training loop drives, one ``step`` per batch.

    Unlike :func:`sgd_step` / :func:`adam_step`, ``step`` updates the
    parameter arrays in place through the fused kernels; results are
    bitwise identical to the pure functions.
    """

    kind: str = "sgd"
    eta: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    state: AdamState | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not self.eta >= 0.0:
            raise ValueError("eta must be nonnegative")

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        _check_shapes(params, grads)
        if any(not p.flags.c_contiguous or not p.flags.writeable for p in params):
            raise ValueError("in-place update needs writeable C-contiguous parameters")
        flat_g = [np.ascontiguousarray(g, dtype=np.float64).reshape(-1) for g in grads]
        if self.kind == "sgd":
            for p, g in zip(params, flat_g):
                kernels.sgd_update(p.reshape(-1), g, self.eta)
            return params
        if self.state is None:
            self.state = AdamState.zeros(params, self.beta1, self.beta2, self.epsilon)
        st = self.state
        st.t += 1
        c1 = 1.0 - st.beta1 ** st.t
        c2 = 1.0 - st.beta2 ** st.t
        for p, g, m, v in zip(params, flat_g, st.m, st.v):
            kernels.adam_update(p.reshape(-1), g, m.reshape(-1), v.reshape(-1),
                                self.eta, st.beta1, st.beta2, c1, c2, st.epsilon)
        return params
