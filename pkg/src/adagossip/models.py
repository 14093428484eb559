"""Small differentiable classifiers over flat parameter vectors.

``logreg`` is multinomial logistic regression; ``mlp`` stacks affine layers
with tanh between them. Both end in softmax cross-entropy averaged over the
batch. Parameters are laid out layer by layer as the row-major
``fan_in x fan_out`` weight matrix followed by the ``fan_out`` bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ModelError", "ModelSpec", "init_params", "forward_backward", "loss_and_accuracy", "predict"]


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    layer_dims: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if self.kind not in ("logreg", "mlp"):
            raise ModelError(f"unknown model kind {self.kind!r}")
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ModelError(f"bad layer dims {self.layer_dims}")
        if self.kind == "logreg" and len(self.layer_dims) != 2:
            raise ModelError("logreg takes exactly [input_dim, classes]")

    @property
    def param_count(self) -> int:
        return sum((a + 1) * b for a, b in zip(self.layer_dims[:-1], self.layer_dims[1:]))

    @property
    def tensor_sizes(self) -> tuple[int, ...]:
        """Lengths of the weight and bias blocks in parameter order."""
        return tuple(n for a, b in zip(self.layer_dims[:-1], self.layer_dims[1:]) for n in (a * b, b))

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    def unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views ``(weight, bias)`` per layer into ``params``."""
        if params.shape != (self.param_count,):
            raise ModelError(f"expected {self.param_count} parameters, got shape {params.shape}")
        layers, off = [], 0
        for a, b in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            wt = params[off : off + a * b].reshape(a, b)
            off += a * b
            layers.append((wt, params[off : off + b]))
            off += b
        return layers


def init_params(model: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights, zero biases. Logistic regression starts at zero."""
    params = np.zeros(model.param_count)
    if model.kind == "logreg":
        return params
    for wt, _ in model.unpack(params):
        a, b = wt.shape
        limit = np.sqrt(6.0 / (a + b))
        wt[...] = rng.uniform(-limit, limit, size=(a, b))
    return params


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _forward(model: ModelSpec, params: np.ndarray, x: np.ndarray):
    layers = model.unpack(params)
    acts = [x]
    h = x
    for k, (wt, b) in enumerate(layers):
        h = h @ wt + b
        if k < len(layers) - 1:
            h = np.tanh(h)
        acts.append(h)
    if not np.all(np.isfinite(h)):
        raise ModelError("non-finite activations in forward pass")
    return layers, acts


def predict(model: ModelSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Logits for each row of ``x``."""
    return _forward(model, params, np.asarray(x, dtype=np.float64))[1][-1]


def forward_backward(model: ModelSpec, params: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch and its gradient w.r.t. ``params``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.shape[0] == 0:
        raise ModelError("empty batch")
    layers, acts = _forward(model, params, x)
    m = x.shape[0]
    logp = _log_softmax(acts[-1])
    loss = -float(np.mean(logp[np.arange(m), y]))

    grad = np.zeros_like(params)
    grad_layers = model.unpack(grad)
    delta = np.exp(logp)
    delta[np.arange(m), y] -= 1.0
    delta /= m
    for k in range(len(layers) - 1, -1, -1):
        gw, gb = grad_layers[k]
        gw[...] = acts[k].T @ delta
        gb[...] = delta.sum(axis=0)
        if k > 0:
            # acts[k] = tanh(pre-activation), tanh' = 1 - tanh^2
            delta = (delta @ layers[k][0].T) * (1.0 - acts[k] ** 2)
    return loss, grad


def loss_and_accuracy(model: ModelSpec, params: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    logits = predict(model, params, x)
    logp = _log_softmax(logits)
    y = np.asarray(y)
    loss = -float(np.mean(logp[np.arange(len(y)), y]))
    acc = float(np.mean(np.argmax(logits, axis=1) == y))
    return loss, acc
