"""Small dense-network engine: layers, losses, reverse-mode gradients and Adam.

Everything here works on NumPy arrays.  A batch is a 2-D array with one sample
per row; a single 1-D vector is accepted and treated as a batch of one.
"""

import json
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "identity", "heaviside")
CHECKPOINT_VERSION = "spikeonet-ckpt-1"


class ShapeError(ValueError):
    pass


class NotDifferentiableError(RuntimeError):
    """Raised when backpropagation reaches a Heaviside layer."""


class StaleCacheError(RuntimeError):
    """Raised when a forward cache no longer matches the network parameters."""


def _activate(z, activation, threshold):
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "identity":
        return z
    return (z >= threshold).astype(z.dtype)


@dataclass
class DenseLayer:
    weights: np.ndarray
    biases: np.ndarray
    activation: str = "relu"
    # only used by heaviside: output is 1 where pre-activation >= threshold
    threshold: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"weights {self.weights.shape} and biases {self.biases.shape} do not match"
            )

    @property
    def n_in(self):
        return self.weights.shape[1]

    @property
    def n_out(self):
        return self.weights.shape[0]

    @classmethod
    def glorot(cls, n_in, n_out, activation="relu", rng=None):
        """Uniform init in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
        rng = np.random.default_rng(rng)
        limit = np.sqrt(6.0 / (n_in + n_out))
        return cls(rng.uniform(-limit, limit, size=(n_out, n_in)), np.zeros(n_out), activation)


@dataclass
class ForwardCache:
    inputs: list
    preacts: list
    version: int


class DenseNet:
    """An ordered stack of :class:`DenseLayer` objects."""

    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise ValueError("a DenseNet needs at least one layer")
        for k in range(len(layers) - 1):
            if layers[k].n_out != layers[k + 1].n_in:
                raise ShapeError(
                    f"layer {k} outputs {layers[k].n_out} but layer {k + 1} expects {layers[k + 1].n_in}"
                )
        self.layers = layers
        self._version = 0

    @classmethod
    def build(cls, input_dim, widths, activations="relu", last_activation="identity", rng=None):
        """Glorot-initialised net with the given layer widths.

        ``activations`` applies to every layer but the last, which gets
        ``last_activation``.
        """
        rng = np.random.default_rng(rng)
        dims = [input_dim, *widths]
        layers = []
        for k in range(len(widths)):
            act = last_activation if k == len(widths) - 1 else activations
            layers.append(DenseLayer.glorot(dims[k], dims[k + 1], act, rng))
        return cls(layers)

    @property
    def input_dim(self):
        return self.layers[0].n_in

    @property
    def output_dim(self):
        return self.layers[-1].n_out

    @property
    def widths(self):
        return [layer.n_out for layer in self.layers]

    def params(self):
        """Flat list ``[W0, b0, W1, b1, ...]``; arrays are live references."""
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.biases))
        return out

    def n_params(self):
        return sum(p.size for p in self.params())

    def mark_updated(self):
        """Invalidate outstanding forward caches after an in-place update."""
        self._version += 1

    def forward(self, x):
        """Return ``(output, cache)``; a 1-D input gives a 1-D output."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise ShapeError(f"expected input width {self.input_dim}, got shape {x.shape}")
        inputs, preacts = [], []
        for layer in self.layers:
            inputs.append(h)
            z = h @ layer.weights.T + layer.biases
            preacts.append(z)
            h = _activate(z, layer.activation, layer.threshold)
        cache = ForwardCache(inputs, preacts, self._version)
        return (h[0] if single else h), cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, grad_out, cache):
        """Gradients ``[dW0, db0, ...]`` for a loss whose output gradient is ``grad_out``.

        Also returns the gradient with respect to the network input as the
        second element of the tuple.
        """
        if cache.version != self._version:
            raise StaleCacheError("parameters changed since this forward pass")
        for k, layer in enumerate(self.layers):
            if layer.activation == "heaviside":
                raise NotDifferentiableError(f"layer {k} is a Heaviside layer")
        g = np.asarray(grad_out, dtype=np.float64)
        if g.ndim == 1:
            g = g[None, :]
        if g.shape != cache.preacts[-1].shape:
            raise ShapeError(f"gradient shape {g.shape} != output shape {cache.preacts[-1].shape}")
        grads = [None] * (2 * len(self.layers))
        for k in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[k]
            if layer.activation == "relu":
                g = g * (cache.preacts[k] > 0)
            grads[2 * k] = g.T @ cache.inputs[k]
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ layer.weights
        return grads, g

    def copy(self):
        net = DenseNet(
            [DenseLayer(l.weights.copy(), l.biases.copy(), l.activation, l.threshold) for l in self.layers]
        )
        return net

    # checkpoints -----------------------------------------------------------

    def to_dict(self, role=None):
        doc = {
            "version": CHECKPOINT_VERSION,
            "input_dim": self.input_dim,
            "layers": [
                {
                    "in": layer.n_in,
                    "out": layer.n_out,
                    "activation": layer.activation,
                    "threshold": layer.threshold,
                    "weights": layer.weights.ravel().tolist(),
                    "biases": layer.biases.tolist(),
                }
                for layer in self.layers
            ],
        }
        if role is not None:
            doc["role"] = role
        return doc

    @classmethod
    def from_dict(cls, doc):
        if doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
        layers = []
        for spec in doc["layers"]:
            w = np.asarray(spec["weights"], dtype=np.float64)
            if w.size != spec["out"] * spec["in"]:
                raise ShapeError("checkpoint weight array does not match its declared dims")
            layers.append(
                DenseLayer(w.reshape(spec["out"], spec["in"]), spec["biases"],
                           spec["activation"], spec.get("threshold", 0.0))
            )
        return cls(layers)

    def save(self, path, role=None):
        with open(path, "w") as fh:
            json.dump(self.to_dict(role), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# losses -------------------------------------------------------------------


def mse_loss(pred, target):
    """Mean squared error over every element, and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} and target {target.shape} differ")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def cross_entropy_loss(logits, classes):
    """Softmax cross-entropy averaged over the batch.

    ``logits`` is ``(n_classes,)`` with an int class, or ``(batch, n_classes)``
    with an int array of classes.
    """
    logits = np.asarray(logits, dtype=np.float64)
    single = logits.ndim == 1
    z = logits[None, :] if single else logits
    cls = np.atleast_1d(np.asarray(classes))
    if cls.shape != (z.shape[0],):
        raise ShapeError("one class index per row is required")
    if not np.issubdtype(cls.dtype, np.integer) or cls.min() < 0 or cls.max() >= z.shape[1]:
        raise IndexError(f"class index out of range for {z.shape[1]} classes")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(z.shape[0])
    loss = -log_probs[rows, cls].mean()
    grad = np.exp(log_probs)
    grad[rows, cls] -= 1.0
    grad /= z.shape[0]
    return float(loss), (grad[0] if single else grad)


# Adam ---------------------------------------------------------------------


@dataclass
class AdamState:
    m: list
    v: list
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_params(cls, params, **hyper):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **hyper)


def adam_step(params, grads, state):
    """One bias-corrected Adam update, applied in place.

    Returns ``(params, state)`` for convenience; both are the same objects
    that were passed in.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and Adam state must have the same length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != np.shape(g) or p.shape != m.shape:
            raise ShapeError(f"shape mismatch: param {p.shape}, grad {np.shape(g)}, moment {m.shape}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


@dataclass
class Trainer:
    """Adam bound to one or more nets; keeps their cache versions in sync."""

    nets: list
    state: AdamState = field(default=None)
    extra: list = field(default_factory=list)

    def __post_init__(self):
        if self.state is None:
            self.state = AdamState.for_params(self.params())

    @classmethod
    def create(cls, nets, extra=(), lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        trainer = cls(list(nets), None, list(extra))
        trainer.state = AdamState.for_params(trainer.params(), lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        return trainer

    def params(self):
        out = []
        for net in self.nets:
            out.extend(net.params())
        out.extend(self.extra)
        return out

    def step(self, grads):
        adam_step(self.params(), grads, self.state)
        for net in self.nets:
            net.mark_updated()
