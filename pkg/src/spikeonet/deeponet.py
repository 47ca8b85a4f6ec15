"""Un-stacked DeepONet with a spiking front-end on either the branch or the trunk.

The prediction for branch input ``y`` and trunk input ``x`` is
``sum_i alpha_i(y) * phi_i(x) + b``.  Spiking front-ends (encoder, LIF layer,
static synapse, spike count) have no parameters; they turn raw inputs into
fixed features once, and only the dense nets behind them are trained.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from spikeonet.encoding import IntervalGrid, encode_points, rate_encode
from spikeonet.membrane import LifConfig, LifMembrane, spike_count
from spikeonet.metrics import accuracy, l2_errors, savgol_smooth
from spikeonet.nn import DenseNet, ShapeError, Trainer, mse_loss
from spikeonet.synapse import SynapseWeights, static_apply

ENVELOPE_VERSION = "spikeonet-deeponet-1"
EVAL_SEED_OFFSET = 1_000_003


class DeepONetError(ValueError):
    pass


def combine(alpha, phi, bias=0.0):
    """``alpha @ phi + bias`` for latent vectors (or ``(n, p) x (m, p)`` matrices)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if alpha.shape[-1] != phi.shape[-1]:
        raise DeepONetError(f"latent sizes differ: {alpha.shape[-1]} vs {phi.shape[-1]}")
    if alpha.ndim == 1 and phi.ndim == 1:
        return float(alpha @ phi + bias)
    return np.atleast_2d(alpha) @ np.atleast_2d(phi).T + bias


# front-ends ---------------------------------------------------------------


@dataclass
class SpikingFrontEnd:
    """Encoder -> LIF -> static 1:1 synapse -> spike count / steps.

    ``encoder`` names a scheme from :mod:`spikeonet.encoding`.  For
    ``direct`` the repeated real values pass through a fixed ``gain`` before
    entering the membrane.  Holds no trainable parameters.
    """

    encoder: str
    n_t: int = 50
    lif: LifConfig = field(default_factory=LifConfig)
    method: str = "euler"
    seed: int = 0
    gain: float = 1.0
    precision: int = 32

    def n_params(self):
        return 0

    @property
    def stochastic(self):
        return self.encoder == "rate"

    def reseeded(self, seed):
        """Same front-end with a different encoder seed (a fresh rate-code draw)."""
        return SpikingFrontEnd(self.encoder, self.n_t, self.lif, self.method, seed, self.gain, self.precision)

    def steps(self):
        return self.precision if self.encoder == "float" else self.n_t

    def spikes(self, x_unit):
        """Membrane output spikes ``(time, n_points)`` for points in [0, 1]."""
        raw = encode_points(self.encoder, x_unit, self.n_t, self.seed, self.precision)
        current = raw * self.gain if self.encoder == "direct" else raw
        return LifMembrane(self.lif, self.method).respond(current)

    def features(self, x_unit):
        """``(n_points, 1)`` normalised spike counts."""
        out = self.spikes(x_unit)
        ones = SynapseWeights.static_ones(1, 1)
        counts = np.stack([spike_count(static_apply(ones, out[:, [k]]) > 0) for k in range(out.shape[1])])
        return counts.astype(np.float64) / self.steps()

    def describe(self):
        return {"encoder": self.encoder, "n_t": self.n_t, "lif": self.lif.to_dict(), "method": self.method,
                "seed": self.seed, "gain": self.gain, "precision": self.precision}

    @classmethod
    def from_description(cls, doc):
        doc = dict(doc)
        doc["lif"] = LifConfig.from_dict(doc["lif"])
        return cls(**doc)


@dataclass
class ImageFrontEnd:
    """Rate-coded image pixels -> LIF -> spike count / steps, one neuron per pixel."""

    n_t: int = 25
    lif: LifConfig = field(default_factory=LifConfig)
    method: str = "euler"
    seed: int = 0

    def n_params(self):
        return 0

    def features(self, images, chunk=500):
        flat = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
        out = np.empty_like(flat)
        membrane = LifMembrane(self.lif, self.method)
        rng = np.random.default_rng(self.seed)
        for start in range(0, len(flat), chunk):
            block = flat[start:start + chunk]
            spikes = rate_encode(block.ravel(), self.n_t, rng).data.reshape(self.n_t, *block.shape)
            out[start:start + chunk] = membrane.respond(spikes.transpose(1, 0, 2)).sum(axis=1)
        return out / self.n_t

    def describe(self):
        return {"kind": "image", "n_t": self.n_t, "lif": self.lif.to_dict(), "method": self.method,
                "seed": self.seed}


# the model ----------------------------------------------------------------


class DeepONetModel:
    """Branch and trunk dense nets with a shared latent width and a scalar bias."""

    def __init__(self, branch, trunk, bias=0.0, branch_frontend=None, trunk_frontend=None):
        if branch.output_dim != trunk.output_dim:
            raise DeepONetError(f"branch latent {branch.output_dim} != trunk latent {trunk.output_dim}")
        if branch_frontend is not None and trunk_frontend is not None:
            raise DeepONetError("only one of branch and trunk may carry a spiking front-end")
        self.branch = branch
        self.trunk = trunk
        self.bias = np.array([float(bias)])
        self.branch_frontend = branch_frontend
        self.trunk_frontend = trunk_frontend

    @property
    def p(self):
        return self.branch.output_dim

    def trainer(self, lr=1e-3):
        return Trainer.create([self.branch, self.trunk], extra=[self.bias], lr=lr)

    def predict(self, branch_features, trunk_features):
        """``(n_branch, n_trunk)`` matrix of outputs for every pairing."""
        alpha = self.branch(np.atleast_2d(branch_features))
        phi = self.trunk(np.atleast_2d(trunk_features))
        return combine(alpha, phi, self.bias[0])

    def loss_and_grads(self, branch_features, trunk_features, targets):
        """MSE over every (branch, trunk) pair and gradients in trainer order."""
        alpha, cache_b = self.branch.forward(branch_features)
        phi, cache_t = self.trunk.forward(trunk_features)
        pred = alpha @ phi.T + self.bias[0]
        loss, g = mse_loss(pred, targets)
        grads_b, _ = self.branch.backward(g @ phi, cache_b)
        grads_t, _ = self.trunk.backward(g.T @ alpha, cache_t)
        return loss, [*grads_b, *grads_t, np.array([g.sum()])]

    # serialisation

    def to_dict(self):
        return {
            "version": ENVELOPE_VERSION,
            "branch": self.branch.to_dict("branch"),
            "trunk": self.trunk.to_dict("trunk"),
            "bias": float(self.bias[0]),
            "frontend": {
                "branch": None if self.branch_frontend is None else self.branch_frontend.describe(),
                "trunk": None if self.trunk_frontend is None else self.trunk_frontend.describe(),
            },
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("version") != ENVELOPE_VERSION:
            raise DeepONetError(f"unsupported envelope version {doc.get('version')!r}")
        fe = doc.get("frontend", {})
        trunk_fe = fe.get("trunk")
        branch_fe = fe.get("branch")
        if branch_fe is not None:
            branch_fe = dict(branch_fe)
            branch_fe.pop("kind", None)
            branch_fe["lif"] = LifConfig.from_dict(branch_fe["lif"])
            branch_fe = ImageFrontEnd(**branch_fe)
        return cls(DenseNet.from_dict(doc["branch"]), DenseNet.from_dict(doc["trunk"]), doc["bias"],
                   branch_fe, None if trunk_fe is None else SpikingFrontEnd.from_description(trunk_fe))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def deeponet_forward(m, branch_in, trunk_in):
    """Scalar output for one branch feature vector and one trunk feature vector."""
    branch_in = np.asarray(branch_in, dtype=np.float64)
    trunk_in = np.asarray(trunk_in, dtype=np.float64)
    if branch_in.ndim != 1 or trunk_in.ndim != 1:
        raise ShapeError("deeponet_forward takes one branch and one trunk input vector")
    return combine(m.branch(branch_in), m.trunk(trunk_in), m.bias[0])


def _iterate(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


# regression -----------------------------------------------------------------


@dataclass
class RegressionResult:
    model: DeepONetModel
    history: list
    pred: np.ndarray
    truth: np.ndarray
    errors_raw: np.ndarray
    errors_smoothed: np.ndarray


def build_regression_model(n_x, frontend, branch_widths=(30, 30), trunk_widths=(30, 30), seed=0):
    rng = np.random.default_rng(seed)
    trunk_dim = 1
    branch = DenseNet.build(n_x, list(branch_widths), "relu", "identity", rng)
    trunk = DenseNet.build(trunk_dim, list(trunk_widths), "relu", "relu", rng)
    return DeepONetModel(branch, trunk, 0.0, None, frontend)


def train_regression(model, f_train, u_train, grid, epochs=500, lr=1e-3, batch_size=32, seed=0,
                     resample=True, on_epoch=None):
    """Fit ``u = G(f)`` with the trunk seeing spike features of the grid points.

    Every function is evaluated at all ``n_x`` trunk points per step.  With
    ``resample`` a stochastic (rate) trunk code gets a fresh draw each epoch.
    Returns the loss history.
    """
    f_train = np.asarray(f_train, dtype=np.float64)
    u_train = np.asarray(u_train, dtype=np.float64)
    if f_train.shape[0] == 0:
        raise DeepONetError("empty training set")
    if f_train.shape[1] != grid.n_x or u_train.shape != f_train.shape:
        raise DeepONetError("function samples do not match the grid")
    if model.trunk_frontend is None:
        raise DeepONetError("regression needs a spiking trunk front-end")
    fe = model.trunk_frontend
    x_unit = grid.normalized()
    trunk_x = fe.features(x_unit)
    trainer = model.trainer(lr)
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        if fe.stochastic and resample and epoch > 0:
            # a stochastic code is redrawn every epoch, never reusing the evaluation draw
            trunk_x = fe.reseeded(fe.seed + 1 + epoch).features(x_unit)
        total = 0.0
        for idx in _iterate(len(f_train), batch_size, rng):
            loss, grads = model.loss_and_grads(f_train[idx], trunk_x, u_train[idx])
            trainer.step(grads)
            total += loss * len(idx)
        history.append(total / len(f_train))
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    return history


def evaluate_regression(model, f, u, grid, window=51, polyorder=3):
    """Per-sample L2 errors of raw and Savitzky-Golay smoothed predictions."""
    fe = model.trunk_frontend
    if fe.stochastic:
        # held-out draw: training used seeds fe.seed .. fe.seed + epochs
        fe = fe.reseeded(fe.seed + EVAL_SEED_OFFSET)
    trunk_x = fe.features(grid.normalized())
    pred = model.predict(f, trunk_x)
    smooth = savgol_smooth(pred, window, polyorder)
    return pred, l2_errors(pred, u), l2_errors(smooth, u)


# classification ---------------------------------------------------------------


def build_classification_model(frontend, branch_widths=(512, 250, 50), trunk_widths=(50, 50), seed=0):
    rng = np.random.default_rng(seed)
    branch = DenseNet.build(784, list(branch_widths), "relu", "identity", rng)
    trunk = DenseNet.build(1, list(trunk_widths), "relu", "relu", rng)
    return DeepONetModel(branch, trunk, 0.0, frontend, None)


DIGITS = (np.arange(10, dtype=np.float64) / 9.0)[:, None]


def kronecker_targets(labels):
    labels = np.asarray(labels)
    return (labels[:, None] == np.arange(10)[None, :]).astype(np.float64)


def classify(model, branch_features):
    """Predicted digit: argmax over the ten trunk evaluations."""
    return np.argmax(model.predict(branch_features, DIGITS), axis=1)


def train_classification(model, features, labels, epochs=10, lr=1e-3, batch_size=64, seed=0,
                         on_epoch=None):
    """MSE against the Kronecker delta over the ten trunk digits; returns the loss history."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if len(features) == 0:
        raise DeepONetError("empty training set")
    targets = kronecker_targets(labels)
    trainer = model.trainer(lr)
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        total = 0.0
        for idx in _iterate(len(features), batch_size, rng):
            loss, grads = model.loss_and_grads(features[idx], DIGITS, targets[idx])
            trainer.step(grads)
            total += loss * len(idx)
        history.append(total / len(features))
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    return history


def classification_accuracy(model, features, labels):
    return accuracy(classify(model, features), np.asarray(labels))


# naive single-function regression -------------------------------------------------


@dataclass
class NaiveResult:
    net: DenseNet
    pred: np.ndarray
    l2: float
    history: list


def naive_features(grid, frontend):
    """Spike count per grid point as one ``n_x`` input vector."""
    return frontend.features(grid.normalized())[:, 0]


def naive_regression(target, grid, frontend, epochs=2000, lr=1e-3, seed=0, on_epoch=None):
    """Fit one function, all ``n_x`` values at once, from the spike counts of its grid.

    The net is a ReLU dense layer of width ``n_x`` followed by a linear
    ``n_x -> n_x`` readout (the readout lets negative targets be reached).
    """
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (grid.n_x,):
        raise DeepONetError("target must have one value per grid point")
    x = naive_features(grid, frontend)
    net = DenseNet.build(grid.n_x, [grid.n_x, grid.n_x], "relu", "identity", seed)
    # start the hidden layer in its active region so the constant input cannot leave it dead
    net.layers[0].biases[:] = 0.1
    trainer = Trainer.create([net], lr=lr)
    history = []
    for epoch in range(epochs):
        out, cache = net.forward(x[None, :])
        loss, g = mse_loss(out, target[None, :])
        grads, _ = net.backward(g, cache)
        trainer.step(grads)
        history.append(loss)
        if on_epoch is not None:
            on_epoch(epoch, loss)
    pred = net(x)
    d = pred - target
    return NaiveResult(net, pred, float(d @ d), history)
