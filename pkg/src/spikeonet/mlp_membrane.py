"""A dense network trained offline to reproduce a LIF layer's spikes-in/spikes-out map.

The emulator reads a whole ``(n_t, n_neurons)`` spike window, flattened
time-major, and writes a window of the same shape.  Training matches the
last layer's linear output to the 0/1 targets; inference thresholds it.
Inference runs in single precision: inputs and outputs are binary, so only
pre-activations within float32 rounding of the threshold can flip.
"""

import json

import numpy as np

from spikeonet.encoding import SpikeTrain, rate_encode
from spikeonet.membrane import LifConfig, lif_euler_run, lif_integral_run
from spikeonet.nn import DenseLayer, DenseNet, Trainer, mse_loss

ROLE = "mlp-membrane"
HIDDEN = (100, 100, 100)


class EmulatorError(ValueError):
    pass


class MembraneEmulator:
    """Three hidden ReLU layers of 100 units and an output layer with a Heaviside step.

    For the default window of 50 steps x 2 neurons the output layer also has
    100 units, giving four dense layers of width 100.
    """

    name = "mlp-membrane"

    def __init__(self, net, n_t, n_neurons, threshold=0.5):
        window = n_t * n_neurons
        if net.input_dim != window or net.output_dim != window:
            raise EmulatorError(f"net maps {net.input_dim}->{net.output_dim}, window is {window}")
        if net.widths[:-1] != list(HIDDEN):
            raise EmulatorError(f"hidden widths must be {list(HIDDEN)}, got {net.widths[:-1]}")
        last = net.layers[-1]
        if last.activation != "heaviside":
            raise EmulatorError("the emulator must end in a Heaviside layer")
        last.threshold = threshold
        self.net = net
        self.n_t = n_t
        self.n_neurons = n_neurons
        self.threshold = threshold

    def _inference_weights(self):
        # single-precision copies; cheap next to any realistic batch
        return [(l.weights.T.astype(np.float32), l.biases.astype(np.float32)) for l in self.net.layers]

    @classmethod
    def build(cls, n_t=50, n_neurons=2, rng=None, threshold=0.5):
        window = n_t * n_neurons
        net = DenseNet.build(window, [*HIDDEN, window], "relu", "heaviside", rng)
        return cls(net, n_t, n_neurons, threshold)

    @property
    def window(self):
        return self.n_t * self.n_neurons

    def training_view(self):
        """A net sharing this emulator's parameters whose last layer is linear."""
        layers = list(self.net.layers)
        last = layers[-1]
        layers[-1] = DenseLayer(last.weights, last.biases, "identity")
        return DenseNet(layers)

    def respond(self, inputs):
        """Membrane interface: ``(n_t, n)`` or ``(batch, n_t, n)`` spikes in, same shape out."""
        return emulate(self, inputs)

    # checkpoints

    def to_dict(self):
        doc = self.net.to_dict(ROLE)
        doc["window"] = {"n_t": self.n_t, "n_neurons": self.n_neurons, "threshold": self.threshold}
        return doc

    @classmethod
    def from_dict(cls, doc):
        if doc.get("role") != ROLE:
            raise EmulatorError(f"checkpoint role is {doc.get('role')!r}, not {ROLE!r}")
        w = doc["window"]
        return cls(DenseNet.from_dict(doc), w["n_t"], w["n_neurons"], w["threshold"])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def emulate(e, spikes_in):
    """Binary output window(s) for input window(s)."""
    data = spikes_in.data if isinstance(spikes_in, SpikeTrain) else np.asarray(spikes_in)
    single = data.ndim == 2
    batch = data[None] if single else data
    if batch.ndim != 3 or batch.shape[1:] != (e.n_t, e.n_neurons):
        raise EmulatorError(f"expected windows of shape ({e.n_t}, {e.n_neurons}), got {data.shape}")
    h = batch.reshape(batch.shape[0], -1).astype(np.float32)
    layers = e._inference_weights()
    for w, b in layers[:-1]:
        h = h @ w
        h += b
        np.maximum(h, 0.0, out=h)
    w, b = layers[-1]
    h = h @ w
    h += b
    out = (h >= np.float32(e.threshold)).view(np.uint8).reshape(batch.shape)
    return out[0] if single else out


def generate_membrane_dataset(source, spike_inputs, cfg=None, backend=None):
    """Pair each input window with the chosen LIF solver's output spikes.

    ``source`` is ``"euler"`` or ``"integral"``; returns ``(inputs, targets)``
    as ``(samples, n_t * n)`` uint8 arrays.
    """
    cfg = cfg or LifConfig()
    runner = {"euler": lif_euler_run, "integral": lif_integral_run}.get(source)
    if runner is None:
        raise EmulatorError(f"unknown LIF source {source!r}")
    windows = np.stack([s.data if isinstance(s, SpikeTrain) else np.asarray(s) for s in spike_inputs])
    if windows.ndim != 3:
        raise EmulatorError("spike inputs must be equally shaped (time, neuron) windows")
    if not np.isin(windows, (0, 1)).all():
        raise EmulatorError("spike inputs must be binary")
    s, n_t, n = windows.shape
    folded = windows.transpose(1, 0, 2).reshape(n_t, s * n)
    out = runner(cfg, folded, backend).spikes.data.reshape(n_t, s, n).transpose(1, 0, 2)
    return windows.reshape(s, -1).astype(np.uint8), np.ascontiguousarray(out).reshape(s, -1)


def mnist_windows(pixels, n_windows, n_t=50, n_neurons=2, rng=None):
    """Rate-encoded windows built from randomly chosen pixels of MNIST images.

    Each window takes ``n_neurons`` pixels of one random image and draws an
    ``n_t``-step Bernoulli train for each.
    """
    rng = np.random.default_rng(rng)
    flat = np.asarray(pixels, dtype=np.float64).reshape(len(pixels), -1)
    img = rng.integers(0, flat.shape[0], size=n_windows)
    pix = rng.integers(0, flat.shape[1], size=(n_windows, n_neurons))
    values = flat[img[:, None], pix]
    train = rate_encode(values.ravel(), n_t, rng).data
    return train.reshape(n_t, n_windows, n_neurons).transpose(1, 0, 2)


def train_emulator(dataset, epochs=30, lr=1e-3, batch_size=128, rng=None, n_t=None, n_neurons=None,
                   emulator=None, on_epoch=None):
    """Fit an emulator to ``(inputs, targets)``; returns ``(emulator, loss_history)``.

    ``n_t``/``n_neurons`` default to a 50-step window split evenly across the
    window size.
    """
    inputs, targets = (np.asarray(a, dtype=np.float64) for a in dataset)
    if inputs.shape[0] == 0:
        raise EmulatorError("cannot train on an empty dataset")
    if inputs.shape != targets.shape:
        raise EmulatorError("inputs and targets must have the same shape")
    rng = np.random.default_rng(rng)
    if emulator is None:
        window = inputs.shape[1]
        if n_t is None:
            n_t = 50 if n_neurons is None else window // n_neurons
        n_neurons = window // n_t if n_neurons is None else n_neurons
        if n_t * n_neurons != window:
            raise EmulatorError(f"window {window} is not {n_t} x {n_neurons}")
        emulator = MembraneEmulator.build(n_t, n_neurons, rng)
    net = emulator.training_view()
    trainer = Trainer.create([net], lr=lr)
    history = []
    n = inputs.shape[0]
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            out, cache = net.forward(inputs[idx])
            loss, grad = mse_loss(out, targets[idx])
            grads, _ = net.backward(grad, cache)
            trainer.step(grads)
            total += loss * len(idx)
        history.append(total / n)
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    emulator.net.mark_updated()
    return emulator, history


def bit_agreement(e, inputs, targets):
    """Fraction of output bits where the emulator matches the targets."""
    inputs = np.asarray(inputs)
    pred = emulate(e, inputs.reshape(-1, e.n_t, e.n_neurons)).reshape(inputs.shape[0], -1)
    return float(np.mean(pred == np.asarray(targets)))
