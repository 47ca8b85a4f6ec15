"""Leaky integrate-and-fire membranes.

Two solvers share one threshold/reset policy:

* :func:`lif_euler_run` -- the recurrence ``V <- beta * V + (dt / C) * I``.
* :func:`lif_integral_run` -- the integral solution restarted at every reset,
  with the convolution integral evaluated by the composite trapezoid rule.

Neurons are independent, so a batch of samples can be folded into the neuron
axis of the ``(time, neuron)`` input.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from spikeonet import kernels
from spikeonet.encoding import SpikeTrain

RESETS = {"to_rest": kernels.RESET_TO_REST, "subtract_threshold": kernels.RESET_SUBTRACT}
REFRACTORY_KINDS = {
    "none": kernels.REFRACTORY_NONE,
    "double_threshold": kernels.REFRACTORY_DOUBLE,
    "raised_threshold": kernels.REFRACTORY_RAISED,
}


class MembraneError(ValueError):
    pass


@dataclass(frozen=True)
class Refractory:
    """Post-spike behaviour.

    ``double_threshold`` drops the voltage by ``2 * v_thresh`` after a spike;
    ``raised_threshold`` adds ``amount`` to the threshold for ``steps`` steps.
    """

    kind: str = "none"
    steps: int = 0
    amount: float = 0.0

    def __post_init__(self):
        if self.kind not in REFRACTORY_KINDS:
            raise MembraneError(f"unknown refractory kind {self.kind!r}")
        if self.steps < 0:
            raise MembraneError("refractory steps must be non-negative")


@dataclass(frozen=True)
class LifConfig:
    # tau = r * c = 20 (beta = 0.95 at dt = 1) and dt / c = 0.625: a lone
    # unit spike stays below threshold and leaks away, two spikes in quick
    # succession fire.
    r: float = 12.5
    c: float = 1.6
    v_rest: float = 0.0
    v_thresh: float = 1.0
    dt: float = 1.0
    reset: str = "to_rest"
    refractory: Refractory = field(default_factory=Refractory)

    def __post_init__(self):
        if self.r <= 0 or self.c <= 0 or self.dt <= 0:
            raise MembraneError("r, c and dt must be positive")
        if not 0.0 < self.beta < 1.0:
            raise MembraneError(f"beta = 1 - dt/tau = {self.beta} is outside (0, 1)")
        if not self.v_thresh > self.v_rest:
            raise MembraneError("v_thresh must exceed v_rest")
        if self.reset not in RESETS:
            raise MembraneError(f"unknown reset {self.reset!r}")
        if isinstance(self.refractory, dict):
            object.__setattr__(self, "refractory", Refractory(**self.refractory))

    @property
    def tau(self):
        return self.r * self.c

    @property
    def beta(self):
        return 1.0 - self.dt / self.tau

    @property
    def injection_scale(self):
        return self.dt / self.c

    @classmethod
    def from_beta(cls, beta, dt=1.0, c=1.0, **kw):
        """Config whose ``r`` is chosen so that ``1 - dt / (r * c) == beta``."""
        tau = dt / (1.0 - beta)
        return cls(r=tau / c, c=c, dt=dt, **kw)

    def with_dt(self, dt):
        """Same physical membrane sampled with a different step."""
        return LifConfig(self.r, self.c, self.v_rest, self.v_thresh, dt, self.reset, self.refractory)

    def to_dict(self):
        return {
            "r": self.r, "c": self.c, "v_rest": self.v_rest, "v_thresh": self.v_thresh,
            "dt": self.dt, "reset": self.reset,
            "refractory": {"kind": self.refractory.kind, "steps": self.refractory.steps,
                           "amount": self.refractory.amount},
        }

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        if "refractory" in doc:
            doc["refractory"] = Refractory(**doc["refractory"])
        return cls(**doc)

    def _kernel_args(self):
        ref = self.refractory
        return (RESETS[self.reset], REFRACTORY_KINDS[ref.kind], int(ref.steps), float(ref.amount))


@dataclass
class MembraneTrace:
    """Voltages before reset (what is compared to the threshold), after reset, and spikes."""

    voltages: np.ndarray
    post_reset: np.ndarray
    spikes: SpikeTrain

    def to_csv(self, path):
        """Long-format CSV: one ``time,neuron,voltage,spike`` row per sample."""
        n_t, n = self.voltages.shape
        dt = self.spikes.dt
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "neuron", "voltage", "spike"])
            for k in range(n_t):
                for i in range(n):
                    writer.writerow([repr(k * dt), i, repr(float(self.voltages[k, i])),
                                     int(self.spikes.data[k, i])])


def _as_current(input_current):
    data = input_current.data if isinstance(input_current, SpikeTrain) else input_current
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise MembraneError(f"input current must be a (time, neuron) matrix, got {arr.shape}")
    return arr


def lif_euler_run(cfg, input_current, backend=None):
    """Forward-Euler LIF; requires ``v_rest == 0``.

    Row ``k`` is the state after the ``k``-th injection ``(dt / C) * I[k]``,
    starting from ``V = 0``.
    """
    if cfg.v_rest != 0.0:
        raise MembraneError("the Euler recurrence assumes v_rest == 0; use lif_integral_run")
    current = _as_current(input_current)
    impl = kernels if backend is None else kernels.load_backend(backend)
    pre, post, spikes = impl.lif_euler(cfg.injection_scale * current, cfg.beta, 0.0, cfg.v_rest,
                                       cfg.v_thresh, *cfg._kernel_args())
    return MembraneTrace(pre, post, SpikeTrain(spikes, cfg.dt))


def lif_integral_run(cfg, input_current, backend=None):
    """LIF from the integral solution; row ``k`` is ``V(k * dt)``.

    After a reset at ``t0`` the voltage is
    ``V0 * exp(-(t - t0)/tau) + (R/tau) * int_0^{t-t0} exp(-s/tau) I(t - s) ds``
    with ``V0`` the post-reset voltage (``v_rest`` at the start).
    """
    current = _as_current(input_current)
    impl = kernels if backend is None else kernels.load_backend(backend)
    pre, post, spikes = impl.lif_integral(current, cfg.dt, cfg.tau, cfg.c, cfg.v_rest,
                                          cfg.v_thresh, *cfg._kernel_args())
    return MembraneTrace(pre, post, SpikeTrain(spikes, cfg.dt))


def spike_count(trace):
    """Spikes per neuron summed over time."""
    if isinstance(trace, MembraneTrace):
        data = trace.spikes.data
    elif isinstance(trace, SpikeTrain):
        data = trace.data
    else:
        data = np.asarray(trace)
    return data.sum(axis=0, dtype=np.int64)


# interchangeable membrane layers ------------------------------------------


def _fold(inputs):
    """``(batch, time, neuron)`` -> ``(time, batch * neuron)`` and back."""
    arr = np.asarray(inputs, dtype=np.float64)
    if arr.ndim == 2:
        return arr, None
    if arr.ndim != 3:
        raise MembraneError(f"expected (time, neuron) or (batch, time, neuron), got {arr.shape}")
    b, n_t, n = arr.shape
    return arr.transpose(1, 0, 2).reshape(n_t, b * n), (b, n_t, n)


def _unfold(out, shape):
    if shape is None:
        return out
    b, n_t, n = shape
    return out.reshape(n_t, b, n).transpose(1, 0, 2)


class NoMembrane:
    """Pass-through layer: the input drives the next layer unchanged."""

    name = "no-membrane"

    def respond(self, inputs):
        return np.asarray(inputs, dtype=np.float64)


class LifMembrane:
    """LIF layer with either solver."""

    def __init__(self, cfg=None, method="euler", backend=None):
        if method not in ("euler", "integral"):
            raise MembraneError(f"unknown LIF method {method!r}")
        self.cfg = cfg or LifConfig()
        self.method = method
        self.backend = backend
        self.name = "lif" if method == "euler" else "lif-integral"

    def run(self, inputs):
        fn = lif_euler_run if self.method == "euler" else lif_integral_run
        return fn(self.cfg, inputs, self.backend)

    def respond(self, inputs):
        """Output spikes for a ``(time, neuron)`` matrix or a ``(batch, time, neuron)`` stack."""
        folded, shape = _fold(inputs)
        return _unfold(self.run(folded).spikes.data, shape)
