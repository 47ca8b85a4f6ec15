"""Synapses: static all-ones wiring and spike-timing-dependent plasticity.

Backprop-trained synapses are ordinary :class:`spikeonet.nn.DenseLayer`
objects; nothing here computes gradients.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from spikeonet import kernels
from spikeonet.encoding import SpikeTrain
from spikeonet.nn import DenseLayer


class SynapseError(ValueError):
    pass


class ImmutableSynapseError(SynapseError):
    pass


class SynapseWeights:
    """Weight matrix ``w[i, j]`` from pre-neuron ``i`` to post-neuron ``j``.

    ``clamp=(w_min, w_max)`` bounds every STDP update; it is off by default.
    """

    def __init__(self, w, static=False, clamp=None):
        w = np.array(w, dtype=np.float64)
        if w.ndim != 2:
            raise SynapseError("synapse weights form a (pre, post) matrix")
        if not np.isfinite(w).all():
            raise SynapseError("synapse weights must be finite")
        if static and not np.all(w == 1.0):
            raise SynapseError("a static synapse has all weights equal to 1")
        if clamp is not None and not clamp[0] <= clamp[1]:
            raise SynapseError("clamp needs w_min <= w_max")
        self._w = w
        self.static = static
        self.clamp = clamp
        if static:
            self._w.setflags(write=False)

    @classmethod
    def static_ones(cls, n_pre, n_post):
        return cls(np.ones((n_pre, n_post)), static=True)

    @property
    def w(self):
        return self._w

    @property
    def shape(self):
        return self._w.shape

    def copy(self):
        return SynapseWeights(self._w.copy(), self.static, self.clamp)

    def _replace(self, new_w):
        if self.static:
            raise ImmutableSynapseError("static synapse weights cannot change")
        if self.clamp is not None:
            new_w = np.clip(new_w, *self.clamp)
        return SynapseWeights(new_w, False, self.clamp)


@dataclass(frozen=True)
class StdpParams:
    a_pre: float = 0.01
    a_post: float = 0.01
    tau: float = 20.0

    def __post_init__(self):
        if not (self.a_pre > 0 and self.a_post > 0 and self.tau > 0):
            raise SynapseError("a_pre, a_post and tau must be positive")


def stdp_delta(dt_ij, p):
    """Weight change for a post-minus-pre spike time difference ``dt_ij``."""
    if dt_ij >= 0:
        return p.a_pre * math.exp(-dt_ij / p.tau)
    return -p.a_post * math.exp(dt_ij / p.tau)


def _train(spikes):
    return spikes.data if isinstance(spikes, SpikeTrain) else np.asarray(spikes, dtype=np.uint8)


def _dt_of(*trains):
    for t in trains:
        if isinstance(t, SpikeTrain):
            return t.dt
    return 1.0


def stdp_update(pre_spikes, post_spikes, p, backend=None):
    """Summed all-pairs STDP change, shape ``(n_pre, n_post)``."""
    pre, post = _train(pre_spikes), _train(post_spikes)
    if pre.shape[0] != post.shape[0]:
        raise SynapseError(f"pre and post trains differ in length ({pre.shape[0]} vs {post.shape[0]})")
    impl = kernels if backend is None else kernels.load_backend(backend)
    return impl.stdp_pairs(pre, post, p.a_pre, p.a_post, p.tau, _dt_of(pre_spikes, post_spikes))


def stdp_apply(w, pre_spikes, post_spikes, p, backend=None):
    """Return new weights after one STDP pass over a pre/post pair of trains."""
    delta = stdp_update(pre_spikes, post_spikes, p, backend)
    if delta.shape != w.shape:
        raise SynapseError(f"update {delta.shape} does not match weights {w.shape}")
    return w._replace(w.w + delta)


def stdp_apply_partitioned(w, batches, p, backend=None, max_workers=None):
    """STDP over batches of ``(pre, post)`` samples, batches processed concurrently.

    Each batch is a sequence of sample pairs.  Per-sample deltas are added to
    the weights in batch order and then sample order, so any split of the
    samples gives a result bit-identical to applying :func:`stdp_apply` to
    them one after another.
    """
    batches = [list(b) for b in batches]
    for batch in batches:
        for pre, post in batch:
            if _train(pre).shape[1] != w.shape[0] or _train(post).shape[1] != w.shape[1]:
                raise SynapseError("a sample does not match the synapse shape")

    def work(batch):
        return [stdp_update(pre, post, p, backend) for pre, post in batch]

    if max_workers == 1 or len(batches) <= 1:
        per_batch = [work(b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            per_batch = list(pool.map(work, batches))
    out = w
    for deltas in per_batch:
        for delta in deltas:
            out = out._replace(out.w + delta)
    return out


def static_apply(w, spikes):
    """Propagate spikes through a static synapse: ``out[t] = spikes[t] @ w``."""
    if not w.static:
        raise SynapseError("static_apply expects a static (all-ones, immutable) synapse")
    data = _train(spikes)
    if data.shape[1] != w.shape[0]:
        raise SynapseError(f"{data.shape[1]} input neurons for a synapse with {w.shape[0]} inputs")
    return data.astype(np.float64) @ w.w


def as_dense_layer(w):
    """The equivalent frozen identity-activation dense layer."""
    return DenseLayer(w.w.T.copy(), np.zeros(w.shape[1]), "identity")
