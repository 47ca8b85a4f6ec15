import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikeonet.encoding import SpikeTrain
from spikeonet.nn import DenseNet
from spikeonet.synapse import (
    ImmutableSynapseError,
    StdpParams,
    SynapseError,
    SynapseWeights,
    as_dense_layer,
    static_apply,
    stdp_apply,
    stdp_apply_partitioned,
    stdp_delta,
    stdp_update,
)

P = StdpParams(a_pre=0.02, a_post=0.015, tau=4.0)


def pair_oracle(pre, post, p, dt=1.0):
    """All-pairs sum written as explicit loops."""
    n_t, n_pre = pre.shape
    n_post = post.shape[1]
    out = np.zeros((n_pre, n_post))
    for i in range(n_pre):
        for j in range(n_post):
            for a in range(n_t):
                if not pre[a, i]:
                    continue
                for b in range(n_t):
                    if post[b, j]:
                        out[i, j] += stdp_delta((b - a) * dt, p)
    return out


def test_delta_values():
    assert stdp_delta(0.0, P) == P.a_pre
    assert stdp_delta(P.tau, P) == pytest.approx(P.a_pre * math.exp(-1))
    assert stdp_delta(-P.tau, P) == pytest.approx(-P.a_post * math.exp(-1))


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 50), st.floats(1e-3, 50))
def test_delta_monotone(a, b):
    lo, hi = sorted((a, b))
    assert 0 < stdp_delta(hi, P) <= stdp_delta(lo, P)
    assert stdp_delta(-lo, P) <= stdp_delta(-hi, P) < 0


def test_no_spikes_no_change():
    w = SynapseWeights(np.full((2, 3), 0.5))
    out = stdp_apply(w, np.zeros((10, 2)), np.zeros((10, 3)), P)
    np.testing.assert_array_equal(out.w, w.w)


def test_single_pair_both_orders():
    p = StdpParams(0.1, 0.2, 1.0)
    pre = np.array([[1], [0]])
    post = np.array([[0], [1]])
    w = SynapseWeights([[0.0]])
    assert stdp_apply(w, pre, post, p).w[0, 0] == pytest.approx(0.1 * math.exp(-1))
    assert stdp_apply(w, post, pre, p).w[0, 0] == pytest.approx(-0.2 * math.exp(-1))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(1, 4), st.integers(1, 4), st.integers(0, 10_000))
def test_update_matches_pair_loop(n_t, n_pre, n_post, seed):
    rng = np.random.default_rng(seed)
    pre = rng.integers(0, 2, size=(n_t, n_pre))
    post = rng.integers(0, 2, size=(n_t, n_post))
    np.testing.assert_allclose(stdp_update(pre, post, P), pair_oracle(pre, post, P), rtol=1e-12, atol=1e-15)


def test_dt_scales_time_differences():
    pre = SpikeTrain(np.array([[1], [0], [0]]), dt=0.5)
    post = SpikeTrain(np.array([[0], [0], [1]]), dt=0.5)
    assert stdp_update(pre, post, P)[0, 0] == pytest.approx(P.a_pre * math.exp(-1.0 / P.tau))


def test_additivity_over_samples():
    rng = np.random.default_rng(3)
    samples = [(rng.integers(0, 2, (8, 3)), rng.integers(0, 2, (8, 2))) for _ in range(2)]
    w = SynapseWeights(np.zeros((3, 2)))
    both = stdp_apply_partitioned(w, [[samples[0]], [samples[1]]], P)
    total = stdp_update(*samples[0], P) + stdp_update(*samples[1], P)
    np.testing.assert_array_equal(both.w, total)


def test_partitioned_equals_sequential_bitwise():
    rng = np.random.default_rng(11)
    samples = [(rng.integers(0, 2, (15, 4)), rng.integers(0, 2, (15, 3))) for _ in range(12)]
    w0 = SynapseWeights(rng.normal(size=(4, 3)))
    seq = w0
    for pre, post in samples:
        seq = stdp_apply(seq, pre, post, P)
    cuts = sorted(rng.choice(np.arange(1, 12), size=3, replace=False))
    batches = [samples[a:b] for a, b in zip([0, *cuts], [*cuts, 12])]
    assert len(batches) == 4
    par = stdp_apply_partitioned(w0, batches, P, max_workers=4)
    np.testing.assert_array_equal(par.w, seq.w)
    one = stdp_apply_partitioned(w0, [samples], P)
    np.testing.assert_array_equal(one.w, seq.w)


def test_clamp_bounds_weights():
    w = SynapseWeights([[0.0]], clamp=(-0.01, 0.01))
    pre = np.ones((5, 1))
    out = stdp_apply(w, pre, pre, StdpParams(1.0, 0.1, 5.0))
    assert out.w[0, 0] == 0.01


def test_static_synapse_is_immutable():
    w = SynapseWeights.static_ones(2, 2)
    with pytest.raises(ImmutableSynapseError):
        stdp_apply(w, np.ones((3, 2)), np.ones((3, 2)), P)
    with pytest.raises(ValueError):
        w.w[0, 0] = 3.0
    with pytest.raises(SynapseError):
        SynapseWeights([[1.0, 2.0]], static=True)


def test_static_one_to_one():
    spikes = np.random.default_rng(0).integers(0, 2, (20, 1))
    np.testing.assert_array_equal(static_apply(SynapseWeights.static_ones(1, 1), spikes), spikes)


def test_static_fan_in_counts():
    spikes = np.random.default_rng(1).integers(0, 2, (20, 3))
    out = static_apply(SynapseWeights.static_ones(3, 1), spikes)
    np.testing.assert_array_equal(out[:, 0], spikes.sum(axis=1))


def test_static_matches_dense_layer():
    w = SynapseWeights.static_ones(4, 3)
    spikes = np.random.default_rng(2).integers(0, 2, (9, 4))
    dense = DenseNet([as_dense_layer(w)])
    np.testing.assert_array_equal(static_apply(w, spikes), dense(spikes.astype(float)))


def test_static_apply_needs_static():
    with pytest.raises(SynapseError):
        static_apply(SynapseWeights(np.ones((1, 1))), np.ones((2, 1)))
