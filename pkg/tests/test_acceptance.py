"""End-to-end acceptance checks, one test per criterion.

Each experiment runs once at its default configuration into a temporary
directory. Thresholds are fixed here and must not be relaxed to make a run
pass. Run with ``pytest -m acceptance -v``.
"""

import csv
import math
import time

import numpy as np
import pytest

from spikeonet import config, data
from spikeonet.encoding import (
    IntervalGrid,
    float_bits,
    float_decode,
    float_encode,
    latency_encode,
    lower_triangle_encode,
    rate_decode,
    rate_encode,
)
from spikeonet.experiments import run_experiment
from spikeonet.membrane import LifConfig, lif_euler_run, lif_integral_run
from spikeonet.metrics import savgol_kernel, savgol_smooth
from spikeonet.nn import DenseNet, mse_loss
from spikeonet.synapse import StdpParams, SynapseWeights, stdp_apply, stdp_apply_partitioned, stdp_delta, stdp_update

pytestmark = pytest.mark.acceptance


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def run_default(tmp_path_factory):
    cache = {}

    def go(name):
        if name not in cache:
            out = tmp_path_factory.mktemp(name)
            cache[name] = (run_experiment(config.resolve(name), out), out)
        return cache[name]

    return go


def test_criterion_1_encoding_ordering(run_default):
    report, out = run_default("compare-encodings")
    table = {r["encoding"]: float(r["mean_l2"]) for r in rows(out / "metrics.csv")}
    print("mean test L2 (smoothed):", table)
    lt, lt10 = table["Lower triangular"], table["Lower triangular and 10x time steps"]
    direct, rate = table["Direct encoding"], table["Rate"]
    assert report["runtime_s"] < 30 * 60
    assert lt <= 0.15
    assert lt10 <= 0.02
    assert lt10 < lt < direct < rate, "ordering LTx10 < LT < direct < rate violated"


def test_criterion_2_naive_regression(run_default):
    report, out = run_default("naive-regression")
    got = rows(out / "metrics.csv")
    print([(r["function"], r["noise_sigma"], r["l2"]) for r in got])
    assert {r["function"] for r in got} == {"step", "square", "sin_ode"}
    assert report["runtime_s"] < 5 * 60
    for r in got:
        limit = 0.2 if float(r["noise_sigma"]) == 0.0 else 0.25
        assert float(r["l2"]) <= limit, r


def test_criterion_3_membrane_backends(run_default):
    report, out = run_default("mlp-membrane")
    err = {r["membrane"]: float(r["mean_l2"]) for r in rows(out / "metrics.csv")}
    timing = {(r["membrane"], r["kernels"]): float(r["ms_per_sample"]) for r in rows(out / "timing.csv")}
    print("errors:", err, "timing:", timing)
    assert report["runtime_s"] < 20 * 60
    lif_ms = timing[("LIF", report["kernel_backend"])]
    assert timing[("MLP-membrane", "numpy")] < lif_ms
    assert err["LIF"] <= 1.2 * err["MLP-membrane"], "LIF error above MLP-membrane"
    assert err["MLP-membrane"] <= 1.2 * err["No membrane"], "MLP-membrane error above no-membrane"


def test_criterion_4_mnist(run_default):
    report, out = run_default("mnist-classification")
    (row,) = rows(out / "metrics.csv")
    print(row)
    assert int(row["n_t"]) == 25
    assert report["runtime_s"] < 30 * 60
    assert float(row["test_accuracy"]) >= 0.90


# criterion 5: property suites ---------------------------------------------------------------


def _numeric(net, x, y, eps=1e-6):
    out = []
    for p in net.params():
        g = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + eps
            lp = mse_loss(net(x), y)[0]
            p[i] = old - eps
            lm = mse_loss(net(x), y)[0]
            p[i] = old
            g[i] = (lp - lm) / (2 * eps)
        out.append(g)
    return out


def check_gradients():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        widths = [int(w) for w in rng.integers(1, 6, size=int(rng.integers(1, 4)))]
        net = DenseNet.build(int(rng.integers(1, 5)), widths, "relu", "identity", rng)
        for layer in net.layers:
            layer.biases[:] = rng.normal(size=layer.biases.shape)
        x = rng.normal(size=(4, net.input_dim))
        y = rng.normal(size=(4, net.output_dim))
        o, cache = net.forward(x)
        grads, _ = net.backward(mse_loss(o, y)[1], cache)
        for a, n in zip(grads, _numeric(net, x, y)):
            np.testing.assert_allclose(a, n, rtol=1e-4, atol=1e-7)


def check_float_roundtrip():
    assert "".join(map(str, float_bits(-25.0313))) == "11000001110010000100000000011010"
    words = np.random.default_rng(5).integers(0, 2**32, size=4000, dtype=np.uint64).astype(np.uint32)
    vals = words.view(np.float32)
    vals = vals[np.isfinite(vals)][:1000]
    back = np.asarray(float_decode(float_encode(vals.astype(np.float64))), dtype=np.float32)
    np.testing.assert_array_equal(back.view(np.uint32), vals.view(np.uint32))


def check_encoders():
    for n, m in [(1, 1), (5, 1), (17, 3), (100, 10)]:
        t = lower_triangle_encode(n, n * m)
        assert t.data.sum(axis=0).tolist() == [m * (k + 1) for k in range(n)]
    v = np.random.default_rng(1).random(64)
    assert (latency_encode(v, 30).data.sum(axis=0) == 1).all()
    n_t = 4000
    est = rate_decode(rate_encode(v, n_t, rng=3))
    assert np.all(np.abs(est - v) <= 4 * np.sqrt(v * (1 - v) / n_t) + 1.0 / n_t)


def check_lif():
    cfg = LifConfig.from_beta(0.95)
    current = np.zeros(40)
    current[0] = 0.5
    np.testing.assert_allclose(lif_euler_run(cfg, current).voltages[:, 0], 0.5 * 0.95 ** np.arange(40), rtol=1e-14)
    base = LifConfig(r=10.0, c=1.0, v_thresh=1e9)
    gaps = []
    for dt in (1.0, 0.5, 0.25, 0.125):
        c = base.with_dt(dt)
        t = np.arange(int(40 / dt)) * dt
        i = 0.05 * (1 + np.sin(t / 5))
        gaps.append(np.abs(lif_euler_run(c, i).voltages[:-1, 0] - lif_integral_run(c, i).voltages[1:, 0]).max())
    assert all(a / b >= 2.0 for a, b in zip(gaps, gaps[1:]))


def check_stdp():
    p = StdpParams(0.02, 0.015, 4.0)
    d = np.array([0.5, 1, 2, 4, 8])
    pos, neg = [stdp_delta(x, p) for x in d], [stdp_delta(-x, p) for x in d]
    assert all(x > 0 for x in pos) and all(x < 0 for x in neg)
    assert np.all(np.diff(pos) < 0) and np.all(np.diff(neg) > 0)
    rng = np.random.default_rng(9)
    samples = [(rng.integers(0, 2, (15, 4)), rng.integers(0, 2, (15, 3))) for _ in range(12)]
    total = sum(stdp_update(a, b, p) for a, b in samples[:2])
    np.testing.assert_allclose(stdp_apply_partitioned(SynapseWeights(np.zeros((4, 3))), [samples[:2]], p).w, total,
                               rtol=1e-15)
    w0 = SynapseWeights(rng.normal(size=(4, 3)))
    seq = w0
    for a, b in samples:
        seq = stdp_apply(seq, a, b, p)
    par = stdp_apply_partitioned(w0, [samples[:3], samples[3:7], samples[7:8], samples[8:]], p, max_workers=4)
    np.testing.assert_array_equal(par.w, seq.w)


def check_poisson():
    g = IntervalGrid(0.0, 1.0, 100)
    assert np.abs(data.poisson_solve_1d(np.full(100, 2.0), g) - (g.points**2 - g.points)).max() <= 1e-10
    errs = []
    for n in (26, 51, 101, 201):
        x = IntervalGrid(0.0, 1.0, n).points
        u = data.poisson_solve_1d(-np.pi**2 * np.sin(np.pi * x), IntervalGrid(0.0, 1.0, n))
        errs.append(np.abs(u - np.sin(np.pi * x)).max())
    assert all(3.8 < a / b < 4.2 for a, b in zip(errs, errs[1:]))


def check_savgol():
    np.testing.assert_allclose(savgol_kernel(5, 2), np.array([-3, 12, 17, 12, -3]) / 35, atol=1e-14)
    x = np.linspace(-1, 2, 100)
    y = x**3 - 2 * x + 1
    np.testing.assert_allclose(savgol_smooth(y, 51, 3), y, atol=1e-9)


def check_replay(tmp_path):
    cfg = config.resolve("deeponet-regression", None, {"epochs": 3, "n_samples": 60, "n_train": 48})
    blobs = []
    for k in range(2):
        run_experiment(cfg, tmp_path / f"r{k}")
        blobs.append((tmp_path / f"r{k}" / "metrics.csv").read_bytes())
    assert blobs[0] == blobs[1]


def test_criterion_5_property_suites(tmp_path):
    checks = [check_gradients, check_float_roundtrip, check_encoders, check_lif, check_stdp, check_poisson,
              check_savgol, lambda: check_replay(tmp_path)]
    names = ["gradients", "float", "encoders", "lif", "stdp", "poisson", "savgol", "replay"]
    started = time.perf_counter()
    failed = []
    for name, check in zip(names, checks):
        try:
            check()
        except AssertionError as exc:
            failed.append(f"{name}: {exc}")
    elapsed = time.perf_counter() - started
    print(f"property suites took {elapsed:.1f} s")
    assert not failed, failed
    assert elapsed < 120 and math.isfinite(elapsed)
