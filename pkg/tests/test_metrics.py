import time

import numpy as np
import pytest

from spikeonet.membrane import LifConfig, LifMembrane
from spikeonet.metrics import (
    EvalReport,
    MetricError,
    accuracy,
    format_table,
    l2_error,
    l2_errors,
    reports_to_csv,
    savgol_kernel,
    savgol_smooth,
    time_per_sample,
)
from spikeonet.mlp_membrane import MembraneEmulator


def test_l2_values():
    assert l2_error([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert l2_error([1.0, 1.0], [0.0, 0.0]) == 2.0


def test_l2_matches_loop():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=37), rng.normal(size=37)
    loop = 0.0
    for x, y in zip(a, b):
        loop += (x - y) ** 2
    assert l2_error(a, b) == pytest.approx(loop, rel=1e-13)
    rows = l2_errors(np.stack([a, b]), np.stack([b, a]))
    assert rows == pytest.approx([loop, loop], rel=1e-13)


def test_l2_shape_mismatch():
    with pytest.raises(MetricError):
        l2_error([1.0], [1.0, 2.0])


def test_savgol_classical_kernel():
    np.testing.assert_allclose(savgol_kernel(5, 2), np.array([-3, 12, 17, 12, -3]) / 35, atol=1e-14)


def test_savgol_kernel_by_least_squares():
    # independent derivation: the centre row of the hat matrix of a cubic fit
    window, order = 11, 3
    z = np.arange(window) - window // 2
    vander = np.vander(z, order + 1, increasing=True)
    hat = vander @ np.linalg.pinv(vander)
    np.testing.assert_allclose(savgol_kernel(window, order), hat[window // 2], atol=1e-12)


def test_savgol_reproduces_cubics():
    x = np.linspace(-2, 3, 120)
    y = 0.5 * x**3 - x**2 + 2 * x - 7
    # with one-sided polynomial fits at the edges the whole signal is reproduced
    np.testing.assert_allclose(savgol_smooth(y, 51, 3), y, atol=1e-9)


def test_savgol_constant():
    np.testing.assert_allclose(savgol_smooth(np.full(80, 3.25), 51, 3), 3.25, atol=1e-12)


def test_savgol_rows_independent():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(3, 100))
    out = savgol_smooth(m, 51, 3)
    np.testing.assert_allclose(out[1], savgol_smooth(m[1], 51, 3))


def test_savgol_argument_checks():
    with pytest.raises(MetricError):
        savgol_smooth(np.zeros(100), 50, 3)
    with pytest.raises(MetricError):
        savgol_smooth(np.zeros(20), 51, 3)
    with pytest.raises(MetricError):
        savgol_smooth(np.zeros(100), 5, 5)


def test_accuracy():
    assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert accuracy([1, 2, 3], [0, 0, 0]) == 0.0
    assert accuracy([0, 1, 2], [0, 1, 9]) == pytest.approx(2 / 3)
    with pytest.raises(MetricError):
        accuracy([], [])


def test_time_noop_is_cheap():
    assert time_per_sample(lambda b: None, list(range(1000))) < 0.01


def test_time_amortises():
    work = lambda b: [sum(range(200)) for _ in b]  # noqa: E731
    small = time_per_sample(work, list(range(2000)), 7)
    large = time_per_sample(work, list(range(4000)), 7)
    assert 0.5 <= large / small <= 1.5


def test_time_needs_five_repeats():
    with pytest.raises(MetricError):
        time_per_sample(lambda b: None, [1], repeats=3)


def test_emulator_faster_than_integral_lif():
    rng = np.random.default_rng(0)
    batch = rng.integers(0, 2, size=(2000, 50, 2)).astype(np.uint8)
    emu = MembraneEmulator.build(50, 2, rng=0)
    lif = LifMembrane(LifConfig(), "integral")
    assert time_per_sample(emu.respond, batch) < time_per_sample(lif.respond, batch)


def test_report_statistics_and_json():
    rep = EvalReport([1.0, 2.0, 4.0], "x", 0.5, {"note": "ok"})
    assert (rep.mean, rep.median) == (pytest.approx(7 / 3), 2.0)
    assert rep.std == pytest.approx(np.std([1.0, 2.0, 4.0]))
    back = EvalReport.from_json(rep.to_json())
    np.testing.assert_array_equal(back.errors, rep.errors)
    assert back.extra == {"note": "ok"} and back.time_per_sample_ms == 0.5
    with pytest.raises(MetricError):
        EvalReport([])


def test_report_csv_and_table():
    reps = [EvalReport([0.1, 0.3], "A"), EvalReport([0.2], "B", 1.5)]
    lines = reports_to_csv(reps).splitlines()
    assert lines[0] == "name,mean_l2,median_l2,std_l2,n_samples,time_per_sample_ms"
    assert lines[1].startswith("A,0.2,0.2,0.1,2,nan")
    table = format_table(reps, with_time=True).splitlines()
    assert len(table) == 3 and table[2].startswith("B")


def test_timer_uses_wall_clock():
    t = time_per_sample(lambda b: time.sleep(0.002), [0, 0], repeats=5)
    assert t >= 0.9
