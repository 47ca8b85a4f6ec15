"""Error metrics, accuracy, Savitzky-Golay smoothing and per-sample timing."""

import csv
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import savgol_coeffs, savgol_filter


class MetricError(ValueError):
    pass


def l2_error(pred, truth):
    """Sum of squared differences (deliberately without a square root or mean)."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise MetricError(f"shapes differ: {pred.shape} vs {truth.shape}")
    d = pred - truth
    return float(np.sum(d * d))


def l2_errors(pred, truth):
    """Row-wise :func:`l2_error` for ``(samples, points)`` arrays."""
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if pred.shape != truth.shape:
        raise MetricError(f"shapes differ: {pred.shape} vs {truth.shape}")
    d = pred - truth
    return np.sum(d * d, axis=1)


def _check_savgol(n, window, polyorder):
    if window < 1 or window % 2 == 0:
        raise MetricError("window must be a positive odd integer")
    if polyorder < 0 or polyorder >= window:
        raise MetricError("polyorder must satisfy 0 <= polyorder < window")
    if n < window:
        raise MetricError(f"signal of length {n} is shorter than the window {window}")


def savgol_kernel(window, polyorder):
    """Convolution weights of the centred least-squares smoother, left to right."""
    _check_savgol(window, window, polyorder)
    return savgol_coeffs(window, polyorder, use="dot")


def savgol_smooth(values, window=51, polyorder=3):
    """Savitzky-Golay smoothing along the last axis.

    Interior points use the centred window.  Near the ends the polynomial is
    fitted to the first (or last) ``window`` samples and evaluated at each
    edge point, so no padding values are invented.
    """
    values = np.asarray(values, dtype=np.float64)
    _check_savgol(values.shape[-1], window, polyorder)
    return savgol_filter(values, window, polyorder, mode="interp", axis=-1)


def accuracy(predictions, labels):
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise MetricError("predictions and labels differ in length")
    if predictions.size == 0:
        raise MetricError("accuracy of an empty set is undefined")
    return float(np.mean(predictions == labels))


def time_per_sample(fn, batch, repeats=5):
    """Median over ``repeats`` runs of wall time / batch size, in milliseconds.

    ``batch`` must support ``len``; ``fn`` is called once per repetition with
    the whole batch.
    """
    n = len(batch)
    if n == 0:
        raise MetricError("timing needs a non-empty batch")
    if repeats < 5:
        raise MetricError("use at least five repetitions")
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(batch)
        samples.append((time.perf_counter() - t0) / n)
    return float(np.median(samples) * 1e3)


REPORT_COLUMNS = ("name", "mean_l2", "median_l2", "std_l2", "n_samples", "time_per_sample_ms")


@dataclass
class EvalReport:
    """Summary of per-sample L2 errors; the statistics are derived, never stored independently."""

    errors: np.ndarray
    name: str = ""
    time_per_sample_ms: float = float("nan")
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.errors = np.asarray(self.errors, dtype=np.float64).ravel()
        if self.errors.size == 0:
            raise MetricError("an EvalReport needs at least one error value")

    @property
    def mean(self):
        return float(np.mean(self.errors))

    @property
    def median(self):
        return float(np.median(self.errors))

    @property
    def std(self):
        return float(np.std(self.errors))

    def row(self):
        return {
            "name": self.name,
            "mean_l2": self.mean,
            "median_l2": self.median,
            "std_l2": self.std,
            "n_samples": int(self.errors.size),
            "time_per_sample_ms": self.time_per_sample_ms,
        }

    def to_json(self):
        doc = self.row()
        doc["errors"] = self.errors.tolist()
        doc.update(self.extra)
        return json.dumps(doc, allow_nan=True)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        known = {"name", "mean_l2", "median_l2", "std_l2", "n_samples", "time_per_sample_ms", "errors"}
        return cls(doc["errors"], doc.get("name", ""), doc.get("time_per_sample_ms", float("nan")),
                   {k: v for k, v in doc.items() if k not in known})


def format_float(x):
    return "nan" if x != x else f"{x:.6g}"


def reports_to_csv(reports, extra_columns=()):
    """CSV text for a list of reports, one row each, columns in :data:`REPORT_COLUMNS` order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*REPORT_COLUMNS, *extra_columns])
    for rep in reports:
        row = rep.row()
        cells = [row["name"]] + [format_float(row[c]) for c in ("mean_l2", "median_l2", "std_l2")]
        cells += [row["n_samples"], format_float(row["time_per_sample_ms"])]
        cells += [format_float(rep.extra[c]) if isinstance(rep.extra.get(c), float) else rep.extra.get(c, "")
                  for c in extra_columns]
        writer.writerow(cells)
    return buf.getvalue()


def format_table(reports, with_time=False):
    """Fixed-width text table (name, mean, median, std[, time])."""
    head = f"{'Encoding':<38}{'Mean L2':>12}{'Median L2':>12}{'Std L2':>12}"
    if with_time:
        head += f"{'ms/sample':>12}"
    lines = [head]
    for rep in reports:
        line = f"{rep.name:<38}{rep.mean:>12.4g}{rep.median:>12.4g}{rep.std:>12.4g}"
        if with_time:
            line += f"{rep.time_per_sample_ms:>12.4g}"
        lines.append(line)
    return "\n".join(lines)
