"""The experiment drivers behind the command-line interface.

Each ``run_*`` function takes a resolved config (see :mod:`spikeonet.config`)
and a :class:`RunDir`, writes its artifacts and returns a JSON-able summary.
"""

import csv
import hashlib
import io
import json
import math
import time
from pathlib import Path

import numpy as np

from spikeonet import data as datasets
from spikeonet import kernels
from spikeonet import mlp_membrane as mm
from spikeonet.config import lif_config
from spikeonet.deeponet import (
    ImageFrontEnd,
    SpikingFrontEnd,
    build_classification_model,
    build_regression_model,
    classification_accuracy,
    evaluate_regression,
    naive_regression,
    train_classification,
    train_regression,
)
from spikeonet.encoding import IntervalGrid, SpikeTrain, describe, encode_points, float_encode
from spikeonet.membrane import LifMembrane, NoMembrane, lif_euler_run, lif_integral_run, spike_count
from spikeonet.metrics import EvalReport, format_table, l2_error, savgol_smooth, time_per_sample
from spikeonet.nn import DenseNet, Trainer, mse_loss

REPO_DATA = Path(__file__).resolve().parents[2] / "data"


class NumericError(RuntimeError):
    pass


def _fmt(x):
    """Stable text form for CSV cells."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "nan" if math.isnan(x) else repr(round(x, 12))
    return str(x)


def _csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(c) for c in row])
    return buf.getvalue()


def _check_finite(history, what):
    if not np.all(np.isfinite(history)):
        raise NumericError(f"{what}: training loss became non-finite")


class RunDir:
    """Output directory that remembers every file written, for the manifest."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.files = []

    def write_text(self, name, text):
        target = self.path / name
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
        self.files.append(name)
        return target

    def write_json(self, name, obj):
        return self.write_text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def record(self, name):
        self.files.append(name)
        return self.path / name

    def manifest(self):
        out = []
        for name in dict.fromkeys(self.files):
            blob = (self.path / name).read_bytes()
            out.append({"path": name, "bytes": len(blob), "sha256": hashlib.sha256(blob).hexdigest()})
        return out

    def finish(self, cfg, results, started):
        report = {
            "experiment": cfg["experiment"],
            "seed": cfg["seed"],
            "kernel_backend": kernels.BACKEND,
            "runtime_s": round(time.perf_counter() - started, 3),
            "results": results,
            "artifacts": self.manifest(),
        }
        (self.path / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        return report


# MNIST discovery ----------------------------------------------------------------


def load_mnist_split(cfg, n_train, n_test):
    """``(x_train, y_train, x_test, y_test)`` from the configured MNIST files.

    ``mnist_split`` selects ``"official"`` (train + t10k files), ``"npm"``
    (a single 10,000-digit file, split into leading train / trailing test
    parts) or ``"auto"`` (official when present).
    """
    if cfg.get("mnist_dir"):
        candidates = [Path(cfg["mnist_dir"])]
    else:
        candidates = [datasets.data_dir() / "mnist", REPO_DATA / "mnist"]
    split = cfg.get("mnist_split", "auto")
    for directory in candidates:
        if split in ("official", "auto"):
            try:
                tr = datasets.find_mnist("train", directory)
                te = datasets.find_mnist("test", directory)
            except datasets.DataError:
                if split == "official":
                    continue
            else:
                x_tr, y_tr = datasets.load_mnist_arrays(*tr)
                x_te, y_te = datasets.load_mnist_arrays(*te)
                if n_train > len(x_tr) or n_test > len(x_te):
                    raise datasets.DataError("requested more MNIST images than the files hold")
                return x_tr[:n_train], y_tr[:n_train], x_te[:n_test], y_te[:n_test]
        if split in ("npm", "auto"):
            try:
                paths = datasets.find_mnist("npm", directory)
            except datasets.DataError:
                continue
            x, y = datasets.load_mnist_arrays(*paths)
            if n_train + n_test > len(x):
                raise datasets.DataError(f"only {len(x)} digits available for {n_train}+{n_test}")
            return x[:n_train], y[:n_train], x[n_train:n_train + n_test], y[n_train:n_train + n_test]
    raise datasets.DataError(
        "no MNIST IDX files found; run 'spikeonet fetch-mnist' or 'spikeonet import-mnist', "
        "or point --config mnist_dir / SPIKEONET_DATA_DIR at them"
    )


# naive regression -------------------------------------------------------------------


def run_naive_regression(cfg, run):
    lif = lif_config(cfg)
    funcs = datasets.test_functions(cfg["n_x"], cfg["sin_k"])
    rows, preds, results = [], [], []
    win, order = cfg["smoothing"]["window"], cfg["smoothing"]["polyorder"]
    for i, name in enumerate(cfg["functions"]):
        if name not in funcs:
            raise datasets.DataError(f"unknown test function {name!r}")
        tf = funcs[name]
        fe = SpikingFrontEnd(cfg["encoder"], cfg["n_t"], lif, cfg["lif_method"], cfg["seed"])
        for sigma in (0.0, cfg["noise_sigma"]):
            target = datasets.add_noise(tf.values, sigma, cfg["seed"] + 1000 + i)
            res = naive_regression(target, tf.grid, fe, cfg["epochs"], cfg["lr"], cfg["seed"])
            _check_finite(res.history, f"naive regression of {name}")
            smooth = savgol_smooth(res.pred, win, order)
            row = {
                "function": name,
                "noise_sigma": sigma,
                "l2": res.l2,
                "l2_smoothed": l2_error(smooth, target),
                "l2_vs_clean": l2_error(res.pred, tf.values),
                "l2_vs_clean_smoothed": l2_error(smooth, tf.values),
            }
            results.append(row)
            rows.append(list(row.values()))
            tag = f"{name}-{'noisy' if sigma else 'clean'}"
            (run.path / "checkpoints").mkdir(exist_ok=True)
            res.net.save(run.record(f"checkpoints/naive-{tag}.json"), role="naive-regression")
            for k, x in enumerate(tf.grid.points):
                preds.append([name, sigma, x, tf.values[k], target[k], res.pred[k]])
    run.write_text("metrics.csv", _csv(list(results[0].keys()), rows))
    run.write_text("predictions.csv", _csv(["function", "noise_sigma", "x", "clean", "target", "pred"], preds))
    lines = [f"{'Function':<10}{'sigma':>7}{'L2':>12}{'L2 vs clean':>14}{'smoothed':>12}"]
    for r in results:
        lines.append(f"{r['function']:<10}{r['noise_sigma']:>7.2f}{r['l2']:>12.3g}"
                     f"{r['l2_vs_clean']:>14.3g}{r['l2_vs_clean_smoothed']:>12.3g}")
    return {"rows": results, "table": "\n".join(lines)}


# spiking DeepONet regression --------------------------------------------------------------


def _regression_dataset(cfg):
    return datasets.grf_poisson_dataset(cfg["n_samples"], cfg["n_x"], cfg["length_scale"], cfg["seed"],
                                        cfg["n_train"])


def _regression_once(cfg, ds, encoder, n_t, label, run, lif):
    fe = SpikingFrontEnd(encoder, n_t, lif, cfg["lif_method"], cfg["seed"], cfg["direct_gain"], cfg["precision"])
    model = build_regression_model(ds.grid.n_x, fe, cfg["branch_widths"], cfg["trunk_widths"], cfg["seed"])
    t0 = time.perf_counter()
    history = train_regression(model, ds.f[ds.train_idx], ds.u[ds.train_idx], ds.grid, cfg["epochs"],
                               cfg["lr"], cfg["batch_size"], cfg["seed"], cfg["resample_rate"])
    train_s = time.perf_counter() - t0
    _check_finite(history, f"DeepONet regression ({label})")
    _, raw, smooth = evaluate_regression(model, ds.f[ds.test_idx], ds.u[ds.test_idx], ds.grid,
                                         cfg["smoothing"]["window"], cfg["smoothing"]["polyorder"])
    slug = label.lower().replace(" ", "-")
    (run.path / "checkpoints").mkdir(exist_ok=True)
    model.save(run.record(f"checkpoints/deeponet-{slug}.json"))
    return EvalReport(smooth, label, extra={"raw": raw, "train_s": train_s, "final_loss": history[-1]})


_REG_HEADER = ["encoding", "encoder", "n_t", "mean_l2", "median_l2", "std_l2",
               "mean_l2_raw", "median_l2_raw", "std_l2_raw", "n_test", "split_hash"]


def _reg_row(rep, encoder, n_t, split_hash):
    raw = EvalReport(rep.extra["raw"])
    return [rep.name, encoder, n_t, rep.mean, rep.median, rep.std, raw.mean, raw.median, raw.std,
            rep.errors.size, split_hash]


def run_deeponet_regression(cfg, run):
    lif = lif_config(cfg)
    ds = _regression_dataset(cfg)
    rep = _regression_once(cfg, ds, cfg["encoder"], cfg["n_t"], cfg["encoder"], run, lif)
    run.write_text("metrics.csv", _csv(_REG_HEADER, [_reg_row(rep, cfg["encoder"], cfg["n_t"], ds.split_hash())]))
    run.write_text("errors.csv", _csv(["test_sample", "l2_smoothed", "l2_raw"],
                                      [[int(i), s, r] for i, s, r in zip(ds.test_idx, rep.errors, rep.extra["raw"])]))
    return {"encoder": cfg["encoder"], "n_t": cfg["n_t"], "mean_l2": rep.mean, "median_l2": rep.median,
            "std_l2": rep.std, "mean_l2_raw": float(np.mean(rep.extra["raw"])), "split_hash": ds.split_hash(),
            "train_seconds": round(rep.extra["train_s"], 2), "table": format_table([rep])}


def encoding_rows(cfg):
    """``(label, encoder, n_t)`` in the order of the comparison table."""
    n_t = cfg["n_t"]
    return [
        ("Rate", "rate", n_t),
        ("Floating point", "float", cfg["precision"]),
        ("Lower triangular", "lower_triangular", n_t),
        (f"Lower triangular and {cfg['oversample']}x time steps", "lower_triangular", n_t * cfg["oversample"]),
        ("Direct encoding", "direct", n_t),
    ]


def run_compare_encodings(cfg, run):
    lif = lif_config(cfg)
    ds = _regression_dataset(cfg)
    split = ds.split_hash()
    reports, rows, summary = [], [], []
    for label, encoder, n_t in encoding_rows(cfg):
        rep = _regression_once(cfg, ds, encoder, n_t, label, run, lif)
        reports.append(rep)
        rows.append(_reg_row(rep, encoder, n_t, split))
        summary.append({"encoding": label, "encoder": encoder, "n_t": n_t, "mean_l2": rep.mean,
                        "median_l2": rep.median, "std_l2": rep.std,
                        "mean_l2_raw": float(np.mean(rep.extra["raw"])),
                        "train_seconds": round(rep.extra["train_s"], 2), "split_hash": split})
    run.write_text("metrics.csv", _csv(_REG_HEADER, rows))
    raw_reports = [EvalReport(r.extra["raw"], r.name) for r in reports]
    table = ("Smoothed predictions\n" + format_table(reports)
             + "\n\nRaw predictions\n" + format_table(raw_reports))
    return {"rows": summary, "table": table}


# MNIST classification ---------------------------------------------------------------------


def run_mnist_classification(cfg, run):
    lif = lif_config(cfg)
    x_tr, y_tr, x_te, y_te = load_mnist_split(cfg, cfg["n_train"], cfg["n_test"])
    fe = ImageFrontEnd(cfg["n_t"], lif, cfg["lif_method"], cfg["seed"])
    feats = fe.features(np.concatenate([x_tr, x_te]))
    f_tr, f_te = feats[:len(x_tr)], feats[len(x_tr):]
    model = build_classification_model(fe, cfg["branch_widths"], cfg["trunk_widths"], cfg["seed"])
    curve = []

    def log(epoch, loss):
        curve.append([epoch + 1, loss, classification_accuracy(model, f_te, y_te)])

    t0 = time.perf_counter()
    history = train_classification(model, f_tr, y_tr, cfg["epochs"], cfg["lr"], cfg["batch_size"],
                                   cfg["seed"], on_epoch=log)
    train_s = time.perf_counter() - t0
    _check_finite(history, "MNIST classification")
    test_acc = classification_accuracy(model, f_te, y_te)
    train_acc = classification_accuracy(model, f_tr, y_tr)
    (run.path / "checkpoints").mkdir(exist_ok=True)
    model.save(run.record("checkpoints/deeponet-mnist.json"))
    header = ["n_train", "n_test", "n_t", "epochs", "final_loss", "train_accuracy", "test_accuracy"]
    run.write_text("metrics.csv", _csv(header, [[len(x_tr), len(x_te), cfg["n_t"], cfg["epochs"],
                                                 history[-1], train_acc, test_acc]]))
    run.write_text("curve.csv", _csv(["epoch", "loss", "test_accuracy"], curve))
    return {"test_accuracy": test_acc, "train_accuracy": train_acc, "train_seconds": round(train_s, 1),
            "table": f"test accuracy {test_acc:.4f} (train {train_acc:.4f}) after {cfg['epochs']} epochs"}


# membrane backends on the Ricker wavelet --------------------------------------------------------


def ricker_spikes(cfg):
    """``(points, targets, spikes)`` with spikes shaped ``(n_points, n_t, 2)``.

    Each axis of the grid is encoded once; a point's window holds its x
    train and its y train as two neurons.
    """
    n = cfg["grid_points"]
    pts, psi = datasets.ricker_grid(n, cfg["sigma"])
    axis_code = encode_points(cfg["encoder"], np.linspace(0.0, 1.0, n), cfg["n_t"], cfg["seed"])
    if axis_code.shape[0] != cfg["n_t"]:
        raise datasets.DataError("the Ricker task needs an encoder with n_t time steps")
    idx = np.rint((pts + 1.0) / 2.0 * (n - 1)).astype(np.int64)
    spikes = np.stack([axis_code[:, idx[:, 0]], axis_code[:, idx[:, 1]]], axis=2).transpose(1, 0, 2)
    return pts, psi, np.ascontiguousarray(spikes)


def fit_readout(features, targets, width, epochs, lr, batch_size, seed):
    """Dense ReLU layer plus a linear output trained on fixed features; returns per-point squared errors."""
    rng = np.random.default_rng(seed)
    net = DenseNet.build(features.shape[1], [width, 1], "relu", "identity", rng)
    trainer = Trainer.create([net], lr=lr)
    history = []
    for _ in range(epochs):
        order = rng.permutation(len(features))
        total = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            out, cache = net.forward(features[idx])
            loss, g = mse_loss(out[:, 0], targets[idx])
            grads, _ = net.backward(g[:, None], cache)
            trainer.step(grads)
            total += loss * len(idx)
        history.append(total / len(order))
    _check_finite(history, "Ricker readout")
    pred = net(features)[:, 0]
    return (pred - targets) ** 2


def train_mnist_emulator(cfg, lif):
    """Emulator trained on rate-coded MNIST windows; returns ``(emulator, info)``.

    Training windows come from the training images and the held-out windows
    used for the bit-agreement check from the test images.
    """
    n_train = cfg["emulator_windows"]
    x_tr, _, x_te, _ = load_mnist_split(cfg, 8000, 2000)
    windows = mm.mnist_windows(x_tr, n_train, cfg["n_t"], 2, cfg["seed"])
    held_out = mm.mnist_windows(x_te, max(1000, n_train // 5), cfg["n_t"], 2, cfg["seed"] + 1)
    train_set = mm.generate_membrane_dataset(cfg["emulator_source"], list(windows), lif)
    test_set = mm.generate_membrane_dataset(cfg["emulator_source"], list(held_out), lif)
    emu, history = mm.train_emulator(train_set, cfg["emulator_epochs"], cfg["emulator_lr"],
                                     cfg["emulator_batch_size"], cfg["seed"], cfg["n_t"], 2)
    _check_finite(history, "emulator training")
    info = {
        "input_spike_fraction": float(train_set[0].mean()),
        "target_spike_fraction": float(train_set[1].mean()),
        "train_bit_agreement": mm.bit_agreement(emu, *train_set),
        "heldout_bit_agreement": mm.bit_agreement(emu, *test_set),
        "final_loss": history[-1],
    }
    return emu, info


def run_mlp_membrane(cfg, run):
    lif = lif_config(cfg)
    if cfg["emulator_checkpoint"]:
        emu = mm.MembraneEmulator.load(cfg["emulator_checkpoint"])
        info = {"loaded_from": str(cfg["emulator_checkpoint"])}
    else:
        emu, info = train_mnist_emulator(cfg, lif)
    (run.path / "checkpoints").mkdir(exist_ok=True)
    emu.save(run.record("checkpoints/mlp-membrane.json"))
    _, psi, spikes = ricker_spikes(cfg)
    backends = [("No membrane", NoMembrane()), ("MLP-membrane", emu),
                ("LIF", LifMembrane(lif, cfg["lif_method"]))]
    reports, rows, timings = [], [], []
    for label, membrane in backends:
        out = np.asarray(membrane.respond(spikes), dtype=np.float64)
        feats = out.reshape(len(out), -1)
        ms = time_per_sample(membrane.respond, spikes, cfg["timing_repeats"])
        errs = [float(np.mean(fit_readout(feats, psi, cfg["readout_width"], cfg["epochs"], cfg["lr"],
                                          cfg["batch_size"], cfg["seed"] + r)))
                for r in range(cfg["repeats"])]
        rep = EvalReport(errs, label, ms, {"output_spike_fraction": float(out.mean())})
        reports.append(rep)
        rows.append([label, rep.mean, rep.median, rep.std, len(errs), rep.extra["output_spike_fraction"]])
        timings.append([label, kernels.BACKEND if label == "LIF" else "numpy", ms])
    # the same LIF solver on the interpreted reference kernels, for comparison
    ref = LifMembrane(lif, cfg["lif_method"], backend="python")
    subset = spikes[: min(len(spikes), 2000)]
    timings.append(["LIF", "python", time_per_sample(ref.respond, subset, cfg["timing_repeats"])])
    run.write_text("metrics.csv", _csv(["membrane", "mean_l2", "median_l2", "std_l2", "repeats",
                                        "output_spike_fraction"], rows))
    run.write_text("timing.csv", _csv(["membrane", "kernels", "ms_per_sample"], timings))
    return {
        "emulator": info,
        "rows": [{"membrane": r.name, "mean_l2": r.mean, "median_l2": r.median, "std_l2": r.std,
                  "time_per_sample_ms": r.time_per_sample_ms} for r in reports],
        "timing": [{"membrane": t[0], "kernels": t[1], "ms_per_sample": t[2]} for t in timings],
        "table": format_table(reports, with_time=True),
    }


# inspection helpers ----------------------------------------------------------------------------


def run_encode_inspect(cfg, run):
    enc = cfg["encoder"]
    if enc == "float":
        values = cfg["values"] if cfg["values"] is not None else [-25.0313]
        train = float_encode(np.asarray(values, dtype=np.float64), cfg["precision"])
        text = "\n".join(f"{v!r}: {line}" for v, line in zip(values, describe(train).splitlines()))
        points = list(values)
    else:
        grid = IntervalGrid(0.0, 1.0, cfg["n_x"])
        n_t = cfg["n_t"] if cfg["n_t"] is not None else cfg["n_x"]
        mat = encode_points(enc, grid.normalized(), n_t, cfg["seed"], allow_coarse=False)
        if enc == "direct":
            text = "\n".join(" ".join(f"{v:.3f}" for v in row) for row in mat.T)
            run.write_text("encoding.txt", text + "\n")
            run.write_text("metrics.csv", _csv(["point", "mean_value"], [[k, float(v)] for k, v in
                                                                         enumerate(mat.mean(axis=0))]))
            return {"encoder": enc, "shape": list(mat.shape), "table": text}
        train = SpikeTrain(mat)
        text = describe(train)
        points = grid.points.tolist()
    train.save(run.record("spikes.spkt"))
    run.write_text("encoding.txt", text + "\n")
    counts = spike_count(train)
    run.write_text("metrics.csv", _csv(["point", "value", "spike_count"],
                                       [[k, points[k], int(c)] for k, c in enumerate(counts)]))
    return {"encoder": enc, "shape": list(train.shape), "table": text}


def run_lif_trace(cfg, run):
    lif = lif_config(cfg)
    current = np.asarray(cfg["input"], dtype=np.float64)
    if current.ndim == 1:
        current = current[:, None]
    runner = lif_euler_run if cfg["lif_method"] == "euler" else lif_integral_run
    trace = runner(lif, current)
    trace.to_csv(run.record("trace.csv"))
    counts = spike_count(trace)
    run.write_text("metrics.csv", _csv(["neuron", "input_total", "spike_count"],
                                       [[i, float(current[:, i].sum()), int(c)] for i, c in enumerate(counts)]))
    lines = ["step  input  voltage  spike"]
    for k in range(current.shape[0]):
        lines.append(f"{k:>4}  {current[k, 0]:>5.2f}  {trace.voltages[k, 0]:>7.4f}  {trace.spikes.data[k, 0]:>5}")
    return {"spike_counts": counts.tolist(), "table": "\n".join(lines)}


RUNNERS = {
    "naive-regression": run_naive_regression,
    "deeponet-regression": run_deeponet_regression,
    "compare-encodings": run_compare_encodings,
    "mnist-classification": run_mnist_classification,
    "mlp-membrane": run_mlp_membrane,
    "encode-inspect": run_encode_inspect,
    "lif-trace": run_lif_trace,
}


def run_experiment(cfg, out_dir):
    """Run a resolved config into ``out_dir``; returns the report dict."""
    started = time.perf_counter()
    run = RunDir(out_dir)
    run.write_json("resolved-config.json", cfg)
    results = RUNNERS[cfg["experiment"]](cfg, run)
    return run.finish(cfg, results, started)
