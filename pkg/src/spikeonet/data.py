"""Datasets: Gaussian random fields, 1-D Poisson solutions, analytic targets, MNIST."""

import csv
import gzip
import hashlib
import io
import json
import os
import struct
import tarfile
import urllib.request
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from spikeonet import kernels
from spikeonet.encoding import IntervalGrid


class DataError(RuntimeError):
    pass


# Gaussian random fields -----------------------------------------------------


def rbf_kernel(x, y, length_scale):
    d = np.subtract.outer(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
    return np.exp(-(d * d) / (2.0 * length_scale ** 2))


@lru_cache(maxsize=16)
def _grf_factor(a, b, n_x, length_scale):
    x = IntervalGrid(a, b, n_x).points
    cov = rbf_kernel(x, x, length_scale)
    jitter = 1e-10
    while jitter <= 1e-6 * (1 + 1e-9):
        try:
            factor = np.linalg.cholesky(cov + jitter * np.eye(n_x))
        except np.linalg.LinAlgError:
            jitter *= 10.0
            continue
        factor.setflags(write=False)
        return factor
    raise DataError(f"covariance is not positive definite even with jitter 1e-6 (length scale {length_scale})")


def grf_sample(grid, length_scale=1.0, rng=None):
    """One zero-mean GP draw with squared-exponential covariance on the grid."""
    if length_scale <= 0:
        raise DataError("length scale must be positive")
    factor = _grf_factor(float(grid.a), float(grid.b), int(grid.n_x), float(length_scale))
    z = np.random.default_rng(rng).standard_normal(grid.n_x)
    return factor @ z


# Poisson --------------------------------------------------------------------


def poisson_solve_1d(f, grid):
    """Solve ``u'' = f`` with ``u(a) = u(b) = 0`` by second-order central differences."""
    f = np.asarray(f, dtype=np.float64)
    n = grid.n_x
    if n < 3:
        raise DataError("the Poisson solver needs at least three grid points")
    if f.shape != (n,):
        raise DataError(f"right-hand side has shape {f.shape}, grid has {n} points")
    m = n - 2
    h2 = grid.spacing ** 2
    lower = np.ones(m)
    upper = np.ones(m)
    diag = np.full(m, -2.0)
    try:
        interior = kernels.tridiag_solve(lower, diag, upper, h2 * f[1:-1])
    except ZeroDivisionError as exc:  # pragma: no cover - the operator is never singular
        raise AssertionError("discrete Laplacian reported singular") from exc
    u = np.zeros(n)
    u[1:-1] = interior
    return u


@dataclass
class GrfDataset:
    grid: IntervalGrid
    f: np.ndarray
    u: np.ndarray
    seed: int
    length_scale: float
    train_idx: np.ndarray = field(default=None)
    test_idx: np.ndarray = field(default=None)

    @property
    def n_samples(self):
        return self.f.shape[0]

    def split_hash(self):
        h = hashlib.sha256()
        h.update(np.asarray(self.train_idx, dtype=np.int64).tobytes())
        h.update(b"|")
        h.update(np.asarray(self.test_idx, dtype=np.int64).tobytes())
        return h.hexdigest()[:16]


def split_indices(n, n_train, seed):
    """Disjoint, seed-stable train/test index split."""
    if not 0 < n_train < n:
        raise DataError("n_train must be between 1 and n - 1")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def grf_poisson_dataset(n_samples=1000, n_x=100, length_scale=1.0, seed=0, n_train=800,
                        interval=(0.0, 1.0)):
    """GRF right-hand sides and their Poisson solutions; sample ``i`` uses seed ``seed + i``."""
    grid = IntervalGrid(interval[0], interval[1], n_x)
    f = np.stack([grf_sample(grid, length_scale, seed + i) for i in range(n_samples)])
    u = np.stack([poisson_solve_1d(row, grid) for row in f])
    train_idx, test_idx = split_indices(n_samples, n_train, seed)
    return GrfDataset(grid, f, u, seed, length_scale, train_idx, test_idx)


def save_grf_dataset(ds, directory):
    """Write ``grf.csv`` (one row per sample and point) and ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / "grf.csv"
    x = ds.grid.points
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "x", "f", "u"])
        for s in range(ds.n_samples):
            for k in range(ds.grid.n_x):
                writer.writerow([s, repr(float(x[k])), repr(float(ds.f[s, k])), repr(float(ds.u[s, k]))])
    manifest = {
        "seed": ds.seed,
        "length_scale": ds.length_scale,
        "n_x": ds.grid.n_x,
        "interval": [ds.grid.a, ds.grid.b],
        "n_samples": ds.n_samples,
        "split": {"train": ds.train_idx.tolist(), "test": ds.test_idx.tolist()},
        "csv_sha256": hashlib.sha256(csv_path.read_bytes()).hexdigest(),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return csv_path


def load_grf_dataset(directory):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    raw = (directory / "grf.csv").read_bytes()
    if hashlib.sha256(raw).hexdigest() != manifest["csv_sha256"]:
        raise DataError("grf.csv does not match its manifest checksum")
    rows = np.loadtxt(io.StringIO(raw.decode()), delimiter=",", skiprows=1)
    n, n_x = manifest["n_samples"], manifest["n_x"]
    grid = IntervalGrid(manifest["interval"][0], manifest["interval"][1], n_x)
    return GrfDataset(grid, rows[:, 2].reshape(n, n_x), rows[:, 3].reshape(n, n_x),
                      manifest["seed"], manifest["length_scale"],
                      np.asarray(manifest["split"]["train"]), np.asarray(manifest["split"]["test"]))


# analytic targets -------------------------------------------------------------


def step(x):
    """1 on [-1, 0], 2 on (0, 1]."""
    return np.where(np.asarray(x) <= 0.0, 1.0, 2.0)


def square(x):
    return np.asarray(x, dtype=np.float64) ** 2


def ricker2d(x, y, sigma=0.4):
    r2 = (np.asarray(x, dtype=np.float64) ** 2 + np.asarray(y, dtype=np.float64) ** 2) / sigma ** 2
    return (1.0 - 0.5 * r2) * np.exp(-0.5 * r2) / (np.pi * sigma ** 4)


def sin_ode(grid, k=np.pi):
    """Solution of ``u'' = sin(k x)`` with homogeneous Dirichlet ends, on ``grid``."""
    return poisson_solve_1d(np.sin(k * grid.points), grid)


@dataclass(frozen=True)
class TestFunction:
    name: str
    grid: IntervalGrid
    values: np.ndarray = field(compare=False)


def test_functions(n_x=100, k=np.pi):
    """The 1-D regression targets with their default grids."""
    g_step = IntervalGrid(-1.0, 1.0, n_x)
    g_unit = IntervalGrid(0.0, 1.0, n_x)
    return {
        "step": TestFunction("step", g_step, step(g_step.points)),
        "square": TestFunction("square", g_unit, square(g_unit.points)),
        "sin_ode": TestFunction("sin_ode", g_unit, sin_ode(g_unit, k)),
    }


def ricker_grid(n=100, sigma=0.4):
    """``(points, values)`` on the ``n x n`` grid of [-1, 1]^2, points as ``(n*n, 2)``."""
    axis = IntervalGrid(-1.0, 1.0, n).points
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    return pts, ricker2d(pts[:, 0], pts[:, 1], sigma)


def add_noise(values, sigma, rng=None):
    """``values + N(0, sigma^2)`` noise, reproducible per seed."""
    if sigma < 0:
        raise DataError("noise sigma must be non-negative")
    values = np.asarray(values, dtype=np.float64)
    if sigma == 0:
        return values.copy()
    return values + np.random.default_rng(rng).normal(0.0, sigma, size=values.shape)


# MNIST / IDX ------------------------------------------------------------------

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

MNIST_FILES = {
    "train_images": ("train-images-idx3-ubyte.gz", "f68b3c2dcbeaaa9fbdd348bbdeb94873"),
    "train_labels": ("train-labels-idx1-ubyte.gz", "d53e105ee54ea40749a09fcbcd1e9432"),
    "test_images": ("t10k-images-idx3-ubyte.gz", "9fb629c4189551a2d022fa330f9573f3"),
    "test_labels": ("t10k-labels-idx1-ubyte.gz", "ec29112dd5afa0611ce80d1b7f02629c"),
}
MNIST_MIRRORS = (
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
)


@dataclass
class MnistRecord:
    pixels: np.ndarray
    label: int

    def __post_init__(self):
        if np.shape(self.pixels) != (28, 28):
            raise DataError("an MNIST record has 28x28 pixels")
        if not 0 <= int(self.label) <= 9:
            raise DataError(f"label {self.label} is not a digit")


def _open_bytes(path):
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx(path, expected_magic=None):
    """Read an IDX file (optionally gzipped) into a uint8 array."""
    raw = _open_bytes(path)
    if len(raw) < 4:
        raise DataError(f"{path}: truncated header")
    (magic,) = struct.unpack(">I", raw[:4])
    if expected_magic is not None and magic != expected_magic:
        raise DataError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    if magic >> 8 != 0x08:
        raise DataError(f"{path}: only unsigned-byte IDX files are supported (magic 0x{magic:08x})")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = int(np.prod(dims))
    body = raw[header:]
    if len(body) < expected:
        raise DataError(f"{path}: truncated body ({len(body)} of {expected} bytes)")
    if len(body) > expected:
        raise DataError(f"{path}: {len(body) - expected} trailing bytes")
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def write_idx(path, array):
    """Write a uint8 array as IDX; gzip when the name ends in ``.gz``."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    blob = struct.pack(">I", 0x0800 | array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    blob += array.tobytes()
    path = Path(path)
    if path.suffix == ".gz":
        blob = gzip.compress(blob, mtime=0)
    path.write_bytes(blob)


def load_mnist_arrays(idx_image_path, idx_label_path):
    """``(pixels, labels)``: pixels ``(n, 28, 28)`` scaled to [0, 1], labels int64."""
    images = read_idx(idx_image_path, IDX_IMAGES_MAGIC)
    labels = read_idx(idx_label_path, IDX_LABELS_MAGIC)
    if images.ndim != 3:
        raise DataError("image file must be three-dimensional")
    if images.shape[0] != labels.shape[0]:
        raise DataError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    return images.astype(np.float64) / 255.0, labels.astype(np.int64)


def load_mnist(idx_image_path, idx_label_path):
    """List of :class:`MnistRecord` from a pair of IDX files."""
    pixels, labels = load_mnist_arrays(idx_image_path, idx_label_path)
    return [MnistRecord(p, int(l)) for p, l in zip(pixels, labels)]


def data_dir():
    return Path(os.environ.get("SPIKEONET_DATA_DIR", Path.home() / ".cache" / "spikeonet"))


def find_mnist(split="train", directory=None):
    """Locate an image/label IDX pair under ``directory`` (or the data dir)."""
    directory = Path(directory) if directory is not None else data_dir() / "mnist"
    names = {"train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
             "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
             "npm": ("npm-images-idx3-ubyte", "npm-labels-idx1-ubyte")}[split]
    found = []
    for stem in names:
        for candidate in (directory / stem, directory / f"{stem}.gz"):
            if candidate.exists():
                found.append(candidate)
                break
        else:
            raise DataError(f"{stem}[.gz] not found in {directory}")
    return tuple(found)


def fetch_mnist(directory=None, mirrors=MNIST_MIRRORS):
    """Download the four canonical IDX archives and verify their MD5 sums."""
    directory = Path(directory) if directory is not None else data_dir() / "mnist"
    directory.mkdir(parents=True, exist_ok=True)
    for name, md5 in MNIST_FILES.values():
        target = directory / name
        if target.exists() and hashlib.md5(target.read_bytes()).hexdigest() == md5:
            continue
        errors = []
        for base in mirrors:
            try:
                with urllib.request.urlopen(base + name, timeout=60) as resp:
                    blob = resp.read()
            except OSError as exc:
                errors.append(f"{base}: {exc}")
                continue
            if hashlib.md5(blob).hexdigest() != md5:
                errors.append(f"{base}: checksum mismatch")
                continue
            target.write_bytes(blob)
            break
        else:
            raise DataError(f"could not fetch {name}: " + "; ".join(errors))
    return directory


def import_npm_mnist(source, directory=None):
    """Convert the digit JSON files of the npm ``mnist`` package into IDX files.

    ``source`` is the package tarball or its unpacked directory.  The package
    ships 10,000 grey-level digits stored as ``byte / 255`` floats; they are
    written as ``t10k-*`` style files named ``npm-images-idx3-ubyte.gz`` and
    ``npm-labels-idx1-ubyte.gz``.
    """
    directory = Path(directory) if directory is not None else data_dir() / "mnist"
    directory.mkdir(parents=True, exist_ok=True)
    source = Path(source)
    digits = {}
    if source.is_file():
        with tarfile.open(source) as tar:
            for k in range(10):
                member = tar.extractfile(f"package/src/digits/{k}.json")
                digits[k] = json.load(member)["data"]
    else:
        for k in range(10):
            base = source / "src" / "digits" if (source / "src").exists() else source / "package" / "src" / "digits"
            digits[k] = json.loads((base / f"{k}.json").read_text())["data"]
    images, labels = [], []
    for k in range(10):
        arr = np.asarray(digits[k], dtype=np.float64).reshape(-1, 28, 28)
        images.append(np.rint(arr * 255.0).astype(np.uint8))
        labels.append(np.full(arr.shape[0], k, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    # interleave classes deterministically so prefixes are class-balanced
    order = np.random.default_rng(0).permutation(len(labels))
    write_idx(directory / "npm-images-idx3-ubyte.gz", images[order])
    write_idx(directory / "npm-labels-idx1-ubyte.gz", labels[order])
    return directory
