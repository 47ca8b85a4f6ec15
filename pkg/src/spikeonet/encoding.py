"""Spike encoders and decoders.

All spike trains are ``(time, neuron)`` matrices.  Image-like inputs are
flattened onto the neuron axis, so a 28x28 digit becomes 784 neurons.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

SPKT_MAGIC = b"SPKT"
_SPKT_HEADER = struct.Struct(">4sIId")


class EncodingError(ValueError):
    pass


@dataclass
class SpikeTrain:
    data: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise EncodingError(f"spike train must be a non-empty 2-D matrix, got {data.shape}")
        if not np.isin(data, (0, 1)).all():
            raise EncodingError("spike trains are binary")
        self.data = data.astype(np.uint8, copy=False)

    @property
    def n_t(self):
        return self.data.shape[0]

    @property
    def n_neurons(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def total_spikes(self):
        return int(self.data.sum())

    def __eq__(self, other):
        if not isinstance(other, SpikeTrain):
            return NotImplemented
        return self.dt == other.dt and np.array_equal(self.data, other.data)

    # serialization: packed bitset container and a JSON debug form

    def to_bytes(self):
        packed = np.packbits(self.data, axis=1)
        return _SPKT_HEADER.pack(SPKT_MAGIC, self.n_t, self.n_neurons, self.dt) + packed.tobytes()

    @classmethod
    def from_bytes(cls, blob):
        if len(blob) < _SPKT_HEADER.size:
            raise EncodingError("truncated SPKT container")
        magic, n_t, n, dt = _SPKT_HEADER.unpack_from(blob)
        if magic != SPKT_MAGIC:
            raise EncodingError(f"bad magic {magic!r}")
        row_bytes = (n + 7) // 8
        body = blob[_SPKT_HEADER.size:]
        if len(body) != n_t * row_bytes:
            raise EncodingError("SPKT body size does not match its header")
        packed = np.frombuffer(body, dtype=np.uint8).reshape(n_t, row_bytes)
        return cls(np.unpackbits(packed, axis=1, count=n), dt)

    def to_json(self):
        return json.dumps({"dt": self.dt, "data": self.data.tolist()})

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return cls(np.asarray(doc["data"], dtype=np.uint8), doc.get("dt", 1.0))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass(frozen=True)
class IntervalGrid:
    """``n_x`` evenly spaced points on ``[a, b]``."""

    a: float
    b: float
    n_x: int

    def __post_init__(self):
        if not self.a < self.b:
            raise EncodingError("interval needs a < b")
        if self.n_x < 2:
            raise EncodingError("a grid needs at least two points")

    @property
    def spacing(self):
        return (self.b - self.a) / (self.n_x - 1)

    @property
    def points(self):
        return self.a + np.arange(self.n_x) * self.spacing

    def normalized(self):
        """Points mapped to [0, 1] by ``(x - a) / (b - a)``."""
        return np.arange(self.n_x) / (self.n_x - 1)


def _unit_values(values):
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EncodingError("nothing to encode")
    if np.isnan(v).any() or v.min() < 0.0 or v.max() > 1.0:
        raise EncodingError("values must lie in [0, 1]; normalise with (x - a) / (b - a) first")
    return v


def rate_encode(values, n_t, rng=None):
    """Bernoulli rate code: each neuron fires at every step with probability ``value``."""
    v = _unit_values(values)
    if n_t < 1:
        raise EncodingError("n_t must be positive")
    rng = np.random.default_rng(rng)
    return SpikeTrain((rng.random((n_t, v.size)) < v).astype(np.uint8))


def rate_decode(train):
    """Per-neuron firing rate (time mean)."""
    data = train.data if isinstance(train, SpikeTrain) else np.asarray(train)
    return data.mean(axis=0)


def latency_times(values, n_t):
    """Spike step of each value under the time-to-first-spike code."""
    v = _unit_values(values)
    quantile = np.minimum(np.floor(v * n_t).astype(np.int64), n_t - 1)
    return (n_t - 1) - quantile


def latency_encode(values, n_t):
    """Time-to-first-spike code: one spike per neuron, brighter values fire earlier."""
    if n_t < 1:
        raise EncodingError("n_t must be positive")
    times = latency_times(values, n_t)
    data = np.zeros((n_t, times.size), dtype=np.uint8)
    data[times, np.arange(times.size)] = 1
    return SpikeTrain(data)


def identity_encode(grid, n_t=None):
    """Point ``k`` spikes only at step ``k``; requires ``n_t == n_x``."""
    n_t = grid.n_x if n_t is None else n_t
    if n_t != grid.n_x:
        raise EncodingError(f"identity encoding needs n_t == n_x ({n_t} != {grid.n_x})")
    return SpikeTrain(np.eye(grid.n_x, dtype=np.uint8))


def lower_triangle_counts(n_x, n_t, allow_coarse=False):
    """Number of leading spikes for each grid point.

    With ``n_t = m * n_x`` point ``n`` gets ``m * (n + 1)`` spikes.  When
    ``allow_coarse`` is set, other ``n_t`` use ``ceil((n + 1) * n_t / n_x)``,
    which reduces to the same rule for exact multiples and makes neighbouring
    points share a code when ``n_t < n_x``.
    """
    if n_t < 1:
        raise EncodingError("n_t must be positive")
    if n_t % n_x == 0:
        return (n_t // n_x) * (np.arange(n_x) + 1)
    if not allow_coarse:
        raise EncodingError(f"n_t={n_t} is not a positive multiple of n_x={n_x}")
    return -((-(np.arange(n_x) + 1) * n_t) // n_x)


def lower_triangle_encode(grid, n_t=None, allow_coarse=False):
    """Lower-triangular interval code.

    Returned as a ``(time, point)`` train, so ``train.data.T`` is the familiar
    lower-triangular matrix with one row per grid point.
    """
    n_x = grid.n_x if isinstance(grid, IntervalGrid) else int(grid)
    n_t = n_x if n_t is None else n_t
    counts = lower_triangle_counts(n_x, n_t, allow_coarse)
    data = (np.arange(n_t)[:, None] < counts[None, :]).astype(np.uint8)
    return SpikeTrain(data)


_FLOAT_FORMATS = {32: (np.float32, np.uint32), 64: (np.float64, np.uint64)}


def float_bits(x, precision=32):
    """IEEE-754 bit pattern(s) of ``x``, most significant bit first.

    A scalar gives a 1-D array of length ``precision``; an array of ``N``
    values gives ``(precision, N)``.
    """
    if precision not in _FLOAT_FORMATS:
        raise EncodingError("precision must be 32 or 64")
    ftype, utype = _FLOAT_FORMATS[precision]
    arr = np.asarray(x, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise EncodingError("only finite values can be float-encoded")
    words = arr.astype(ftype).ravel().view(utype).astype(np.uint64)
    shifts = np.arange(precision - 1, -1, -1, dtype=np.uint64)
    bits = ((words[None, :] >> shifts[:, None]) & np.uint64(1)).astype(np.uint8)
    return bits[:, 0] if arr.ndim == 0 else bits


def float_encode(x, precision=32):
    """Float code as a spike train with one time step per bit."""
    bits = float_bits(x, precision)
    return SpikeTrain(bits.reshape(precision, -1))


def float_decode(bits):
    """Inverse of :func:`float_encode`.

    Accepts a 1-D bit row, a ``(precision, N)`` matrix or a :class:`SpikeTrain`.
    """
    data = bits.data if isinstance(bits, SpikeTrain) else np.asarray(bits)
    single = data.ndim == 1
    mat = data[:, None] if single else data
    precision = mat.shape[0]
    if precision not in _FLOAT_FORMATS:
        raise EncodingError("bit rows must have length 32 or 64")
    if not np.isin(mat, (0, 1)).all():
        raise EncodingError("bit rows are binary")
    ftype, utype = _FLOAT_FORMATS[precision]
    weights = np.uint64(1) << np.arange(precision - 1, -1, -1, dtype=np.uint64)
    words = (mat.astype(np.uint64) * weights[:, None]).sum(axis=0, dtype=np.uint64)
    exp_bits = 8 if precision == 32 else 11
    mantissa_bits = precision - 1 - exp_bits
    exponent = (words >> np.uint64(mantissa_bits)) & np.uint64((1 << exp_bits) - 1)
    if (exponent == (1 << exp_bits) - 1).any():
        raise EncodingError("bit pattern encodes NaN or infinity")
    values = words.astype(utype).view(ftype)
    return values[0].item() if single else values.astype(np.float64)


def direct_encode(values, n_t):
    """Repeat the raw values at every step (real-valued currents, not spikes)."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if n_t < 1:
        raise EncodingError("n_t must be positive")
    return np.tile(v, (n_t, 1))


ENCODERS = ("rate", "latency", "identity", "lower_triangular", "float", "direct")


def encode_points(name, x_unit, n_t, rng=None, precision=32, allow_coarse=True):
    """Encode points already mapped to [0, 1] with the named scheme.

    Returns a ``(time, point)`` matrix; binary for every scheme except
    ``direct``.  Interval schemes (identity, lower_triangular) assume the
    points form an evenly spaced grid in ascending order.
    """
    x_unit = np.asarray(x_unit, dtype=np.float64).ravel()
    if name == "rate":
        return rate_encode(x_unit, n_t, rng).data
    if name == "latency":
        return latency_encode(x_unit, n_t).data
    if name == "identity":
        return identity_encode(IntervalGrid(0.0, 1.0, x_unit.size), n_t).data
    if name == "lower_triangular":
        return lower_triangle_encode(x_unit.size, n_t, allow_coarse).data
    if name == "float":
        return float_encode(x_unit, precision).data
    if name == "direct":
        return direct_encode(x_unit, n_t)
    raise EncodingError(f"unknown encoder {name!r}; choose from {', '.join(ENCODERS)}")


def describe(train):
    """Points-by-time 0/1 grid, one text line per neuron."""
    data = train.data if isinstance(train, SpikeTrain) else np.asarray(train)
    return "\n".join("".join(str(int(b)) for b in row) for row in data.T)
