"""Sample formats, channel-to-grid mapping, preprocessing, synthetic data.

Byte-level layouts of the binary sample format and the text formats are
documented in docs/formats.md and covered by round-trip tests.
"""
from __future__ import annotations

import os
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, MappingError, ShapeError
from .kernels import make_rng


@dataclass
class GridSample:
    """One input instance: a J x K grid of m-dim signals over T steps."""
    values: np.ndarray  # (J, K, T, m) float64
    label: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 4:
            raise ShapeError(f"sample values must be (J, K, T, m), got shape {self.values.shape}")
        self.label = int(self.label)
        if self.label < 0:
            raise ConfigError("label must be a non-negative class index")

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    @property
    def steps(self):
        return self.values.shape[2]

    @property
    def input_dim(self):
        return self.values.shape[3]


@dataclass
class Dataset:
    """Homogeneous list of samples plus provenance metadata."""
    samples: list
    classes: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples:
            first = self.samples[0]
            for s in self.samples:
                if s.values.shape != first.values.shape:
                    raise ShapeError("dataset samples have inconsistent dimensions")
                if s.label >= self.classes:
                    raise ConfigError(f"label {s.label} >= declared class count {self.classes}")

    def __len__(self):
        return len(self.samples)

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def stacked_values(self) -> np.ndarray:
        return np.stack([s.values for s in self.samples])

    def subset(self, indices) -> "Dataset":
        return Dataset([self.samples[i] for i in indices], self.classes, dict(self.meta))


# ---------------------------------------------------------------------------
# Preprocessing


def zscore(series) -> np.ndarray:
    """Per-channel (x - mean)/std along the last (time) axis.

    Uses the population std; channels with std below 1e-12 come back as
    all zeros instead of blowing up.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.shape[-1] < 1:
        raise ShapeError("zscore needs at least one time sample")
    mean = x.mean(axis=-1, keepdims=True)
    std = x.std(axis=-1, keepdims=True)
    safe = np.where(std < 1e-12, 1.0, std)
    out = (x - mean) / safe
    return np.where(std < 1e-12, 0.0, out)


def decimate(series, factor: int) -> np.ndarray:
    """Stride downsampling along the last axis: keep indices 0, f, 2f, ...

    No anti-alias filter; never invents values. Output length is
    ceil(T/factor).
    """
    if int(factor) < 1:
        raise ConfigError(f"decimation factor must be >= 1, got {factor}")
    x = np.asarray(series, dtype=np.float64)
    return x[..., ::int(factor)].copy()


def segment(series, window_len: int, labels):
    """Cut a labeled recording into non-overlapping fixed-length windows.

    series: (..., T) with time last; labels: (T,) per-step label track.
    Windows inherit the label covering their span; windows that straddle
    a label boundary are dropped, as is the trailing partial window.
    Returns a list of (window, label) pairs.
    """
    x = np.asarray(series, dtype=np.float64)
    labels = np.asarray(labels)
    steps = x.shape[-1]
    if labels.shape != (steps,):
        raise ShapeError(f"label track must have length {steps}, got {labels.shape}")
    window_len = int(window_len)
    if window_len < 1:
        raise ConfigError("window_len must be >= 1")
    if window_len > steps:
        warnings.warn(f"window of {window_len} exceeds recording length {steps}; no segments",
                      stacklevel=2)
        return []
    out = []
    for start in range(0, steps - window_len + 1, window_len):
        span = labels[start:start + window_len]
        if np.all(span == span[0]):
            out.append((x[..., start:start + window_len].copy(), int(span[0])))
    return out


def balance_undersample(dataset: Dataset, seed: int) -> Dataset:
    """Reduce every class to the minority-class count by seeded sampling
    without replacement, then shuffle deterministically."""
    labels = dataset.labels()
    counts = np.bincount(labels, minlength=dataset.classes)
    if np.any(counts == 0):
        missing = [int(c) for c in np.flatnonzero(counts == 0)]
        raise ConfigError(f"cannot balance: classes {missing} have no samples")
    rng = make_rng(seed)
    target = int(counts.min())
    keep = []
    for c in range(dataset.classes):
        idx = np.flatnonzero(labels == c)
        keep.extend(rng.choice(idx, size=target, replace=False))
    keep = np.asarray(keep)
    keep = keep[rng.permutation(len(keep))]
    out = dataset.subset(keep)
    out.meta["balanced"] = f"undersampled to {target} per class (seed {seed})"
    return out


# ---------------------------------------------------------------------------
# Channel-to-grid mapping


@dataclass
class GridMapping:
    """Named source channels assigned to grid coordinates.

    Cells with no assigned channel stay zero-filled when a mapping is
    applied.
    """
    rows: int
    cols: int
    channels: dict  # name -> (j, k)

    def __post_init__(self):
        seen = {}
        for name, (j, k) in self.channels.items():
            if not (0 <= j < self.rows and 0 <= k < self.cols):
                raise MappingError(f"channel {name!r} maps to ({j}, {k}) outside "
                                   f"{self.rows}x{self.cols} grid")
            if (j, k) in seen:
                raise MappingError(f"channels {seen[(j, k)]!r} and {name!r} both map to ({j}, {k})")
            seen[(j, k)] = name

    def to_text(self) -> str:
        lines = [f"grid {self.rows} {self.cols}"]
        for name, (j, k) in self.channels.items():
            lines.append(f"{name} {j} {k}")
        return "\n".join(lines) + "\n"


def parse_mapping(text: str) -> GridMapping:
    """Parse the mapping text format: a ``grid J K`` line, then one
    ``<channel> <j> <k>`` line per source."""
    rows = cols = None
    channels = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if rows is None:
            if parts[0] != "grid" or len(parts) != 3:
                raise FormatError(f"line {lineno}: mapping must start with 'grid J K'")
            rows, cols = int(parts[1]), int(parts[2])
            continue
        if len(parts) != 3:
            raise FormatError(f"line {lineno}: expected '<channel> <j> <k>', got {raw!r}")
        name = parts[0]
        if name in channels:
            raise MappingError(f"line {lineno}: duplicate channel {name!r}")
        channels[name] = (int(parts[1]), int(parts[2]))
    if rows is None:
        raise FormatError("mapping file has no 'grid J K' line")
    return GridMapping(rows=rows, cols=cols, channels=channels)


def load_mapping(path) -> GridMapping:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_mapping(fh.read())


def apply_mapping(record, mapping: GridMapping, label: int = 0) -> GridSample:
    """Place named channel series onto the grid; unmapped cells are zero.

    record: dict of channel name -> (T,) or (T, m) array, all with equal
    T and m.
    """
    if not mapping.channels:
        raise MappingError("mapping assigns no channels")
    first = None
    for name in mapping.channels:
        if name not in record:
            raise MappingError(f"record is missing channel {name!r}")
        arr = np.asarray(record[name], dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ShapeError(f"channel {name!r} must be (T,) or (T, m), got shape {arr.shape}")
        if first is None:
            first = arr.shape
        elif arr.shape != first:
            raise ShapeError(f"channel {name!r} has shape {arr.shape}, expected {first}")
    steps, m = first
    values = np.zeros((mapping.rows, mapping.cols, steps, m))
    for name, (j, k) in mapping.channels.items():
        arr = np.asarray(record[name], dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        values[j, k] = arr
    return GridSample(values=values, label=label)


# ---------------------------------------------------------------------------
# Synthetic spatio-temporal dataset


def synth_dataset(rows: int, cols: int, steps: int, classes: int, per_class: int,
                  seed: int, noise: float = 0.3, amplitude: float = 2.0) -> Dataset:
    """Seeded synthetic dataset of localized sinusoidal bursts in noise.

    Each class owns a fixed frequency and a fixed cell neighborhood
    (a center cell plus its in-grid 4-neighbors, centers spread evenly
    over the grid). A sample of class r carries a sinusoid at the class
    frequency, with an independent random phase per neighborhood cell,
    over a random time interval, on top of Gaussian noise everywhere.

    Class frequencies are slow, (r+1)/2 cycles per window, and the burst
    interval ends in the last quarter of the window (random end, random
    length of T/2..3T/4, so the start is random too). These choices keep
    the task learnable by a recurrent readout of the final hidden state:
    transient events buried deep in the past of every sample would make
    plain SGD escape the uniform-prediction plateau only by luck.
    """
    cells = rows * cols
    if classes > cells:
        raise ConfigError(f"{classes} classes need at least {classes} cells, grid has {cells}")
    if classes < 1 or per_class < 1 or steps < 4:
        raise ConfigError("need classes >= 1, per_class >= 1, steps >= 4")
    rng = make_rng(seed)
    if classes == 1:
        centers = [0]
    else:
        centers = np.unique(np.round(np.linspace(0, cells - 1, classes)).astype(int))
    neighborhoods = []
    for flat in centers:
        j, k = divmod(int(flat), cols)
        hood = [(j, k)]
        for dj, dk in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            jj, kk = j + dj, k + dk
            if 0 <= jj < rows and 0 <= kk < cols:
                hood.append((jj, kk))
        neighborhoods.append(hood)
    t = np.arange(steps)
    samples = []
    for label in range(classes):
        freq = 0.5 * (label + 1)  # cycles over the full window
        for _ in range(per_class):
            length = int(rng.integers(steps // 2, (3 * steps) // 4 + 1))
            end = int(rng.integers((3 * steps) // 4, steps + 1))
            start = max(0, end - length)
            values = rng.normal(0.0, noise, size=(rows, cols, steps, 1))
            for (j, k) in neighborhoods[label]:
                phase = rng.uniform(0.0, 2.0 * np.pi)
                values[j, k, start:end, 0] += amplitude * np.sin(
                    2.0 * np.pi * freq * (t[start:end] - start) / steps + phase)
            samples.append(GridSample(values=values, label=label))
    return Dataset(samples=samples, classes=classes,
                   meta={"generator": "sinusoidal-burst", "seed": str(seed),
                         "noise": str(noise), "amplitude": str(amplitude),
                         "grid": f"{rows}x{cols}", "steps": str(steps)})


# ---------------------------------------------------------------------------
# Binary sample format and dataset directory layout

_SAMPLE_MAGIC = b"GTSD"
_SAMPLE_VERSION = 1


def _atomic_write(path, data: bytes) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def sample_to_bytes(sample: GridSample, classes: int) -> bytes:
    header = _SAMPLE_MAGIC + struct.pack(
        "<7I", _SAMPLE_VERSION, sample.rows, sample.cols, sample.input_dim,
        sample.steps, classes, sample.label)
    return header + np.ascontiguousarray(sample.values, dtype="<f8").tobytes()


def sample_from_bytes(data: bytes):
    """Returns (GridSample, declared class count)."""
    if data[:4] != _SAMPLE_MAGIC:
        raise FormatError("not a grid sample file (bad magic)")
    version, rows, cols, m, steps, classes, label = struct.unpack_from("<7I", data, 4)
    if version != _SAMPLE_VERSION:
        raise FormatError(f"unsupported sample format version {version}")
    expected = 32 + 8 * rows * cols * steps * m
    if len(data) != expected:
        raise FormatError(f"sample file is {len(data)} bytes, expected {expected}")
    values = np.frombuffer(data[32:], dtype="<f8").astype(np.float64)
    values = values.reshape(rows, cols, steps, m)
    return GridSample(values=values, label=label), classes


def save_sample(path, sample: GridSample, classes: int) -> None:
    _atomic_write(path, sample_to_bytes(sample, classes))


def load_sample(path):
    with open(path, "rb") as fh:
        return sample_from_bytes(fh.read())


INDEX_NAME = "index.tsv"


def save_dataset(dataset: Dataset, directory) -> None:
    """Write one .gtsd file per sample plus the sidecar index."""
    os.makedirs(directory, exist_ok=True)
    lines = [f"# gtsd-index {_SAMPLE_VERSION}", f"# classes={dataset.classes}"]
    for key in sorted(dataset.meta):
        lines.append(f"# {key}={dataset.meta[key]}")
    for i, sample in enumerate(dataset.samples):
        name = f"sample_{i:05d}.gtsd"
        save_sample(os.path.join(directory, name), sample, dataset.classes)
        lines.append(f"{name}\t{sample.label}")
    _atomic_write(os.path.join(directory, INDEX_NAME),
                  ("\n".join(lines) + "\n").encode("utf-8"))


def load_dataset(directory) -> Dataset:
    index_path = os.path.join(directory, INDEX_NAME)
    if not os.path.exists(index_path):
        raise FormatError(f"{directory} has no {INDEX_NAME}")
    meta = {}
    classes = None
    samples = []
    with open(index_path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    if key == "classes":
                        classes = int(value)
                    else:
                        meta[key] = value
                continue
            name, label_s = line.split("\t")
            sample, file_classes = load_sample(os.path.join(directory, name))
            if sample.label != int(label_s):
                raise FormatError(f"{name}: index label {label_s} != file label {sample.label}")
            if classes is None:
                classes = file_classes
            elif file_classes != classes:
                raise FormatError(f"{name}: class count {file_classes} != index {classes}")
            samples.append(sample)
    if classes is None or not samples:
        raise FormatError(f"{directory} contains no samples")
    return Dataset(samples=samples, classes=classes, meta=meta)
