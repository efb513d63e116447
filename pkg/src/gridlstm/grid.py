"""The full grid network.

A model is a J x K grid of cells, every cell running the same shared
LSTM core (one core per direction), plus a sigmoid feed-forward layer
and a softmax output layer on the concatenated final hidden outputs.

Within a time step all cells advance synchronously: each cell reads its
four neighbors' hidden outputs from the previous step only, so state is
double-buffered and the evaluation order inside a step cannot matter.
Rollouts are batched: arrays carry a leading (batch, rows, cols) block
flattened to batch*rows*cols gate rows.
"""
from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import core as _core
from .core import BIAS_NAMES, CellCoreParams, CoreGradients, MATRIX_NAMES, StepTape
from .errors import ConfigError, EmptyInputError, FormatError, ShapeError
from .kernels import init_matrix, matvec, sigmoid

DIRECTIONS = ("unidirectional", "bidirectional")
AGGREGATIONS = ("full-hidden", "last-unit-only")

HEAD_NAMES = ("W_ff", "b_ff", "W_out", "b_out")


@dataclass(frozen=True)
class GridConfig:
    """Topology and cell configuration of a grid model."""
    rows: int
    cols: int
    input_dim: int = 1
    hidden_dim: int = 5
    neighbor_outputs: int = 1
    direction: str = "unidirectional"
    aggregation: str = "full-hidden"
    use_bias: bool = False

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("grid must have at least one row and one column")
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ConfigError("input_dim and hidden_dim must be >= 1")
        if not 1 <= self.neighbor_outputs <= self.hidden_dim:
            raise ConfigError("neighbor_outputs must satisfy 1 <= q <= hidden_dim")
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"direction must be one of {DIRECTIONS}")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(f"aggregation must be one of {AGGREGATIONS}")

    @property
    def cells(self) -> int:
        return self.rows * self.cols

    @property
    def num_directions(self) -> int:
        return 2 if self.direction == "bidirectional" else 1

    @property
    def per_cell_output(self) -> int:
        per_dir = self.hidden_dim if self.aggregation == "full-hidden" else 1
        return per_dir * self.num_directions

    @property
    def head_input_len(self) -> int:
        return self.cells * self.per_cell_output


class HeadParams:
    """Feed-forward layer plus softmax output layer."""

    def __init__(self, input_len: int, ff_dim: int, classes: int):
        if classes < 2:
            raise ConfigError("classifier needs at least 2 classes")
        if input_len < 1 or ff_dim < 1:
            raise ConfigError("head dimensions must be >= 1")
        self.input_len = int(input_len)
        self.ff_dim = int(ff_dim)
        self.classes = int(classes)
        self.W_ff = np.zeros((ff_dim, input_len))
        self.b_ff = np.zeros(ff_dim)
        self.W_out = np.zeros((classes, ff_dim))
        self.b_out = np.zeros(classes)

    @classmethod
    def random(cls, input_len, ff_dim, classes, rng, scale_mode="fan-balanced"):
        head = cls(input_len, ff_dim, classes)
        head.W_ff = init_matrix(ff_dim, input_len, rng, scale_mode)
        head.W_out = init_matrix(classes, ff_dim, rng, scale_mode)
        return head

    def named_arrays(self):
        for name in HEAD_NAMES:
            yield name, getattr(self, name)

    def copy(self) -> "HeadParams":
        head = HeadParams(self.input_len, self.ff_dim, self.classes)
        for name, arr in self.named_arrays():
            setattr(head, name, arr.copy())
        return head

    def apply_gradients(self, grads: "HeadGradients", lr: float) -> None:
        for name, arr in self.named_arrays():
            arr -= lr * getattr(grads, name)


class HeadGradients:
    def __init__(self, head: HeadParams):
        for name, arr in head.named_arrays():
            setattr(self, name, np.zeros_like(arr))

    def named_arrays(self):
        for name in HEAD_NAMES:
            yield name, getattr(self, name)

    def add_(self, other: "HeadGradients") -> "HeadGradients":
        for name in HEAD_NAMES:
            getattr(self, name).__iadd__(getattr(other, name))
        return self

    def scale_(self, a: float) -> "HeadGradients":
        for name in HEAD_NAMES:
            getattr(self, name).__imul__(a)
        return self


class GridModel:
    """Grid config plus one shared cell core per direction plus the head."""

    def __init__(self, grid: GridConfig, cores, head: HeadParams):
        cores = list(cores)
        if len(cores) != grid.num_directions:
            raise ShapeError(f"expected {grid.num_directions} core(s), got {len(cores)}")
        for c in cores:
            if (c.input_dim != grid.input_dim or c.hidden_dim != grid.hidden_dim
                    or c.neighbor_outputs != grid.neighbor_outputs or c.use_bias != grid.use_bias):
                raise ShapeError("core dimensions do not match the grid config")
        if head.input_len != grid.head_input_len:
            raise ShapeError(
                f"head expects input length {head.input_len}, grid aggregates to {grid.head_input_len}")
        self.grid = grid
        self.cores = cores
        self.head = head

    @classmethod
    def random(cls, grid: GridConfig, ff_dim: int, classes: int, rng,
               scale_mode="fan-balanced"):
        cores = [CellCoreParams.random(grid.input_dim, grid.hidden_dim, rng,
                                       grid.neighbor_outputs, grid.use_bias, scale_mode)
                 for _ in range(grid.num_directions)]
        head = HeadParams.random(grid.head_input_len, ff_dim, classes, rng, scale_mode)
        return cls(grid, cores, head)

    @property
    def classes(self) -> int:
        return self.head.classes

    def named_arrays(self):
        """All trainable arrays as ('fwd.W_i', array)-style pairs."""
        labels = ("fwd", "bwd")
        for d, core in enumerate(self.cores):
            for name, arr in core.named_arrays():
                yield f"{labels[d]}.{name}", arr
        for name, arr in self.head.named_arrays():
            yield f"head.{name}", arr

    def copy(self) -> "GridModel":
        return GridModel(self.grid, [c.copy() for c in self.cores], self.head.copy())


@dataclass
class ModelConfig:
    """Architecture description sufficient to build a fresh model."""
    grid: GridConfig
    ff_dim: int
    classes: int

    def build(self, rng) -> GridModel:
        return GridModel.random(self.grid, self.ff_dim, self.classes, rng)


_CONFIG_KEYS = {
    "grid", "input-dim", "hidden", "neighbor-outputs", "direction",
    "aggregation", "use-bias", "ff-neurons", "classes",
}


def parse_model_config(text: str) -> ModelConfig:
    """Parse the ``key value`` model config format (see docs/formats.md)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise ConfigError(f"line {lineno}: expected 'key value', got {raw!r}")
        key, value = parts[0], parts[1].strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    for required in ("grid", "classes"):
        if required not in values:
            raise ConfigError(f"model config is missing the {required!r} entry")
    try:
        rows_s, cols_s = values["grid"].lower().split("x")
        rows, cols = int(rows_s), int(cols_s)
    except ValueError:
        raise ConfigError(f"grid must look like '4x5', got {values['grid']!r}") from None
    grid = GridConfig(
        rows=rows, cols=cols,
        input_dim=int(values.get("input-dim", 1)),
        hidden_dim=int(values.get("hidden", 5)),
        neighbor_outputs=int(values.get("neighbor-outputs", 1)),
        direction=values.get("direction", "unidirectional"),
        aggregation=values.get("aggregation", "full-hidden"),
        use_bias=values.get("use-bias", "off") in ("on", "true", "yes", "1"),
    )
    return ModelConfig(grid=grid, ff_dim=int(values.get("ff-neurons", 50)),
                       classes=int(values["classes"]))


def load_model_config(path) -> ModelConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model_config(fh.read())


# ---------------------------------------------------------------------------
# Neighbor routing


def gather_neighbors(grid: GridConfig, prev_hidden, j: int, k: int) -> np.ndarray:
    """Neighbor vector for cell (j, k) from the previous step's hidden grid.

    Concatenates the designated (last q) hidden elements of the up,
    down, left and right neighbors in that fixed order; out-of-grid
    slots stay zero.
    """
    if not (0 <= j < grid.rows and 0 <= k < grid.cols):
        raise IndexError(f"cell ({j}, {k}) outside {grid.rows}x{grid.cols} grid")
    hidden = np.asarray(prev_hidden, dtype=np.float64)
    if hidden.shape != (grid.rows, grid.cols, grid.hidden_dim):
        raise ShapeError(
            f"prev_hidden must be ({grid.rows}, {grid.cols}, {grid.hidden_dim}), got {hidden.shape}")
    q = grid.neighbor_outputs
    out = np.zeros(4 * q)
    offsets = ((-1, 0), (1, 0), (0, -1), (0, 1))
    for slot, (dj, dk) in enumerate(offsets):
        jj, kk = j + dj, k + dk
        if 0 <= jj < grid.rows and 0 <= kk < grid.cols:
            out[slot * q:(slot + 1) * q] = hidden[jj, kk, grid.hidden_dim - q:]
    return out


def _neighbor_matrix(hidden, q: int) -> np.ndarray:
    """Batched neighbor vectors: (B, J, K, G) hidden -> (B, J, K, 4q)."""
    b, rows, cols, g = hidden.shape
    tail = hidden[..., g - q:]
    n = np.zeros((b, rows, cols, 4 * q), dtype=hidden.dtype)
    n[:, 1:, :, 0:q] = tail[:, :-1, :, :]        # up: (j-1, k)
    n[:, :-1, :, q:2 * q] = tail[:, 1:, :, :]    # down: (j+1, k)
    n[:, :, 1:, 2 * q:3 * q] = tail[:, :, :-1, :]  # left: (j, k-1)
    n[:, :, :-1, 3 * q:4 * q] = tail[:, :, 1:, :]  # right: (j, k+1)
    return n


def _scatter_neighbor_grads(grad_n, q: int, g: int) -> np.ndarray:
    """Route grad wrt neighbor vectors back onto the hidden grid (adjoint
    of _neighbor_matrix)."""
    b, rows, cols, _ = grad_n.shape
    out = np.zeros((b, rows, cols, g))
    tail = out[..., g - q:]
    tail[:, :-1, :, :] += grad_n[:, 1:, :, 0:q]
    tail[:, 1:, :, :] += grad_n[:, :-1, :, q:2 * q]
    tail[:, :, :-1, :] += grad_n[:, :, 1:, 2 * q:3 * q]
    tail[:, :, 1:, :] += grad_n[:, :, :-1, 3 * q:4 * q]
    return out


# ---------------------------------------------------------------------------
# Forward


def softmax(z) -> np.ndarray:
    """Numerically stable softmax; output sums to 1 and lies in (0, 1)."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def head_forward(head: HeadParams, h_vec):
    """Head on one aggregated vector: returns (ff activation, class probs)."""
    z_ff = matvec(head.W_ff, h_vec) + head.b_ff
    ff = sigmoid(z_ff)
    z_out = matvec(head.W_out, ff) + head.b_out
    return ff, softmax(z_out)


def mse_loss(y_hat, y) -> float:
    """Half squared error between predicted and one-hot target vectors."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ShapeError(f"prediction has shape {y_hat.shape}, target {y.shape}")
    d = y - y_hat
    return 0.5 * float(d @ d)


@dataclass
class RolloutTape:
    """Full record of one forward pass, sufficient for exact backward.

    direction_tapes[d] lists StepTapes in direction d's own processing
    order (the backward direction consumed the time-reversed sequence).
    """
    direction_tapes: list
    h_final: list
    H: np.ndarray
    ff: np.ndarray
    y_hat: np.ndarray
    batch: int


def _rollout_direction(core: CellCoreParams, grid: GridConfig, values, reverse: bool):
    """values: (B, J, K, T, m). Returns (final hidden (B,J,K,G), tapes)."""
    b = values.shape[0]
    rows, cols, g = grid.rows, grid.cols, grid.hidden_dim
    r = b * rows * cols
    steps = values.shape[3]
    packed = _core.PackedCore(core)
    h = np.zeros((b, rows, cols, g))
    s = np.zeros((b, rows, cols, g))
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    tapes = []
    for t in order:
        n = _neighbor_matrix(h, grid.neighbor_outputs)
        x_t = values[:, :, :, t, :].reshape(r, grid.input_dim)
        tape = _core.step_forward_batch(core, x_t, h.reshape(r, g), s.reshape(r, g),
                                        n.reshape(r, 4 * grid.neighbor_outputs),
                                        packed=packed)
        h = tape.h.reshape(b, rows, cols, g)
        s = tape.s.reshape(b, rows, cols, g)
        tapes.append(tape)
    return h, tapes


def _aggregate(grid: GridConfig, finals) -> np.ndarray:
    """Concatenate per-cell final hiddens (fwd then bwd per cell), row-major."""
    blocks = []
    for h in finals:
        blocks.append(h if grid.aggregation == "full-hidden" else h[..., -1:])
    stacked = np.concatenate(blocks, axis=-1)
    return stacked.reshape(stacked.shape[0], -1)


def _sample_values(sample) -> np.ndarray:
    values = getattr(sample, "values", sample)
    return np.asarray(values, dtype=np.float64)


def _check_sample_dims(grid: GridConfig, values: np.ndarray) -> None:
    if values.ndim != 4:
        raise ShapeError(f"sample values must be 4-D (J, K, T, m), got shape {values.shape}")
    j, k, steps, m = values.shape
    if (j, k, m) != (grid.rows, grid.cols, grid.input_dim):
        raise ShapeError(
            f"sample dims ({j}x{k}, input_dim {m}) do not match grid "
            f"({grid.rows}x{grid.cols}, input_dim {grid.input_dim})")
    if steps == 0:
        raise EmptyInputError("sample has zero time steps")


def forward_batch(model: GridModel, values_batch):
    """Forward pass over a stacked batch (B, J, K, T, m).

    Returns (class probabilities (B, c), RolloutTape).
    """
    values = np.asarray(values_batch, dtype=np.float64)
    if values.ndim != 5:
        raise ShapeError(f"batch values must be 5-D, got shape {values.shape}")
    _check_sample_dims(model.grid, values[0])
    grid = model.grid
    finals, all_tapes = [], []
    for d, core in enumerate(model.cores):
        h, tapes = _rollout_direction(core, grid, values, reverse=(d == 1))
        finals.append(h)
        all_tapes.append(tapes)
    big_h = _aggregate(grid, finals)
    b = values.shape[0]
    ff = np.empty((b, model.head.ff_dim))
    y_hat = np.empty((b, model.head.classes))
    for i in range(b):
        ff[i], y_hat[i] = head_forward(model.head, big_h[i])
    return y_hat, RolloutTape(direction_tapes=all_tapes, h_final=finals,
                              H=big_h, ff=ff, y_hat=y_hat, batch=b)


def forward(model: GridModel, sample):
    """Forward pass over a single sample; returns (probs (c,), tape)."""
    values = _sample_values(sample)
    _check_sample_dims(model.grid, values)
    y_hat, tape = forward_batch(model, values[None])
    return y_hat[0], tape


# ---------------------------------------------------------------------------
# Backward


def _head_backward(model: GridModel, tape: RolloutTape, targets):
    """Head gradients and the gradient on the aggregated vector H.

    dE/dy_hat = y_hat - y composed with the full softmax Jacobian.
    """
    y_hat, ff, big_h = tape.y_hat, tape.ff, tape.H
    d_y = y_hat - targets
    dz_out = y_hat * (d_y - np.sum(d_y * y_hat, axis=1, keepdims=True))
    head_grads = HeadGradients(model.head)
    head_grads.W_out += dz_out.T @ ff
    head_grads.b_out += dz_out.sum(axis=0)
    d_ff = dz_out @ model.head.W_out
    dz_ff = d_ff * ff * (1.0 - ff)
    head_grads.W_ff += dz_ff.T @ big_h
    head_grads.b_ff += dz_ff.sum(axis=0)
    d_big_h = dz_ff @ model.head.W_ff
    return head_grads, d_big_h


def _split_head_grad(grid: GridConfig, d_big_h) -> list:
    """Undo _aggregate: per-direction (B, J, K, G) grads on final hiddens."""
    b = d_big_h.shape[0]
    per_cell = grid.per_cell_output
    cellwise = d_big_h.reshape(b, grid.rows, grid.cols, per_cell)
    per_dir = per_cell // grid.num_directions
    out = []
    for d in range(grid.num_directions):
        block = cellwise[..., d * per_dir:(d + 1) * per_dir]
        if grid.aggregation == "full-hidden":
            out.append(block.copy())
        else:
            g = np.zeros((b, grid.rows, grid.cols, grid.hidden_dim))
            g[..., -1:] = block
            out.append(g)
    return out


def _bptt_direction(core: CellCoreParams, grid: GridConfig, tapes, grad_h_final):
    """Backpropagate one direction through time with neighbor routing."""
    b = grad_h_final.shape[0]
    rows, cols, g = grid.rows, grid.cols, grid.hidden_dim
    r = b * rows * cols
    q = grid.neighbor_outputs
    packed = _core.PackedCore(core)
    accum = _core._PackedGradAccumulator(core, packed)
    gh = grad_h_final
    gs = np.zeros_like(gh)
    for tape in reversed(tapes):
        dz, _, ghp, gsp, gn = _core._step_backward_raw(
            packed, tape, gh.reshape(r, g), gs.reshape(r, g), need_input_grad=False)
        accum.add_step(dz, tape)
        gh = ghp.reshape(b, rows, cols, g) + _scatter_neighbor_grads(
            gn.reshape(b, rows, cols, 4 * q), q, g)
        gs = gsp.reshape(b, rows, cols, g)
    return accum.finish()


def backward_batch(model: GridModel, tape: RolloutTape, targets):
    """Exact gradients of the summed batch loss wrt every parameter.

    targets: one-hot matrix (B, c). Returns (list of CoreGradients, one
    per direction, HeadGradients); shared-core gradients are summed over
    all cells, samples, and time steps.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != tape.y_hat.shape:
        raise ShapeError(f"targets have shape {targets.shape}, predictions {tape.y_hat.shape}")
    head_grads, d_big_h = _head_backward(model, tape, targets)
    finals_grads = _split_head_grad(model.grid, d_big_h)
    core_grads = []
    for d, core in enumerate(model.cores):
        core_grads.append(_bptt_direction(core, model.grid, tape.direction_tapes[d],
                                          finals_grads[d]))
    return core_grads, head_grads


def backward(model: GridModel, tape: RolloutTape, y):
    """Gradients of E = mse_loss(forward(model, sample), y) for one sample."""
    y = np.asarray(y, dtype=np.float64)
    if tape.batch != 1:
        raise ShapeError("backward expects a single-sample tape; use backward_batch")
    if y.shape != (model.head.classes,):
        raise ShapeError(f"label vector must have length {model.head.classes}")
    return backward_batch(model, tape, y[None, :])


def apply_gradients(model: GridModel, core_grads, head_grads, lr: float) -> None:
    for core, grads in zip(model.cores, core_grads):
        core.apply_gradients(grads, lr)
    model.head.apply_gradients(head_grads, lr)


# ---------------------------------------------------------------------------
# Parameter census


@dataclass
class ParamReport:
    """Exact trainable-parameter counts plus back-of-envelope estimates.

    The two estimates mirror the usual quick comparisons: a shared-cell
    recurrent front end scales with (units x input_dim), a monolithic
    LSTM reading all sources scales with (units x input_dim x cells).
    Both are order-of-magnitude figures, not exact counts; the exact
    census is authoritative.
    """
    cell_params: int
    head_params: int
    total_params: int
    cellular_estimate: int
    monolithic_estimate: int
    monolithic_recurrent_exact: int
    comparison_units: int

    def __post_init__(self):
        assert self.total_params == self.cell_params + self.head_params


def exact_lstm_param_count(units: int, input_dim: int, use_bias: bool = False) -> int:
    """Exact recurrent parameter count of one plain LSTM layer."""
    n = 4 * (units * input_dim) + 4 * (units * units)
    if use_bias:
        n += 4 * units
    return n


def count_params(model: GridModel, comparison_units: int = 256) -> ParamReport:
    """Census every trainable entry and evaluate the two scaling formulas."""
    cell = sum(arr.size for core in model.cores for _, arr in core.named_arrays())
    head = sum(arr.size for _, arr in model.head.named_arrays())
    grid = model.grid
    units_total = grid.hidden_dim * grid.num_directions
    ff = model.head.ff_dim
    c = model.head.classes
    cellular_estimate = (units_total * grid.input_dim) + (grid.cells * ff) + c * ff
    monolithic_estimate = (comparison_units * grid.input_dim * grid.cells) \
        + (comparison_units * ff) + c * ff
    monolithic_recurrent = exact_lstm_param_count(
        comparison_units, grid.input_dim * grid.cells, grid.use_bias)
    return ParamReport(
        cell_params=cell, head_params=head, total_params=cell + head,
        cellular_estimate=cellular_estimate,
        monolithic_estimate=monolithic_estimate,
        monolithic_recurrent_exact=monolithic_recurrent,
        comparison_units=comparison_units,
    )


# ---------------------------------------------------------------------------
# Receptive-field probe


def receptive_field_probe(model: GridModel, sample, source_cell, target_cell,
                          delta: float = 0.5, threshold: float = 1e-12):
    """First time step at which the target cell reacts to a t=0 perturbation
    of the source cell's input.

    Neighbor signals hop one grid step per time step, so for generic
    weights this equals the Manhattan distance between the cells. Uses
    the forward-direction states. Returns None if the target never moves.
    """
    grid = model.grid
    sj, sk = source_cell
    tj, tk = target_cell
    for (j, k) in ((sj, sk), (tj, tk)):
        if not (0 <= j < grid.rows and 0 <= k < grid.cols):
            raise IndexError(f"cell ({j}, {k}) outside {grid.rows}x{grid.cols} grid")
    values = _sample_values(sample)
    _check_sample_dims(grid, values)
    perturbed = values.copy()
    perturbed[sj, sk, 0, :] += delta
    _, base_tape = forward(model, values)
    _, pert_tape = forward(model, perturbed)
    base_steps = base_tape.direction_tapes[0]
    pert_steps = pert_tape.direction_tapes[0]
    rows, cols, g = grid.rows, grid.cols, grid.hidden_dim
    for t, (a, b) in enumerate(zip(base_steps, pert_steps)):
        ha = a.h.reshape(rows, cols, g)[tj, tk]
        hb = b.h.reshape(rows, cols, g)[tj, tk]
        if np.max(np.abs(ha - hb)) > threshold:
            return t
    return None


# ---------------------------------------------------------------------------
# Serialization

_MODEL_MAGIC = b"DCRN"
_MODEL_VERSION = 1
_DIR_FLAGS = {"unidirectional": 0, "bidirectional": 1}
_AGG_FLAGS = {"full-hidden": 0, "last-unit-only": 1}


def model_to_bytes(model: GridModel) -> bytes:
    """Self-describing binary layout; see docs/formats.md."""
    grid = model.grid
    buf = io.BytesIO()
    buf.write(_MODEL_MAGIC)
    buf.write(struct.pack("<I", _MODEL_VERSION))
    buf.write(struct.pack("<7I", grid.rows, grid.cols, grid.input_dim, grid.hidden_dim,
                          grid.neighbor_outputs, model.head.ff_dim, model.head.classes))
    buf.write(struct.pack("<4B", _DIR_FLAGS[grid.direction], _AGG_FLAGS[grid.aggregation],
                          1 if grid.use_bias else 0, 0))
    for core in model.cores:
        for _, arr in core.named_arrays():
            buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    for _, arr in model.head.named_arrays():
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def model_from_bytes(data: bytes) -> GridModel:
    if data[:4] != _MODEL_MAGIC:
        raise FormatError("not a grid model file (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != _MODEL_VERSION:
        raise FormatError(f"unsupported model format version {version}")
    rows, cols, m, g, q, ff_dim, classes = struct.unpack_from("<7I", data, 8)
    dir_flag, agg_flag, bias_flag, _ = struct.unpack_from("<4B", data, 36)
    rev_dir = {v: k for k, v in _DIR_FLAGS.items()}
    rev_agg = {v: k for k, v in _AGG_FLAGS.items()}
    if dir_flag not in rev_dir or agg_flag not in rev_agg:
        raise FormatError("unknown direction/aggregation flag")
    grid = GridConfig(rows=rows, cols=cols, input_dim=m, hidden_dim=g,
                      neighbor_outputs=q, direction=rev_dir[dir_flag],
                      aggregation=rev_agg[agg_flag], use_bias=bool(bias_flag))
    offset = 40

    def take(shape):
        nonlocal offset
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(data):
            raise FormatError("model file truncated")
        arr = np.frombuffer(data[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        offset = end
        return arr

    cores = []
    for _ in range(grid.num_directions):
        core = CellCoreParams(m, g, q, grid.use_bias)
        for name in MATRIX_NAMES:
            setattr(core, name, take(getattr(core, name).shape))
        if grid.use_bias:
            for name in BIAS_NAMES:
                setattr(core, name, take((g,)))
        cores.append(core)
    head = HeadParams(grid.head_input_len, ff_dim, classes)
    for name in HEAD_NAMES:
        setattr(head, name, take(getattr(head, name).shape))
    if offset != len(data):
        raise FormatError("model file has trailing bytes")
    return GridModel(grid, cores, head)


def save_model(model: GridModel, path) -> None:
    data = model_to_bytes(model)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_model(path) -> GridModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
