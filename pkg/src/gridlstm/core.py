"""LSTM cell core: forward steps, exact analytic backward, bidirectional wrapper.

A cell core is one shared set of gate weights. The plain step reads the
signal input and its own previous hidden state; the cellular step
additionally reads a neighbor vector built from adjacent cells' previous
hidden outputs. Forward steps record a tape of every intermediate so the
backward pass recomputes nothing.

All step functions run on row batches internally: a batch row is one
cell (or one cell of one sample). The public single-cell operations wrap
a one-row batch, so a standalone rollout and a one-cell grid rollout go
through the identical code path. For speed the four gates are evaluated
through one stacked weight matrix per input kind (rows ordered
i, f, o, candidate).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, ShapeError
from .kernels import init_matrix, sigmoid, tanh_vec

# Gate weight attributes in declared (and serialized) order.
MATRIX_NAMES = (
    "W_i", "W_f", "W_o", "W_s",
    "U_i", "U_f", "U_o", "U_s",
    "W_Ni", "W_Nf", "W_No", "W_Ns",
)
BIAS_NAMES = ("b_i", "b_f", "b_o", "b_s")
_GATE_SUFFIXES = ("i", "f", "o", "s")


class CellCoreParams:
    """The single shared set of LSTM weights referenced by every cell.

    Shapes: W_* are (hidden, input), U_* are (hidden, hidden), W_N* are
    (hidden, 4*neighbor_outputs). Gates are bias-free by default; the
    optional b_* vectors have length hidden.
    """

    def __init__(self, input_dim: int, hidden_dim: int, neighbor_outputs: int = 1,
                 use_bias: bool = False):
        if input_dim < 1 or hidden_dim < 1:
            raise ShapeError("input_dim and hidden_dim must be >= 1")
        if not 1 <= neighbor_outputs <= hidden_dim:
            raise ShapeError("neighbor_outputs must satisfy 1 <= q <= hidden_dim")
        self.input_dim = int(input_dim)
        self.hidden_dim = int(hidden_dim)
        self.neighbor_outputs = int(neighbor_outputs)
        self.use_bias = bool(use_bias)
        g, m, nd = self.hidden_dim, self.input_dim, self.neighbor_dim
        for name in MATRIX_NAMES:
            if name.startswith("W_N"):
                cols = nd
            elif name.startswith("U"):
                cols = g
            else:
                cols = m
            setattr(self, name, np.zeros((g, cols)))
        if self.use_bias:
            for name in BIAS_NAMES:
                setattr(self, name, np.zeros(g))

    @property
    def neighbor_dim(self) -> int:
        return 4 * self.neighbor_outputs

    @classmethod
    def random(cls, input_dim, hidden_dim, rng, neighbor_outputs=1, use_bias=False,
               scale_mode="fan-balanced"):
        p = cls(input_dim, hidden_dim, neighbor_outputs, use_bias)
        for name, arr in p.named_arrays():
            if arr.ndim == 2:
                setattr(p, name, init_matrix(arr.shape[0], arr.shape[1], rng, scale_mode))
        return p

    def named_arrays(self):
        """(name, array) pairs in declared order; biases last when enabled."""
        for name in MATRIX_NAMES:
            yield name, getattr(self, name)
        if self.use_bias:
            for name in BIAS_NAMES:
                yield name, getattr(self, name)

    def same_dims(self, other: "CellCoreParams") -> bool:
        return (self.input_dim == other.input_dim
                and self.hidden_dim == other.hidden_dim
                and self.neighbor_outputs == other.neighbor_outputs
                and self.use_bias == other.use_bias)

    def copy(self) -> "CellCoreParams":
        p = CellCoreParams(self.input_dim, self.hidden_dim, self.neighbor_outputs, self.use_bias)
        for name, arr in self.named_arrays():
            setattr(p, name, arr.copy())
        return p

    def apply_gradients(self, grads: "CoreGradients", lr: float) -> None:
        for name, arr in self.named_arrays():
            arr -= lr * getattr(grads, name)


class CoreGradients:
    """Gradient accumulator mirroring CellCoreParams shapes exactly."""

    def __init__(self, params: CellCoreParams):
        self._names = tuple(name for name, _ in params.named_arrays())
        for name, arr in params.named_arrays():
            setattr(self, name, np.zeros_like(arr))

    def named_arrays(self):
        for name in self._names:
            yield name, getattr(self, name)

    def add_(self, other: "CoreGradients") -> "CoreGradients":
        for name in self._names:
            getattr(self, name).__iadd__(getattr(other, name))
        return self

    def scale_(self, a: float) -> "CoreGradients":
        for name in self._names:
            getattr(self, name).__imul__(a)
        return self


class PackedCore:
    """Gate weights stacked row-wise ([i; f; o; candidate]) for fast steps.

    A transient view of CellCoreParams; rebuild after any weight update.
    """

    def __init__(self, params: CellCoreParams):
        self.params = params
        g = params.hidden_dim
        self.hidden_dim = g
        self.W = np.vstack([params.W_i, params.W_f, params.W_o, params.W_s])
        self.WN = np.vstack([params.W_Ni, params.W_Nf, params.W_No, params.W_Ns])
        self.U = np.vstack([params.U_i, params.U_f, params.U_o, params.U_s])
        self.b = None
        if params.use_bias:
            self.b = np.concatenate([params.b_i, params.b_f, params.b_o, params.b_s])

    def split_rows(self, stacked, prefix: str) -> dict:
        g = self.hidden_dim
        return {f"{prefix}{suffix}": stacked[i * g:(i + 1) * g]
                for i, suffix in enumerate(_GATE_SUFFIXES)}


@dataclass
class CellState:
    """Hidden output and running memory of one cell; zeros at t=0."""
    h: np.ndarray
    s: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim: int) -> "CellState":
        return cls(np.zeros(hidden_dim), np.zeros(hidden_dim))


@dataclass
class StepTape:
    """Every intermediate of one forward step, batched over rows.

    ``n`` is None for plain (neighbor-free) steps. Pre-activations are
    z*, post-activations are i/f/o/g; s is the new memory, h the new
    hidden output.
    """
    x: np.ndarray
    n: np.ndarray | None
    h_prev: np.ndarray
    s_prev: np.ndarray
    zi: np.ndarray
    zf: np.ndarray
    zo: np.ndarray
    zg: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    s: np.ndarray
    tanh_s: np.ndarray
    h: np.ndarray

    @property
    def rows(self) -> int:
        return self.x.shape[0]


def step_forward_batch(params: CellCoreParams, x, h_prev, s_prev, n=None,
                       packed: PackedCore | None = None) -> StepTape:
    """One gate update for a batch of rows; returns the full tape.

    x: (R, input_dim); h_prev, s_prev: (R, hidden); n: (R, 4q) or None.
    """
    if packed is None:
        packed = PackedCore(params)
    g = params.hidden_dim
    z = x @ packed.W.T
    if n is not None:
        z += n @ packed.WN.T
    z += h_prev @ packed.U.T
    if packed.b is not None:
        z += packed.b
    gates = sigmoid(z[:, :3 * g])
    i, f, o = gates[:, :g], gates[:, g:2 * g], gates[:, 2 * g:]
    cand = tanh_vec(z[:, 3 * g:])
    s = f * s_prev + i * cand
    tanh_s = tanh_vec(s)
    h = o * tanh_s
    return StepTape(x=x, n=n, h_prev=h_prev, s_prev=s_prev,
                    zi=z[:, :g], zf=z[:, g:2 * g], zo=z[:, 2 * g:3 * g], zg=z[:, 3 * g:],
                    i=i, f=f, o=o, g=cand, s=s, tanh_s=tanh_s, h=h)


def _step_backward_raw(packed: PackedCore, tape: StepTape, grad_h, grad_s,
                       need_input_grad: bool):
    """Backward through one step; returns packed pieces.

    (dz (R, 4G) ready for weight-gradient products, grad_x or None,
    grad_h_prev, grad_s_prev, grad_n or None).
    """
    if grad_h.shape != tape.h.shape or grad_s.shape != tape.s.shape:
        raise ShapeError("upstream gradient shapes do not match the tape")
    g = packed.hidden_dim
    d_o = grad_h * tape.tanh_s
    d_s = grad_s + grad_h * tape.o * (1.0 - tape.tanh_s ** 2)
    grad_s_prev = d_s * tape.f
    dz = np.empty((tape.rows, 4 * g))
    dz[:, :g] = (d_s * tape.g) * tape.i * (1.0 - tape.i)
    dz[:, g:2 * g] = (d_s * tape.s_prev) * tape.f * (1.0 - tape.f)
    dz[:, 2 * g:3 * g] = d_o * tape.o * (1.0 - tape.o)
    dz[:, 3 * g:] = (d_s * tape.i) * (1.0 - tape.g ** 2)
    grad_h_prev = dz @ packed.U
    grad_n = dz @ packed.WN if tape.n is not None else None
    grad_x = dz @ packed.W if need_input_grad else None
    return dz, grad_x, grad_h_prev, grad_s_prev, grad_n


def step_backward_batch(params: CellCoreParams, tape: StepTape, grad_h, grad_s,
                        need_input_grad: bool = False, packed: PackedCore | None = None):
    """Exact gradients of one step given upstream grads on h and s.

    Returns (CoreGradients, grad_x or None, grad_h_prev, grad_s_prev,
    grad_n or None). Parameter gradients are summed over the batch rows.
    """
    if packed is None:
        packed = PackedCore(params)
    dz, grad_x, grad_h_prev, grad_s_prev, grad_n = _step_backward_raw(
        packed, tape, grad_h, grad_s, need_input_grad)
    grads = CoreGradients(params)
    _accumulate_param_grads(params, packed, grads, dz, tape)
    return grads, grad_x, grad_h_prev, grad_s_prev, grad_n


def _accumulate_param_grads(params, packed, grads: CoreGradients, dz, tape) -> None:
    dw = dz.T @ tape.x
    du = dz.T @ tape.h_prev
    for name, arr in packed.split_rows(dw, "W_").items():
        getattr(grads, name).__iadd__(arr)
    for name, arr in packed.split_rows(du, "U_").items():
        getattr(grads, name).__iadd__(arr)
    if tape.n is not None:
        dwn = dz.T @ tape.n
        for name, arr in packed.split_rows(dwn, "W_N").items():
            getattr(grads, name).__iadd__(arr)
    if params.use_bias:
        db = dz.sum(axis=0)
        for name, arr in packed.split_rows(db, "b_").items():
            getattr(grads, name).__iadd__(arr)


class _PackedGradAccumulator:
    """Accumulates packed weight-gradient products across a whole rollout,
    splitting into CoreGradients once at the end."""

    def __init__(self, params: CellCoreParams, packed: PackedCore):
        self.params = params
        self.packed = packed
        g, m = params.hidden_dim, params.input_dim
        self.dw = np.zeros((4 * g, m))
        self.du = np.zeros((4 * g, g))
        self.dwn = np.zeros((4 * g, params.neighbor_dim))
        self.db = np.zeros(4 * g) if params.use_bias else None

    def add_step(self, dz, tape) -> None:
        self.dw += dz.T @ tape.x
        self.du += dz.T @ tape.h_prev
        if tape.n is not None:
            self.dwn += dz.T @ tape.n
        if self.db is not None:
            self.db += dz.sum(axis=0)

    def finish(self) -> CoreGradients:
        grads = CoreGradients(self.params)
        for name, arr in self.packed.split_rows(self.dw, "W_").items():
            setattr(grads, name, arr.copy())
        for name, arr in self.packed.split_rows(self.du, "U_").items():
            setattr(grads, name, arr.copy())
        for name, arr in self.packed.split_rows(self.dwn, "W_N").items():
            setattr(grads, name, arr.copy())
        if self.db is not None:
            for name, arr in self.packed.split_rows(self.db, "b_").items():
                setattr(grads, name, arr.copy())
        return grads


def _check_step_args(params, x, prev):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.input_dim,):
        raise ShapeError(f"input has shape {x.shape}, expected ({params.input_dim},)")
    if prev.h.shape != (params.hidden_dim,) or prev.s.shape != (params.hidden_dim,):
        raise ShapeError("previous state does not match hidden_dim")
    return x


def lstm_step(params: CellCoreParams, x, prev: CellState):
    """Plain LSTM step (no neighbor term). Returns (new state, tape)."""
    x = _check_step_args(params, x, prev)
    tape = step_forward_batch(params, x[None, :], prev.h[None, :], prev.s[None, :], None)
    return CellState(tape.h[0].copy(), tape.s[0].copy()), tape


def cellular_lstm_step(params: CellCoreParams, x, neighbors, prev: CellState):
    """LSTM step with the neighbor term added to every gate pre-activation.

    ``neighbors`` holds the designated hidden outputs of the four
    adjacent cells from the previous time step (zeros where a neighbor
    does not exist), concatenated in the order up, down, left, right.
    """
    x = _check_step_args(params, x, prev)
    n = np.asarray(neighbors, dtype=np.float64)
    if n.shape != (params.neighbor_dim,):
        raise ShapeError(f"neighbor vector has shape {n.shape}, expected ({params.neighbor_dim},)")
    tape = step_forward_batch(params, x[None, :], prev.h[None, :], prev.s[None, :], n[None, :])
    return CellState(tape.h[0].copy(), tape.s[0].copy()), tape


def step_backward(params: CellCoreParams, tape: StepTape, grad_h, grad_s):
    """Single-cell backward step.

    Returns (CoreGradients, grad_x, grad_h_prev, grad_s_prev, grad_n);
    grad_n is a zero vector when the tape came from a plain step.
    """
    if tape.rows != 1:
        raise ShapeError("step_backward expects a single-cell tape; use step_backward_batch")
    grad_h = np.asarray(grad_h, dtype=np.float64)
    grad_s = np.asarray(grad_s, dtype=np.float64)
    if grad_h.shape != (params.hidden_dim,) or grad_s.shape != (params.hidden_dim,):
        raise ShapeError("upstream gradients must have length hidden_dim")
    grads, gx, ghp, gsp, gn = step_backward_batch(
        params, tape, grad_h[None, :], grad_s[None, :], need_input_grad=True)
    if gn is None:
        gn = np.zeros((1, params.neighbor_dim))
    return grads, gx[0], ghp[0], gsp[0], gn[0]


def rollout(params: CellCoreParams, x_seq, neighbor_seq=None):
    """Roll one cell over a whole sequence. Returns (final state, tapes).

    x_seq is (T, input_dim); neighbor_seq, when given, is (T, 4q) aligned
    with x_seq. Without it the plain (neighbor-free) step is used.
    """
    x_seq = np.asarray(x_seq, dtype=np.float64)
    if x_seq.ndim != 2 or x_seq.shape[1] != params.input_dim:
        raise ShapeError(f"x_seq must be (T, {params.input_dim}), got {x_seq.shape}")
    if x_seq.shape[0] == 0:
        raise EmptyInputError("rollout needs at least one time step")
    state = CellState.zeros(params.hidden_dim)
    tapes = []
    for t in range(x_seq.shape[0]):
        if neighbor_seq is None:
            state, tape = lstm_step(params, x_seq[t], state)
        else:
            state, tape = cellular_lstm_step(params, x_seq[t], neighbor_seq[t], state)
        tapes.append(tape)
    return state, tapes


def bidirectional_rollout(fwd: CellCoreParams, bwd: CellCoreParams, x_seq,
                          fwd_neighbors=None, bwd_neighbors=None):
    """Run paired cores over the sequence in opposite directions.

    The forward core consumes t = 0..T-1, the backward core consumes
    t = T-1..0; the two never share state. Neighbor sequences, when
    given, are aligned with each direction's own processing order.
    Returns (h_fwd_final, h_bwd_final, (fwd_tapes, bwd_tapes)).
    """
    if not fwd.same_dims(bwd):
        raise ShapeError("forward and backward cores must have identical dimensions")
    x_seq = np.asarray(x_seq, dtype=np.float64)
    if x_seq.ndim != 2:
        raise ShapeError(f"x_seq must be 2-D (T, input_dim), got shape {x_seq.shape}")
    if x_seq.shape[0] == 0:
        raise EmptyInputError("bidirectional_rollout needs at least one time step")
    fwd_state, fwd_tapes = rollout(fwd, x_seq, fwd_neighbors)
    bwd_state, bwd_tapes = rollout(bwd, x_seq[::-1], bwd_neighbors)
    return fwd_state.h, bwd_state.h, (fwd_tapes, bwd_tapes)
