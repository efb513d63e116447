"""Dense float64 numeric primitives.

Everything in this module is pure and deterministic: fixed reduction
order, seeded RNG, no hidden state. Vectors are 1-D float64 ndarrays,
matrices are 2-D float64 ndarrays (row-major).
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError, NumericDomainError, ShapeError

# Open-interval bounds for the squashing activations. Correctly rounded
# doubles hit exactly 1.0 for sigmoid(x >= ~37.7) and tanh(x >= ~19.1),
# so saturated outputs are pulled back to the nearest representable
# value inside the codomain.
_ONE_BELOW = np.nextafter(1.0, 0.0)
_ZERO_ABOVE = np.nextafter(0.0, 1.0)


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator; identical seed gives an identical draw sequence."""
    return np.random.default_rng(int(seed))


def as_vector(data) -> np.ndarray:
    v = np.asarray(data, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def as_matrix(data) -> np.ndarray:
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def _require_finite(x: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericDomainError(f"{op}: non-finite input entry")


def sigmoid(v) -> np.ndarray:
    """Elementwise 1/(1+e^-x); outputs lie strictly inside (0, 1)."""
    v = np.asarray(v, dtype=np.float64)
    _require_finite(v, "sigmoid")
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-v))
    return np.clip(out, _ZERO_ABOVE, _ONE_BELOW)


def tanh_vec(v) -> np.ndarray:
    """Elementwise hyperbolic tangent; outputs lie strictly inside (-1, 1)."""
    v = np.asarray(v, dtype=np.float64)
    _require_finite(v, "tanh")
    return np.clip(np.tanh(v), -_ONE_BELOW, _ONE_BELOW)


def matvec(m, v) -> np.ndarray:
    """Matrix-vector product with a fixed summation order.

    Accumulates column-by-column in ascending column index, which makes
    the result bit-identical to a naive scalar double loop and therefore
    reproducible everywhere.
    """
    m = as_matrix(m)
    v = as_vector(v)
    if m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: matrix is {m.shape}, vector has length {v.shape[0]}")
    out = np.zeros(m.shape[0], dtype=np.float64)
    for j in range(m.shape[1]):
        out += m[:, j] * v[j]
    return out


def init_matrix(rows: int, cols: int, rng: np.random.Generator, scale_mode: str = "fan-balanced") -> np.ndarray:
    """Uniform random matrix in [-s, s].

    ``fan-balanced`` uses s = sqrt(6/(rows+cols)); ``fixed`` uses s = 0.1.
    """
    rows = int(rows)
    cols = int(cols)
    if rows < 1 or cols < 1:
        raise ShapeError(f"init_matrix: dimensions must be >= 1, got {rows}x{cols}")
    if scale_mode == "fan-balanced":
        s = np.sqrt(6.0 / (rows + cols))
    elif scale_mode == "fixed":
        s = 0.1
    else:
        raise ConfigError(f"unknown scale_mode {scale_mode!r}")
    return rng.uniform(-s, s, size=(rows, cols))
