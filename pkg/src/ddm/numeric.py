"""Dense float64 substrate: checked array ops, SGD step, portable RNG.

All downstream modules work on plain numpy arrays. Matrices are 2-D
row-major float64, vectors are 1-D float64. numpy supplies the arithmetic;
this module adds the boundary checks (shapes, finiteness) so that pipeline
misconfiguration fails fast with a named culprit instead of surfacing as a
NaN ten layers deeper.

Random numbers come from :class:`RngStream`, a thin wrapper around the
Philox 4x64 counter-based bit generator. Philox is stateless-counter based,
so a given (seed, stream) pair yields the same draw sequence on every
platform, which keeps golden tests portable.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError, NumericError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def as_matrix(a) -> np.ndarray:
    """Coerce to a 2-D row-major float64 array."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def as_vector(v) -> np.ndarray:
    """Coerce to a 1-D float64 array."""
    w = np.ascontiguousarray(v, dtype=np.float64)
    if w.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got ndim={w.ndim}")
    return w


def check_finite(a: np.ndarray, what: str = "array") -> np.ndarray:
    """Raise NumericError unless every entry of `a` is finite."""
    if not np.all(np.isfinite(a)):
        bad = int(np.flatnonzero(~np.isfinite(np.ravel(a)))[0])
        raise NumericError(f"non-finite value in {what} at flat index {bad}")
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul shape mismatch: {a.shape[0]}x{a.shape[1]} by "
            f"{b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def sigmoid(x) -> np.ndarray:
    """Elementwise logistic function 1 / (1 + exp(-x)).

    Evaluated in the numerically stable split form, so it saturates to 0/1
    for large |x| and never produces NaN on finite input.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_prime_from_value(s: np.ndarray) -> np.ndarray:
    """Derivative of the logistic function given its output value."""
    return s * (1.0 - s)


def _name_block(index: int, blocks: Sequence[tuple[str, int, int]] | None) -> str:
    if blocks:
        for name, start, stop in blocks:
            if start <= index < stop:
                return f"block '{name}' (flat index {index})"
    return f"flat index {index}"


def sgd_step(
    params: np.ndarray,
    grads: np.ndarray,
    lr: float,
    blocks: Sequence[tuple[str, int, int]] | None = None,
) -> np.ndarray:
    """One stochastic gradient descent step: params - lr * grads.

    `params` and `grads` are flat views of the full parameter set; `blocks`
    optionally maps index ranges to parameter-block names so a non-finite
    gradient can be reported against the block that produced it.
    """
    params = as_vector(params)
    grads = as_vector(grads)
    if params.shape != grads.shape:
        raise DimensionError(
            f"param/grad length mismatch: {params.shape[0]} vs {grads.shape[0]}"
        )
    if not lr > 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    finite = np.isfinite(grads)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise NumericError(f"non-finite gradient in {_name_block(bad, blocks)}")
    return params - lr * grads


def _splitmix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base: int, *path: int) -> int:
    """Deterministically derive a child seed from a base seed and an index path."""
    z = int(base) & _MASK64
    for p in path:
        z = _splitmix64(z ^ ((int(p) + 1) * _GOLDEN & _MASK64))
    return z


class RngStream:
    """Deterministic random stream backed by Philox 4x64-10.

    The 128-bit Philox key is (stream << 64) | seed, so distinct streams
    derived from one seed never collide. Identical (seed, stream) pairs
    produce bit-identical draw sequences.
    """

    algorithm = "philox4x64-10"

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        self._gen = np.random.Generator(
            np.random.Philox(key=self.seed | (self.stream << 64))
        )

    def child(self, index: int) -> "RngStream":
        """Independent derived stream; same (seed, index) gives the same child."""
        return RngStream(self.seed, _splitmix64(self.stream ^ ((index + 1) * _GOLDEN & _MASK64)))

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def integers(self, low: int, high: int | None = None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"RngStream(seed={self.seed}, stream={self.stream}, algorithm={self.algorithm})"
