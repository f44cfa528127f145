"""Deterministic numerics: seedable random streams, stable reductions, PCA,
and matrix serialization.

Everything here is float64 and single-threaded by design, so that a run is a
pure function of its seeds. The random stream is a counter-based SplitMix64
generator implemented in this file (no dependency on numpy's bit generators),
which makes every draw reproducible from (seed, counter) alone and lets
callers derive independent child streams instead of sharing one.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "ContractViolation",
    "RandomStream",
    "child_seed",
    "mix64",
    "logsumexp",
    "row_logsumexp",
    "matmul",
    "pca_project",
    "save_matrix_csv",
    "load_matrix_csv",
    "save_matrix_bin",
    "load_matrix_bin",
    "require",
    "check_finite",
]


class ContractViolation(ValueError):
    """Raised when a caller breaks a documented precondition."""


def require(condition: bool, message: str) -> None:
    if not condition:
        raise ContractViolation(message)


def check_finite(a: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{name} contains NaN or Inf entries")


# ---------------------------------------------------------------------------
# SplitMix64 random stream
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 finalizer: a bijective avalanche mix of one 64-bit word."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX_A) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & _MASK64
    return z ^ (z >> 31)


def child_seed(seed: int, tag: int) -> int:
    """Derive an independent child seed from (seed, tag).

    Distinct tags under the same parent give distinct seeds: tag -> GAMMA*(tag+1)
    is injective modulo 2**64 (GAMMA is odd) and mix64 is a bijection.
    """
    return mix64((seed & _MASK64) ^ ((_GAMMA * (tag + 1)) & _MASK64))


class RandomStream:
    """Counter-based SplitMix64 stream of 64-bit words.

    Word i of a stream with seed s is ``mix64(s + (i+1)*GAMMA mod 2**64)``.
    Because each word is a pure function of (seed, index), blocks of draws can
    be produced vectorized, and an identical seed always replays an identical
    sequence. A stream is single-owner: callers that need parallel or
    interleaved randomness should derive children via :meth:`split`.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def split(self, tag: int) -> "RandomStream":
        """Child stream identified by an integer tag; independent of the
        parent's counter position."""
        return RandomStream(child_seed(self.seed, tag))

    def _next_words(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        z = np.uint64(self.seed) + idx * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_A)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_B)
        return z ^ (z >> np.uint64(31))

    def uniform(self, lo: float, hi: float, n: int) -> np.ndarray:
        """n uniform draws in [lo, hi)."""
        require(lo < hi, f"uniform bounds must satisfy lo < hi, got [{lo}, {hi})")
        require(n >= 0, f"draw count must be >= 0, got {n}")
        if n == 0:
            return np.empty(0, dtype=np.float64)
        # top 53 bits -> [0, 1) on an exact power-of-two grid
        u = (self._next_words(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        out = lo + u * (hi - lo)
        # rounding of lo + u*(hi-lo) can land exactly on hi; clamp back inside
        return np.minimum(out, np.nextafter(hi, lo))

    def normal(self, mean: float, variance: float, n: int) -> np.ndarray:
        """n draws from N(mean, variance) via Box-Muller on consecutive
        uniform pairs. variance = 0 returns the mean exactly."""
        require(variance >= 0.0, f"variance must be >= 0, got {variance}")
        require(n >= 0, f"draw count must be >= 0, got {n}")
        if n == 0:
            return np.empty(0, dtype=np.float64)
        pairs = (n + 1) // 2
        u = self.uniform(0.0, 1.0, 2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        # ln(1-u1) keeps the argument in (0, 1], so r is always finite
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = (2.0 * math.pi) * u2
        z = np.empty(2 * pairs, dtype=np.float64)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return mean + math.sqrt(variance) * z[:n]

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n): argsort of n raw words."""
        require(n >= 0, f"permutation size must be >= 0, got {n}")
        return np.argsort(self._next_words(n), kind="stable")


# ---------------------------------------------------------------------------
# Stable reductions and linear algebra
# ---------------------------------------------------------------------------


def logsumexp(v: np.ndarray) -> float:
    """max(v) + ln sum exp(v - max(v)); safe for |v_i| up to ~1e8."""
    v = np.asarray(v, dtype=np.float64)
    require(v.ndim == 1 and v.size > 0, "logsumexp needs a non-empty 1-D vector")
    check_finite(v, "logsumexp input")
    m = float(np.max(v))
    return m + float(np.log(np.sum(np.exp(v - m))))


def row_logsumexp(a: np.ndarray) -> np.ndarray:
    """Row-wise logsumexp of a 2-D array with the same shift stabilization."""
    a = np.asarray(a, dtype=np.float64)
    require(a.ndim == 2 and a.shape[1] > 0, "row_logsumexp needs a 2-D array with >= 1 column")
    m = np.max(a, axis=1, keepdims=True)
    return (m[:, 0] + np.log(np.sum(np.exp(a - m), axis=1))).astype(np.float64)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit shape checking.

    Summation order is the platform BLAS order: deterministic for a fixed
    installation, which is what the reproducibility guarantees rely on.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    require(a.ndim == 2 and b.ndim == 2, "matmul operands must be 2-D")
    require(
        a.shape[1] == b.shape[0],
        f"matmul dimension mismatch: {a.shape[0]}x{a.shape[1]} times {b.shape[0]}x{b.shape[1]}",
    )
    check_finite(a, "matmul left operand")
    check_finite(b, "matmul right operand")
    return a @ b


def pca_project(x: np.ndarray, dims: int) -> np.ndarray:
    """Project centered rows of x onto the top `dims` principal directions.

    The sign of each direction is fixed by making its largest-magnitude
    component positive, so the output is deterministic.
    """
    x = np.asarray(x, dtype=np.float64)
    require(x.ndim == 2, "pca_project input must be 2-D")
    require(x.shape[0] >= 2, f"pca_project needs >= 2 rows, got {x.shape[0]}")
    require(
        1 <= dims <= x.shape[1],
        f"pca_project dims must be in [1, {x.shape[1]}], got {dims}",
    )
    check_finite(x, "pca_project input")
    centered = x - np.mean(x, axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:dims]
    basis = eigvecs[:, order]
    for j in range(basis.shape[1]):
        col = basis[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            basis[:, j] = -col
    return centered @ basis


# ---------------------------------------------------------------------------
# Matrix serialization
# ---------------------------------------------------------------------------


def save_matrix_csv(m: np.ndarray, path) -> None:
    """One row per line, ',' separated, '.' decimal, no header. %.17g keeps
    float64 round trips exact."""
    m = np.asarray(m, dtype=np.float64)
    require(m.ndim == 2, "save_matrix_csv input must be 2-D")
    require(m.shape[0] > 0 and m.shape[1] > 0, "CSV form cannot represent empty matrices")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for row in m:
            fh.write(",".join(f"{v:.17g}" for v in row))
            fh.write("\n")


def load_matrix_csv(path) -> np.ndarray:
    rows = []
    width = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise ContractViolation(
                    f"{path}: line {lineno} has {len(parts)} fields, expected {width}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ContractViolation(f"{path}: line {lineno}: {exc}") from exc
    require(len(rows) > 0, f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def save_matrix_bin(m: np.ndarray, fh) -> None:
    """Binary dump: two little-endian u64 dims, then row-major little-endian
    float64 data. `fh` is an open binary file object (records can be stacked)."""
    m = np.ascontiguousarray(np.asarray(m, dtype=np.float64))
    require(m.ndim == 2, "save_matrix_bin input must be 2-D")
    fh.write(np.asarray(m.shape, dtype="<u8").tobytes())
    fh.write(m.astype("<f8").tobytes())


def load_matrix_bin(fh) -> np.ndarray:
    header = fh.read(16)
    require(len(header) == 16, "binary matrix record truncated in header")
    rows, cols = (int(v) for v in np.frombuffer(header, dtype="<u8"))
    payload = fh.read(8 * rows * cols)
    require(len(payload) == 8 * rows * cols, "binary matrix record truncated in payload")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)
