"""Dense matrix helpers, norms, thin SVD and the entrywise sampling operator.

Rate matrices are plain 2-D float ``numpy`` arrays.  Observed index sets are
held by :class:`Mask` (0-based internally, 1-based only at the file boundary)
and the counts attached to them by :class:`MaskedObservations`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "NumericalError",
    "as_matrix",
    "frobenius_norm",
    "operator_norm",
    "nuclear_norm",
    "SvdFactorization",
    "svd",
    "Mask",
    "MaskedObservations",
    "apply_mask",
    "mask_adjoint",
]


class NumericalError(RuntimeError):
    """An SVD or iterative routine failed to converge."""


def as_matrix(A, name="matrix"):
    """Return `A` as a finite 2-D float64 array, raising ``ValueError`` otherwise."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def _singular_values(A):
    try:
        return scipy.linalg.svdvals(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalError(str(exc)) from exc


def frobenius_norm(A) -> float:
    A = as_matrix(A)
    return float(np.sqrt(np.sum(A * A)))


def operator_norm(A) -> float:
    """Largest singular value of `A`."""
    s = _singular_values(as_matrix(A))
    return float(s[0]) if s.size else 0.0


def nuclear_norm(A) -> float:
    """Sum of the singular values of `A`."""
    return float(np.sum(_singular_values(as_matrix(A))))


@dataclass(frozen=True)
class SvdFactorization:
    """Thin SVD ``A = left @ diag(singular_values) @ right.T``.

    Singular vectors carry no fixed sign convention; compare reconstructions,
    never individual factor entries.
    """

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    @property
    def shape(self):
        return (self.left.shape[0], self.right.shape[0])

    def reconstruct(self, singular_values=None) -> np.ndarray:
        s = self.singular_values if singular_values is None else singular_values
        return (self.left * s) @ self.right.T

    def rank(self, rtol=1e-10) -> int:
        """Number of singular values above ``rtol * sigma_max``."""
        s = self.singular_values
        if s.size == 0 or s[0] == 0.0:
            return 0
        return int(np.count_nonzero(s > rtol * s[0]))


def svd(A) -> SvdFactorization:
    """Thin SVD with ``k = min(m, n)`` nonincreasing singular values.

    Uses the divide-and-conquer LAPACK driver and falls back to the slower
    but more robust ``gesvd`` if it does not converge.
    """
    A = as_matrix(A)
    try:
        U, s, Vt = scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        try:
            U, s, Vt = scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"SVD did not converge: {exc}") from exc
    return SvdFactorization(U, s, Vt.T)


@dataclass(frozen=True)
class Mask:
    """Set of sampled indices of an ``m x n`` matrix.

    Indices are stored 0-based in row-major sorted order, which is also the
    order used by :func:`apply_mask`.
    """

    shape: tuple
    rows: np.ndarray
    cols: np.ndarray

    def __post_init__(self):
        m, n = (int(d) for d in self.shape)
        if m < 1 or n < 1:
            raise ValueError(f"mask dimensions must be positive, got {self.shape}")
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        if rows.shape != cols.shape:
            raise ValueError("rows and cols must have the same length")
        if rows.size and (rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n):
            raise ValueError("mask index out of range")
        flat = rows * n + cols
        order = np.argsort(flat, kind="stable")
        flat = flat[order]
        if flat.size > 1 and np.any(flat[1:] == flat[:-1]):
            raise ValueError("mask contains duplicate indices")
        rows, cols = rows[order], cols[order]
        rows.flags.writeable = False
        cols.flags.writeable = False
        object.__setattr__(self, "shape", (m, n))
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)

    @classmethod
    def full(cls, m, n):
        r, c = np.divmod(np.arange(m * n), n)
        return cls((m, n), r, c)

    @classmethod
    def empty(cls, m, n):
        return cls((m, n), np.empty(0, np.int64), np.empty(0, np.int64))

    @classmethod
    def from_boolean(cls, B):
        B = np.asarray(B, dtype=bool)
        r, c = np.nonzero(B)
        return cls(B.shape, r, c)

    @classmethod
    def from_pairs(cls, m, n, pairs):
        """Build from 1-based ``(i, j)`` pairs."""
        pairs = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        return cls((m, n), pairs[:, 0] - 1, pairs[:, 1] - 1)

    def __len__(self):
        return int(self.rows.size)

    def to_boolean(self) -> np.ndarray:
        B = np.zeros(self.shape, dtype=bool)
        B[self.rows, self.cols] = True
        return B

    def pairs(self) -> np.ndarray:
        """1-based ``(i, j)`` pairs, shape ``(|mask|, 2)``."""
        return np.column_stack([self.rows + 1, self.cols + 1])

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return (self.shape == other.shape and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols))

    __hash__ = None


@dataclass(frozen=True)
class MaskedObservations:
    """Nonnegative integer counts at the indices of a :class:`Mask`."""

    mask: Mask
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size != len(self.mask):
            raise ValueError(f"expected {len(self.mask)} counts, got shape {counts.shape}")
        if counts.size:
            if not np.all(np.isfinite(counts)) or np.any(counts < 0) or np.any(counts != np.round(counts)):
                raise ValueError("counts must be nonnegative integers")
        counts = counts.astype(np.int64)
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def shape(self):
        return self.mask.shape

    @classmethod
    def from_dense(cls, X, mask=None):
        """Observe every entry of the count matrix `X` (or only those in `mask`)."""
        X = np.asarray(X)
        if mask is None:
            mask = Mask.full(*X.shape)
        return cls(mask, X[mask.rows, mask.cols])

    def __eq__(self, other):
        if not isinstance(other, MaskedObservations):
            return NotImplemented
        return self.mask == other.mask and np.array_equal(self.counts, other.counts)

    __hash__ = None


def apply_mask(A, mask: Mask) -> np.ndarray:
    """Restrict `A` to the sampled indices, in mask order."""
    A = as_matrix(A)
    if A.shape != mask.shape:
        raise ValueError(f"matrix shape {A.shape} does not match mask shape {mask.shape}")
    return A[mask.rows, mask.cols]


def mask_adjoint(obs, mask: Mask | None = None) -> np.ndarray:
    """Zero-padded embedding of observed values back into an ``m x n`` matrix.

    Accepts a :class:`MaskedObservations`, or a value vector together with
    its `mask`.
    """
    if isinstance(obs, MaskedObservations):
        mask, values = obs.mask, obs.counts
    else:
        if mask is None:
            raise TypeError("mask is required when passing a raw value vector")
        values = np.asarray(obs, dtype=np.float64)
        if values.shape != (len(mask),):
            raise ValueError(f"expected {len(mask)} values, got shape {values.shape}")
    out = np.zeros(mask.shape, dtype=np.float64)
    out[mask.rows, mask.cols] = values
    return out
