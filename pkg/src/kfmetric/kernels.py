"""Kernel definitions, Gram matrices, width heuristics, and kernel combination.

Two combination rules are provided: a convex weighting of a kernel bank and a
squared-matrix fusion of two kernels, ``0.5*(K1+K2) + tau*(K1-K2)@(K1-K2)``,
which stays positive semi-definite for symmetric PSD inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericError

KERNEL_KINDS = ("rbf", "linear", "poly2")

WEIGHT_TOL = 1e-12


def squared_distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at zero."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    sq = (
        np.sum(X * X, axis=1)[:, None]
        + np.sum(Y * Y, axis=1)[None, :]
        - 2.0 * (X @ Y.T)
    )
    return np.maximum(sq, 0.0)


@dataclass(frozen=True)
class KernelSpec:
    """Parametric kernel: 'rbf' with width sigma, 'linear', or 'poly2'.

    rbf:    k(x, y) = exp(-||x - y||^2 / (2 sigma^2))
    linear: k(x, y) = <x, y>
    poly2:  k(x, y) = (<x, y> + 1)^2

    linear and poly2 exist for oracle testing against explicit feature maps;
    the shipped retrieval pipeline uses rbf.
    """

    kind: str
    width: float | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise InputError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf":
            if self.width is None or not np.isfinite(self.width) or self.width <= 0:
                raise InputError(f"rbf kernel needs width > 0, got {self.width}")

    def train_gram(self, X: np.ndarray) -> np.ndarray:
        """Symmetrized square Gram over the rows of X."""
        return gram(self, X).values

    def cross_gram(self, Y: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Cross Gram: entry (u, v) = k(Y[u], X[v])."""
        return gram(self, Y, X).values

    def to_dict(self) -> dict:
        return {"type": "kernel", "kind": self.kind, "width": self.width}

    @staticmethod
    def from_dict(d: dict) -> "KernelSpec":
        return KernelSpec(kind=d["kind"], width=d["width"])


@dataclass(frozen=True)
class KernelMatrix:
    """Realized kernel values with the sample-index bases they were built on.

    A matrix whose row and column bases coincide is a square Gram and must be
    symmetric; a square *cross* matrix (distinct or unrecorded bases) carries
    no such obligation.
    """

    values: np.ndarray
    row_basis: tuple[int, ...] | None = None
    col_basis: tuple[int, ...] | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise InputError(f"kernel matrix must be 2-D, got shape {vals.shape}")
        if not np.isfinite(vals).all():
            raise NumericError("kernel matrix contains non-finite entries")
        if self.row_basis is not None and self.row_basis == self.col_basis:
            if vals.shape[0] != vals.shape[1]:
                raise NumericError("equal bases require a square matrix")
            if not np.allclose(vals, vals.T, atol=1e-12, rtol=0):
                raise NumericError("square kernel matrix is not symmetric within 1e-12")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def is_square_basis(self) -> bool:
        if self.row_basis is not None and self.row_basis == self.col_basis:
            return True
        # without recorded bases, only an actually-symmetric square matrix
        # is treated as a single-basis Gram
        return (
            self.row_basis is None
            and self.col_basis is None
            and self.values.shape[0] == self.values.shape[1]
            and bool(np.allclose(self.values, self.values.T, atol=1e-12, rtol=0))
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class KernelBank:
    """An ordered list of kernels realized over one common basis."""

    specs: tuple[KernelSpec, ...]
    matrices: tuple[KernelMatrix, ...]

    def __post_init__(self):
        if len(self.specs) < 1 or len(self.specs) != len(self.matrices):
            raise InputError("bank needs q >= 1 specs with matching matrices")
        first = self.matrices[0]
        for m in self.matrices[1:]:
            if m.shape != first.shape or m.row_basis != first.row_basis or m.col_basis != first.col_basis:
                raise InputError("bank matrices must share one basis")

    @property
    def q(self) -> int:
        return len(self.specs)


def eval_kernel(spec: KernelSpec, x, y) -> float:
    """Evaluate one kernel entry k(x, y)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise InputError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if spec.kind == "rbf":
        diff = x - y
        return float(np.exp(-(diff @ diff) / (2.0 * spec.width**2)))
    if spec.kind == "linear":
        return float(x @ y)
    return float((x @ y + 1.0) ** 2)


def gram(
    spec: KernelSpec,
    rows: np.ndarray,
    cols: np.ndarray | None = None,
    row_basis=None,
    col_basis=None,
) -> KernelMatrix:
    """Kernel matrix with entry (u, v) = k(rows[u], cols[v]).

    When cols is omitted the matrix is treated as a square Gram over one
    basis: the diagonal of an rbf Gram is pinned to exactly 1 and the result
    is symmetrized as (K + K.T) / 2 to absorb floating-point asymmetry.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    same = cols is None
    cols_arr = rows if same else np.atleast_2d(np.asarray(cols, dtype=np.float64))
    if rows.shape[0] == 0 or cols_arr.shape[0] == 0:
        raise InputError("empty sample list")
    if rows.shape[1] != cols_arr.shape[1]:
        raise InputError(f"dimension mismatch: {rows.shape[1]} vs {cols_arr.shape[1]}")
    if spec.kind == "rbf":
        sq = squared_distances(rows, cols_arr)
        if same:
            np.fill_diagonal(sq, 0.0)
        K = np.exp(-sq / (2.0 * spec.width**2))
    elif spec.kind == "linear":
        K = rows @ cols_arr.T
    else:
        K = (rows @ cols_arr.T + 1.0) ** 2
    if K.shape[0] == K.shape[1] and (
        same or (row_basis is not None and row_basis == col_basis)
    ):
        K = 0.5 * (K + K.T)
    if same and col_basis is None:
        col_basis = row_basis
    return KernelMatrix(
        K,
        tuple(row_basis) if row_basis is not None else None,
        tuple(col_basis) if col_basis is not None else None,
    )


def bank_over(specs, X: np.ndarray, basis=None) -> KernelBank:
    """Realize a list of kernel specs over one sample matrix."""
    basis_t = tuple(basis) if basis is not None else None
    mats = tuple(gram(s, X, row_basis=basis_t, col_basis=basis_t) for s in specs)
    return KernelBank(tuple(specs), mats)


def rms_width(ds, subset) -> float:
    """Root mean squared pairwise distance among the chosen samples.

    Used as the automatic rbf width; raises when all samples coincide.
    """
    subset = list(subset)
    if len(subset) < 2:
        raise InputError(f"need at least 2 samples for rms width, got {len(subset)}")
    X = ds.features[subset]
    centered = X - X.mean(axis=0, keepdims=True)  # translation invariance
    m = len(subset)
    # sum_{i<j} ||xi-xj||^2 == m * sum_i ||xi - mean||^2
    pair_sum = m * float(np.sum(centered * centered))
    n_pairs = m * (m - 1) // 2
    width = math.sqrt(pair_sum / n_pairs) if pair_sum > 0 else 0.0
    if width <= 0.0:
        raise NumericError("all samples identical: rms pairwise distance is zero")
    return width


def width_grid(base: float, q: int, lo: float = 0.1, hi: float = 10.0) -> list[float]:
    """q widths: base times geometrically spaced multipliers over [lo, hi]."""
    if not (0 < lo < hi):
        raise InputError(f"need 0 < lo < hi, got lo={lo}, hi={hi}")
    if q < 2:
        raise InputError(f"need q >= 2 widths, got {q}")
    if base <= 0:
        raise InputError(f"base width must be positive, got {base}")
    return [float(base * m) for m in np.geomspace(lo, hi, q)]


def combine_convex(bank: KernelBank, weights) -> KernelMatrix:
    """Convex combination sum_t beta_t * K_t of the bank's matrices."""
    beta = np.asarray(list(weights), dtype=np.float64)
    if beta.shape != (bank.q,):
        raise InputError(f"expected {bank.q} weights, got shape {beta.shape}")
    if np.any(beta < 0):
        raise InputError("weights must be non-negative")
    if abs(float(beta.sum()) - 1.0) > WEIGHT_TOL:
        raise InputError(f"weights must sum to 1 within {WEIGHT_TOL}, got {beta.sum()!r}")
    out = np.zeros(bank.matrices[0].shape)
    for b, m in zip(beta, bank.matrices):
        if b != 0.0:
            out += b * m.values
    first = bank.matrices[0]
    if first.is_square_basis:
        out = 0.5 * (out + out.T)
    return KernelMatrix(out, first.row_basis, first.col_basis)


def combine_sm(K1: KernelMatrix, K2: KernelMatrix, tau: float) -> KernelMatrix:
    """Squared-matrix fusion 0.5*(K1+K2) + tau*(K1-K2)@(K1-K2).

    The square of the symmetric difference is PSD, so the result is PSD
    whenever K1 and K2 are symmetric PSD over the same basis.
    """
    if tau < 0:
        raise InputError(f"tau must be non-negative, got {tau}")
    if K1.shape != K2.shape or K1.shape[0] != K1.shape[1]:
        raise InputError(f"need square matrices of equal shape, got {K1.shape} and {K2.shape}")
    if K1.row_basis != K2.row_basis or K1.col_basis != K2.col_basis:
        raise InputError("basis mismatch between K1 and K2")
    if not (K1.is_square_basis and K2.is_square_basis):
        raise InputError("squared-matrix combination needs square symmetric inputs")
    D = K1.values - K2.values
    out = 0.5 * (K1.values + K2.values) + tau * (D @ D)
    out = 0.5 * (out + out.T)
    return KernelMatrix(out, K1.row_basis, K1.col_basis)
