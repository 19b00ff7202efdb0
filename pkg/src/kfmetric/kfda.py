"""Fisher discriminant analysis in kernel form.

From a square training Gram matrix K and a class index we form two n x n
scatter surrogates: a between-class matrix P built from per-class mean
kernel columns, and a within-class matrix Q built from class-centered
kernel blocks. The discriminant expansion coefficients are the leading
eigenvectors of the pencil ``P a = lambda (Q + eps I) a``, solved in
symmetric-definite form so eigenvalues stay real.

With ``eps == 0`` (diagnostic path only) Q is singular whenever n > rank,
so the pencil is solved restricted to the numerical range of Q.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .data import ClassIndex, Dataset, SplitPlan, index_classes
from .errors import InputError, NumericError
from .kernels import KernelMatrix, KernelSpec

DEFAULT_EPS = 1e-7

# relative eigenvalue cutoff defining the numerical range of Q on the eps=0 path
RANGE_RTOL = 1e-10

MODEL_FORMAT = "kfmetric-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ScatterPair:
    """Between-class (P) and within-class (Q) scatter surrogates over a Gram."""

    P: np.ndarray
    Q: np.ndarray
    class_means: np.ndarray  # (n, c), column i is the class-i mean kernel column
    global_mean: np.ndarray  # (n,)
    counts: tuple[int, ...]

    def __post_init__(self):
        n = self.P.shape[0]
        if self.P.shape != (n, n) or self.Q.shape != (n, n):
            raise NumericError("scatter matrices must be square and equal-sized")
        for M, name in ((self.P, "P"), (self.Q, "Q")):
            if not np.allclose(M, M.T, atol=1e-10, rtol=0):
                raise NumericError(f"{name} not symmetric within 1e-10")
        weighted = self.class_means @ (np.asarray(self.counts, dtype=np.float64) / sum(self.counts))
        if not np.allclose(weighted, self.global_mean, atol=1e-10, rtol=0):
            raise NumericError("class means inconsistent with global mean")

    @property
    def n_classes(self) -> int:
        return self.class_means.shape[1]


@dataclass(frozen=True)
class KfdaModel:
    """Trained discriminant model.

    A holds one unit-norm expansion-coefficient column per discriminant,
    sign-fixed so each column's largest-magnitude entry is positive.
    ``train_basis`` (the retained training feature rows) and
    ``kernel_config`` are attached by :func:`train`; a bare eigen solution
    from :func:`solve_kfda` leaves them as None.
    """

    A: np.ndarray
    eigvals: np.ndarray
    regularizer: float
    p: int
    train_basis: np.ndarray | None = None
    kernel_config: object | None = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        if A.ndim != 2 or A.shape[1] != self.p:
            raise NumericError(f"A must be n x p with p={self.p}, got {A.shape}")
        if not np.isfinite(A).all():
            raise NumericError("A contains non-finite entries")
        vals = np.asarray(self.eigvals, dtype=np.float64)
        if vals.shape != (self.p,):
            raise NumericError(f"need {self.p} eigenvalues, got shape {vals.shape}")
        if np.any(np.diff(vals) > 0):
            raise NumericError("eigenvalues must be non-increasing")
        A.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "eigvals", vals)

    @property
    def n_train(self) -> int:
        return self.A.shape[0]

    def truncated(self, p: int) -> "KfdaModel":
        """Model restricted to the p leading discriminants."""
        if not 1 <= p <= self.p:
            raise InputError(f"p must be in 1..{self.p}, got {p}")
        return replace(self, A=self.A[:, :p], eigvals=self.eigvals[:p], p=p)


def build_scatter(K, idx: ClassIndex) -> ScatterPair:
    """Form P, Q, and mean kernel columns from a square training Gram.

    K rows/columns must follow exactly the subset order the ClassIndex was
    built over. The class-i mean column is the average of K's columns for
    class i; P is the count-weighted outer-product spread of those columns
    around the global mean, and Q sums the class-centered column blocks
    multiplied by their transposes.
    """
    K = K.values if isinstance(K, KernelMatrix) else np.asarray(K, dtype=np.float64)
    n = idx.n_total
    if K.shape != (n, n):
        raise InputError(f"Gram shape {K.shape} does not match indexed samples ({n})")
    if any(c == 0 for c in idx.counts):
        raise InputError("class with zero samples")
    c = idx.n_classes
    means = np.empty((n, c))
    Q = np.zeros((n, n))
    for i, members in enumerate(idx.members):
        block = K[:, list(members)]
        mi = block.mean(axis=1)
        means[:, i] = mi
        centered = block - mi[:, None]
        Q += centered @ centered.T
    counts = np.asarray(idx.counts, dtype=np.float64)
    gm = means @ (counts / n)
    dev = means - gm[:, None]
    P = (dev * counts[None, :]) @ dev.T
    P = 0.5 * (P + P.T)
    Q = 0.5 * (Q + Q.T)
    return ScatterPair(P=P, Q=Q, class_means=means, global_mean=gm, counts=idx.counts)


def _range_restricted_eigh(P: np.ndarray, Q: np.ndarray):
    """Eigenpairs of the pencil (P, Q) restricted to the numerical range of Q."""
    s, U = scipy.linalg.eigh(Q)
    smax = float(s[-1])
    if smax <= 0:
        raise NumericError("Q has no positive spectrum; cannot solve with eps=0")
    keep = s > RANGE_RTOL * smax
    W = U[:, keep] / np.sqrt(s[keep])  # whitening basis for range(Q)
    T = W.T @ P @ W
    T = 0.5 * (T + T.T)
    vals, V = scipy.linalg.eigh(T)
    return vals, W @ V


def solve_kfda(sc: ScatterPair, p: int, eps: float = DEFAULT_EPS) -> KfdaModel:
    """Leading discriminants of the regularized between/within pencil.

    Solves ``P a = lambda (Q + eps I) a`` as a symmetric-definite problem and
    keeps the p largest eigenpairs. Columns of A are normalized to unit
    Euclidean norm with the largest-magnitude entry positive; ties in
    eigenvalue order keep the underlying solver's output order.
    """
    c = sc.n_classes
    if not 1 <= p <= c - 1:
        raise InputError(f"p must be in 1..c-1 = 1..{c - 1}, got {p}")
    if eps < 0:
        raise InputError(f"regularizer must be non-negative, got {eps}")
    n = sc.P.shape[0]
    try:
        if eps > 0:
            B = sc.Q + eps * np.eye(n)
            vals, vecs = scipy.linalg.eigh(sc.P, B)
        else:
            vals, vecs = _range_restricted_eigh(sc.P, sc.Q)
    except scipy.linalg.LinAlgError as exc:
        raise NumericError(f"generalized eigensolver failed: {exc}") from exc
    if p > vals.shape[0]:
        raise NumericError(
            f"only {vals.shape[0]} directions available in the range of Q, "
            f"cannot extract p={p}"
        )
    # eigh returns ascending order; reverse for descending eigenvalues
    vals = vals[::-1][:p]
    A = vecs[:, ::-1][:, :p].copy()
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        raise NumericError("eigensolver returned a zero eigenvector")
    A /= norms
    for k in range(p):
        j = int(np.argmax(np.abs(A[:, k])))
        if A[j, k] < 0:
            A[:, k] = -A[:, k]
    return KfdaModel(
        A=A,
        eigvals=np.maximum(vals, 0.0),
        regularizer=eps,
        p=p,
    )


def train(
    ds: Dataset,
    plan: SplitPlan,
    kernel,
    eps: float = DEFAULT_EPS,
    p: int | None = None,
) -> KfdaModel:
    """Fit a discriminant model on the plan's training identities.

    ``kernel`` is anything exposing train_gram/cross_gram (a KernelSpec or a
    learned multi-kernel configuration). ``p`` defaults to c - 1.
    """
    train_idx = sorted(ds.samples_of(plan.train_ids))
    if not train_idx:
        raise InputError("no training samples for the plan's identities")
    idx = index_classes(ds, train_idx)
    if idx.n_classes < 2:
        raise InputError(f"training needs at least 2 classes, got {idx.n_classes}")
    p_eff = idx.n_classes - 1 if p is None else p
    X = ds.features[train_idx]
    K = kernel.train_gram(X)
    sc = build_scatter(K, idx)
    model = solve_kfda(sc, p_eff, eps)
    return replace(model, train_basis=X, kernel_config=kernel)


def save_model(model: KfdaModel, path, meta: dict | None = None) -> None:
    """Persist a trained model as versioned JSON; floats round-trip exactly."""
    if model.train_basis is None or model.kernel_config is None:
        raise InputError("only fully trained models (with basis and kernel) persist")
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n": int(model.n_train),
        "d": int(model.train_basis.shape[1]),
        "p": int(model.p),
        "regularizer": model.regularizer,
        "eigvals": model.eigvals.tolist(),
        "A": model.A.tolist(),
        "train_features": model.train_basis.tolist(),
        "kernel_config": model.kernel_config.to_dict(),
        "meta": meta or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path) -> tuple[KfdaModel, dict]:
    """Load a persisted model; returns (model, meta)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot open model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not a valid model file: {exc}") from exc
    if doc.get("format") != MODEL_FORMAT:
        raise InputError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise InputError(f"{path}: unsupported model version {doc.get('version')}")
    cfg_doc = doc["kernel_config"]
    if cfg_doc["type"] == "kernel":
        kernel = KernelSpec.from_dict(cfg_doc)
    elif cfg_doc["type"] == "mkl":
        from .mkl import MklConfig  # deferred: mkl depends on this module

        kernel = MklConfig.from_dict(cfg_doc)
    else:
        raise InputError(f"{path}: unknown kernel config type {cfg_doc['type']!r}")
    model = KfdaModel(
        A=np.array(doc["A"], dtype=np.float64),
        eigvals=np.array(doc["eigvals"], dtype=np.float64),
        regularizer=doc["regularizer"],
        p=doc["p"],
        train_basis=np.array(doc["train_features"], dtype=np.float64),
        kernel_config=kernel,
    )
    if model.n_train != doc["n"] or model.train_basis.shape[1] != doc["d"]:
        raise InputError(f"{path}: dimension fields disagree with stored arrays")
    return model, doc.get("meta", {})
