"""Run configuration: defaults, key=value config files, and config digests.

The digest covers only protocol-level fields (method, seeds, kernel and CV
settings), never file locations or worker counts, so golden digests stay
valid across machines.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, fields, replace

from .errors import InputError

METHODS = ("euclidean", "kfda", "np-mfml", "sm-mfml")

DEFAULT_TAU_GRID = (0.0, 1e-3, 1e-2, 1e-1, 1.0)

# fields hashed into the config digest, in canonical order
_DIGEST_FIELDS = (
    "method",
    "train_fraction",
    "trials",
    "base_seed",
    "q",
    "width_lo",
    "width_hi",
    "eps",
    "p",
    "folds",
    "n_grid",
    "tau_grid",
    "include_distractors",
)


@dataclass(frozen=True)
class RunConfig:
    """All knobs for a train/evaluate/cv/sweep run."""

    method: str = "kfda"
    features: str | None = None
    out: str = "out"
    train_fraction: float = 0.5
    trials: int = 10
    base_seed: int = 0
    q: int = 20
    width_lo: float = 0.1
    width_hi: float = 10.0
    eps: float = 1e-7
    p: int | None = None  # None = use all c-1 discriminants
    folds: int = 10
    n_grid: tuple[int, ...] | None = None  # None = 1..min(5, q-1)
    tau_grid: tuple[float, ...] = DEFAULT_TAU_GRID
    threads: int = 1
    include_distractors: bool = True

    def validate(self, check_files: bool = True) -> None:
        if self.method not in METHODS:
            raise InputError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise InputError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.trials < 1:
            raise InputError(f"trials must be >= 1, got {self.trials}")
        if self.q < 1:
            raise InputError(f"q must be >= 1, got {self.q}")
        if not 0.0 < self.width_lo < self.width_hi:
            raise InputError(
                f"need 0 < width_lo < width_hi, got {self.width_lo}, {self.width_hi}"
            )
        if self.eps <= 0:
            raise InputError(f"eps must be positive, got {self.eps}")
        if self.p is not None and self.p < 1:
            raise InputError(f"p must be >= 1 or 'full', got {self.p}")
        if self.folds < 2:
            raise InputError(f"folds must be >= 2, got {self.folds}")
        if self.threads < 1:
            raise InputError(f"threads must be >= 1, got {self.threads}")
        if self.n_grid is not None and any(N < 1 for N in self.n_grid):
            raise InputError("every N in n_grid must be >= 1")
        if any(t < 0 for t in self.tau_grid):
            raise InputError("tau_grid values must be non-negative")
        if check_files:
            if self.features is None:
                raise InputError("no feature file configured")
            if not os.path.exists(self.features):
                raise InputError(f"feature file does not exist: {self.features}")

    def effective_n_grid(self) -> tuple[int, ...]:
        if self.n_grid is not None:
            return tuple(self.n_grid)
        return tuple(range(1, min(5, self.q - 1) + 1)) if self.q > 1 else (1,)

    def digest(self) -> str:
        """sha256 over the protocol fields; stable across file locations."""
        doc = {}
        for name in _DIGEST_FIELDS:
            value = getattr(self, name)
            if isinstance(value, tuple):
                value = list(value)
            doc[name] = value
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_PARSERS = {
    "method": str,
    "features": str,
    "out": str,
    "train_fraction": float,
    "trials": int,
    "base_seed": int,
    "q": int,
    "width_lo": float,
    "width_hi": float,
    "eps": float,
    "p": lambda v: None if v.lower() == "full" else int(v),
    "folds": int,
    "n_grid": lambda v: tuple(int(x) for x in v.split(",") if x.strip()),
    "tau_grid": lambda v: tuple(float(x) for x in v.split(",") if x.strip()),
    "threads": int,
    "include_distractors": lambda v: v.strip().lower() in ("1", "true", "yes"),
}


def load_config_file(path) -> dict:
    """Parse a flat key=value config file into a field dict."""
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise InputError(f"cannot open config file {path}: {exc}") from exc
    known = {f.name for f in fields(RunConfig)}
    out: dict = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{path}: line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in known:
            raise InputError(f"{path}: line {lineno}: unknown config key {key!r}")
        try:
            out[key] = _PARSERS[key](value.strip())
        except ValueError as exc:
            raise InputError(f"{path}: line {lineno}: bad value for {key}: {exc}") from exc
    return out


def resolve_config(file_path=None, overrides: dict | None = None) -> RunConfig:
    """Config from an optional file plus overrides; overrides win.

    Every key present in ``overrides`` is applied, so callers must include
    only explicitly supplied settings (None is a real value for ``p``).
    """
    values = load_config_file(file_path) if file_path else {}
    if overrides:
        values.update(overrides)
    return replace(RunConfig(), **values)
