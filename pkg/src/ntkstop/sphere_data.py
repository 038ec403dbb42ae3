"""Synthetic regression data on the unit sphere.

Inputs are uniform on S^{d-1}, targets are a Lipschitz, non-differentiable
function plus bounded zero-mean noise.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng as _rng

UNIT_TOL = 1e-9

TARGET_KINDS = ("abs-linear", "max-of-linears")
NOISE_KINDS = ("rademacher", "uniform")


def _check_unit_rows(X: np.ndarray, tol: float = UNIT_TOL) -> None:
    norms = np.linalg.norm(X, axis=-1)
    bad = np.abs(norms - 1.0) > tol
    if np.any(bad):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise ValueError(f"inputs must lie on the unit sphere (max |norm - 1| = {worst:.3e})")


@dataclass(frozen=True)
class TargetSpec:
    kind: str
    directions: tuple
    lipschitz: float

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}; expected one of {TARGET_KINDS}")
        if not self.lipschitz > 0:
            raise ValueError("lipschitz constant must be positive")
        dirs = tuple(np.asarray(v, dtype=float) for v in self.directions)
        if not dirs:
            raise ValueError("at least one direction is required")
        if self.kind == "abs-linear" and len(dirs) != 1:
            raise ValueError("abs-linear target takes exactly one direction")
        for v in dirs:
            if abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise ValueError("target directions must be unit vectors")
        if len({v.shape for v in dirs}) != 1:
            raise ValueError("directions must share a dimension")
        object.__setattr__(self, "directions", dirs)

    @property
    def d(self) -> int:
        return self.directions[0].shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return np.stack(self.directions)

    @classmethod
    def random(cls, kind: str, d: int, lipschitz: float, seed: int, count: int = 3) -> "TargetSpec":
        """Draw unit directions uniformly; ``count`` applies to max-of-linears."""
        k = 1 if kind == "abs-linear" else count
        V = sample_sphere(k, d, seed, tag="target-directions")
        return cls(kind, tuple(V), lipschitz)


def eval_target(spec: TargetSpec, x) -> np.ndarray | float:
    """Evaluate f* at a unit vector or at each row of an (n, d) array."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.d:
        raise ValueError(f"dimension mismatch: target has d={spec.d}, input has {x.shape[-1]}")
    _check_unit_rows(x)
    proj = x @ spec.matrix.T
    if spec.kind == "abs-linear":
        out = spec.lipschitz * np.abs(proj[..., 0])
    else:
        out = spec.lipschitz * np.maximum(proj, 0.0).max(axis=-1)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "rademacher"
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if self.sigma < 0:
            raise ValueError(f"noise sigma must be nonnegative, got {self.sigma}")

    @property
    def bound(self) -> float:
        """Almost-sure bound on |eps|."""
        if self.kind == "rademacher":
            return self.sigma
        return float(np.sqrt(3.0) * self.sigma)


def sample_sphere(n: int, d: int, seed: int, tag: str = "inputs") -> np.ndarray:
    """``n`` points uniform on S^{d-1} (normalized Gaussian draws)."""
    if d < 2:
        raise ValueError(f"sphere dimension must be at least 2, got d={d}")
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return np.empty((0, d))
    G = _rng.gaussian(_rng.stream(seed, tag), (n, d))
    return G / np.linalg.norm(G, axis=1, keepdims=True)


def sample_noise(spec: NoiseSpec, n: int, seed: int, tag: str = "noise") -> np.ndarray:
    if spec.sigma == 0:
        return np.zeros(n)
    gen = _rng.stream(seed, tag)
    if spec.kind == "rademacher":
        return spec.sigma * _rng.signs(gen, n)
    half_width = np.sqrt(3.0) * spec.sigma
    return half_width * (2.0 * gen.random(n) - 1.0)


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    clean: np.ndarray
    B_y: float
    seed: int
    target: TargetSpec | None = field(default=None, repr=False)
    noise: NoiseSpec | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def to_csv(self, path=None) -> str:
        text = dataset_to_csv(self)
        if path is not None:
            Path(path).write_text(text)
        return text


def generate_dataset(n: int, d: int, target: TargetSpec, noise: NoiseSpec, seed: int) -> Dataset:
    if target.d != d:
        raise ValueError(f"target dimension {target.d} does not match d={d}")
    X = sample_sphere(n, d, seed)
    clean = eval_target(target, X) if n else np.zeros(0)
    eps = sample_noise(noise, n, seed)
    y = clean + eps
    return Dataset(X, y, np.asarray(clean, dtype=float), target.lipschitz + noise.bound, seed, target, noise)


def dataset_to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x_{j}" for j in range(ds.d)] + ["y", "clean"])
    for xi, yi, ci in zip(ds.X, ds.y, ds.clean):
        writer.writerow([f"{v:.17g}" for v in xi] + [f"{yi:.17g}", f"{ci:.17g}"])
    return buf.getvalue()


def dataset_from_csv(source, B_y: float | None = None, seed: int = -1) -> Dataset:
    """Read a dataset written by :func:`dataset_to_csv` (path or text)."""
    text = Path(source).read_text() if isinstance(source, (str, Path)) and "\n" not in str(source) else str(source)
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    d = len(header) - 2
    if d < 2 or header[-2:] != ["y", "clean"]:
        raise ValueError("unexpected dataset header")
    data = np.array([[float(v) for v in r] for r in body]).reshape(-1, d + 2)
    X, y, clean = data[:, :d], data[:, d], data[:, d + 1]
    if B_y is None:
        B_y = float(np.max(np.abs(y))) if len(y) else 0.0
    return Dataset(X, y, clean, B_y, seed)


def estimate_noise_variance(X: np.ndarray, y: Sequence[float]) -> float:
    """Half the mean squared target difference between nearest-neighbour pairs.

    For a Lipschitz target and dense inputs the clean parts nearly cancel, so
    E[(y_i - y_j)^2] / 2 is close to sigma^2.  Biased upward at small n.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("need at least two points")
    G = X @ X.T
    np.fill_diagonal(G, -np.inf)
    nn = np.argmax(G, axis=1)
    return float(0.5 * np.mean((y - y[nn]) ** 2))
