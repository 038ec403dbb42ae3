"""Shallow ReLU network with symmetric initialization and full-batch GD.

The network is f(x) = sum_k u_k (w_k . x)_+ with frozen output signs
u_k = -1/sqrt(m) for the first half of the units and +1/sqrt(m) for the
second half.  At initialization the two halves share hidden weights, so the
network computes the zero function.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .sphere_data import Dataset


@dataclass
class NetworkParams:
    W: np.ndarray
    u: np.ndarray

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def theta(self) -> np.ndarray:
        """Flattened hidden-layer parameters (w_1, ..., w_m)."""
        return self.W.ravel()

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.W.copy(), self.u.copy())

    def is_symmetric(self) -> bool:
        h = self.m // 2
        return bool(np.array_equal(self.W[:h], self.W[h:]))


def output_signs(m: int) -> np.ndarray:
    if m < 2 or m % 2:
        raise ValueError(f"width must be an even integer >= 2, got m={m}")
    u = np.full(m, 1.0 / np.sqrt(m))
    u[: m // 2] = -u[: m // 2]
    return u


def init_params(m: int, d: int, seed: int) -> NetworkParams:
    u = output_signs(m)
    half = _rng.gaussian(_rng.stream(seed, "net-init"), (m // 2, d))
    return NetworkParams(np.vstack([half, half]), u)


def _as_batch(params: NetworkParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != params.d:
        raise ValueError(f"dimension mismatch: network has d={params.d}, input has {X.shape[1]}")
    return X, single


def _paired_sum(params: NetworkParams, H: np.ndarray) -> np.ndarray:
    # unit k is summed next to its twin k + m/2, so the symmetric init cancels exactly
    h = params.m // 2
    return (params.u[:h] * H[:, :h] + params.u[h:] * H[:, h:]).sum(axis=1)


def forward(params: NetworkParams, x) -> np.ndarray | float:
    X, single = _as_batch(params, x)
    H = np.maximum(X @ params.W.T, 0.0)
    out = _paired_sum(params, H)
    return float(out[0]) if single else out


def features(params: NetworkParams, x) -> np.ndarray:
    """Gradient of f_theta(x) in theta, shape (m*d,) or (n, m*d)."""
    X, single = _as_batch(params, x)
    act = (X @ params.W.T > 0).astype(float)
    Phi = (act * params.u)[:, :, None] * X[:, None, :]
    Phi = Phi.reshape(X.shape[0], -1)
    return Phi[0] if single else Phi


def risk(params: NetworkParams, data: Dataset) -> float:
    if data.n == 0:
        raise ValueError("empirical risk of an empty dataset is undefined")
    r = forward(params, data.X) - data.y
    return float(np.mean(r * r))


def _risk_and_grad(params: NetworkParams, X: np.ndarray, y: np.ndarray):
    Z = X @ params.W.T
    act = Z > 0
    H = np.where(act, Z, 0.0)
    r = _paired_sum(params, H) - y
    n = X.shape[0]
    G = (2.0 / n) * params.u[:, None] * ((act * r[:, None]).T @ X)
    return float(np.mean(r * r)), G, act


def grad_risk(params: NetworkParams, data: Dataset) -> np.ndarray:
    """Subgradient of the empirical risk in W, shape (m, d).

    Uses the strict indicator 1{w.x > 0}: a unit sitting exactly on its kink
    contributes zero.
    """
    if data.n == 0:
        raise ValueError("empirical risk of an empty dataset is undefined")
    return _risk_and_grad(params, data.X, data.y)[1]


def pattern_change_count(params_t: NetworkParams, params_0: NetworkParams, x) -> np.ndarray | int:
    """Number of units whose activation on x differs between the two parameter sets."""
    X, single = _as_batch(params_0, x)
    a_t = X @ params_t.W.T > 0
    a_0 = X @ params_0.W.T > 0
    counts = np.count_nonzero(a_t != a_0, axis=1)
    return int(counts[0]) if single else counts


def max_drift(params_t: NetworkParams, params_0: NetworkParams) -> float:
    if params_t.W.shape != params_0.W.shape:
        raise ValueError("parameter shapes differ")
    return float(np.max(np.linalg.norm(params_t.W - params_0.W, axis=1)))


@dataclass
class TrainTrajectory:
    steps: np.ndarray
    risk: np.ndarray
    max_drift: np.ndarray
    max_pattern_changes: np.ndarray
    grad_norm_sq: np.ndarray
    snapshots: dict = field(default_factory=dict, repr=False)
    final: NetworkParams | None = field(default=None, repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "risk", "max_drift", "max_pattern_changes"])
        for t, r, rho, p in zip(self.steps, self.risk, self.max_drift, self.max_pattern_changes):
            w.writerow([int(t), f"{r:.17g}", f"{rho:.17g}", int(p)])
        return buf.getvalue()


def train_gd(
    params0: NetworkParams,
    data: Dataset,
    eta: float,
    T: int,
    snapshot_every: int = 0,
) -> TrainTrajectory:
    """Full-batch gradient descent on the hidden layer.

    Records the risk, the largest neuron displacement and the largest number
    of activation flips over the training inputs at every step.  Full
    parameter copies are kept at step 0, step T, and every
    ``snapshot_every`` steps when that is positive.
    """
    if not 0 < eta <= 0.5:
        raise ValueError(f"step size must lie in (0, 1/2], got eta={eta}")
    if T < 0:
        raise ValueError("T must be nonnegative")
    if data.n == 0:
        raise ValueError("cannot train on an empty dataset")
    X, y = data.X, data.y
    W0 = params0.W.copy()
    params = params0.copy()
    risks = np.empty(T + 1)
    drift = np.empty(T + 1)
    flips = np.empty(T + 1, dtype=np.int64)
    gnorm = np.empty(T + 1)
    act0 = X @ W0.T > 0
    snaps = {0: params0.copy()}
    for t in range(T + 1):
        L, G, act = _risk_and_grad(params, X, y)
        risks[t] = L
        gnorm[t] = float(np.sum(G * G))
        drift[t] = float(np.max(np.linalg.norm(params.W - W0, axis=1)))
        flips[t] = int(np.count_nonzero(act != act0, axis=1).max())
        if snapshot_every and t % snapshot_every == 0:
            snaps[t] = params.copy()
        if t < T:
            params.W = params.W - eta * G
    snaps[T] = params.copy()
    return TrainTrajectory(np.arange(T + 1), risks, drift, flips, gnorm, snaps, params)
