"""ReLU neural tangent kernel and gradient-descent kernel least squares.

The kernel is

    kappa(x, x') = (x . x') * P(w . x > 0, w . x' > 0),   w ~ N(0, I_d)
                 = (x . x') * (pi - angle(x, x')) / (2 pi),

i.e. the expected inner product of the network gradients at a random
symmetric initialization.  Its diagonal is exactly 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .relu_net import NetworkParams
from .sphere_data import UNIT_TOL, _check_unit_rows
from .spectral_stop import eigh_symmetric

MATRIX_TOL = 1e-12


class NearSingularKernelError(ValueError):
    def __init__(self, lambda_min: float, threshold: float):
        super().__init__(f"kernel matrix is near singular: lambda_min = {lambda_min:.3e} <= {threshold:.3e}")
        self.lambda_min = lambda_min


def kappa_from_cosine(c):
    """Kernel value as a function of the cosine between two unit vectors."""
    c = np.clip(np.asarray(c, dtype=float), -1.0, 1.0)
    out = c * (np.pi - np.arccos(c)) / (2.0 * np.pi)
    return float(out) if out.ndim == 0 else out


def _angles(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    # 2 atan2(|x - y|, |x + y|) keeps full precision near 0 and pi, unlike arccos
    diff = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=-1)
    summ = np.linalg.norm(X[:, None, :] + Y[None, :, :], axis=-1)
    return 2.0 * np.arctan2(diff, summ)


def kappa_cross(X, Y, block: int = 256) -> np.ndarray:
    """Kernel block kappa(X_i, Y_j) for unit-row matrices."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise ValueError("dimension mismatch")
    _check_unit_rows(X)
    _check_unit_rows(Y)
    out = np.empty((X.shape[0], Y.shape[0]))
    for i in range(0, X.shape[0], block):
        Xb = X[i : i + block]
        out[i : i + block] = (Xb @ Y.T) * (np.pi - _angles(Xb, Y)) / (2.0 * np.pi)
    return out


def kappa(x, x_tilde) -> float:
    x = np.asarray(x, dtype=float)
    x_tilde = np.asarray(x_tilde, dtype=float)
    return float(kappa_cross(x[None, :], x_tilde[None, :])[0, 0])


@dataclass
class KernelMatrix:
    K: np.ndarray
    X: np.ndarray = field(repr=False)

    def __post_init__(self):
        K = self.K
        if K.shape != (self.X.shape[0],) * 2:
            raise ValueError("kernel matrix shape does not match inputs")
        if np.max(np.abs(K - K.T), initial=0.0) > MATRIX_TOL:
            raise ValueError("kernel matrix is not symmetric")

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def to_csv(self) -> str:
        return "\n".join(",".join(f"{v:.17g}" for v in row) for row in self.K) + "\n"


def kernel_matrix(X) -> KernelMatrix:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("kernel matrix needs at least one input")
    K = kappa_cross(X, X)
    K = 0.5 * (K + K.T)
    return KernelMatrix(K, X)


def _raw(K) -> np.ndarray:
    return K.K if isinstance(K, KernelMatrix) else np.asarray(K, dtype=float)


# --------------------------------------------------------------------------
# neural tangent features


@dataclass
class NtfFeatures:
    Phi: np.ndarray  # (d*m, n), column i is phi(x_i)
    Khat: np.ndarray


def ntf_features(params0: NetworkParams, X) -> NtfFeatures:
    """Network gradients at initialization on each input, and their Gram matrix."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != params0.d:
        raise ValueError(f"dimension mismatch: network has d={params0.d}, input has {X.shape[1]}")
    act = (X @ params0.W.T > 0).astype(float)
    Phi = ((act * params0.u)[:, :, None] * X[:, None, :]).reshape(X.shape[0], -1).T
    return NtfFeatures(Phi, Phi.T @ Phi)


def ntf_gram(params: NetworkParams, X) -> np.ndarray:
    """Gram matrix of the features without materializing them."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    act = (X @ params.W.T > 0).astype(float)
    Khat = (X @ X.T) * ((act * params.u**2) @ act.T)
    return 0.5 * (Khat + Khat.T)


# --------------------------------------------------------------------------
# kernel least squares by gradient descent


def _check_eta(eta: float) -> None:
    if not 0 < eta <= 0.5:
        raise ValueError(f"step size must lie in (0, 1/2], got eta={eta}")


@dataclass(frozen=True)
class KlsState:
    alpha: np.ndarray
    t: int
    eta: float
    X: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)

    def onsample(self) -> np.ndarray:
        return self.K @ self.alpha


def kls_gd_run(K, y, eta: float, T: int, X=None) -> KlsState:
    """T gradient steps alpha <- alpha - (2 eta / n)(K alpha - y) from alpha = 0.

    On-sample predictions f = K alpha then follow f <- f - (2 eta / n) K (f - y).
    """
    _check_eta(eta)
    Km = _raw(K)
    y = np.asarray(y, dtype=float)
    n = Km.shape[0]
    if y.shape != (n,):
        raise ValueError("target length does not match kernel matrix")
    if X is None and isinstance(K, KernelMatrix):
        X = K.X
    step = 2.0 * eta / n
    alpha = np.zeros(n)
    for _ in range(T):
        alpha = alpha - step * (Km @ alpha - y)
    return KlsState(alpha, int(T), eta, X, Km)


def _geometric_factors(lam: np.ndarray, eta: float, n: int, t: int):
    """1 - (1 - 2 eta lam / n)^t, computed without cancellation."""
    rate = 2.0 * eta * np.asarray(lam, dtype=float) / n
    if t == 0:
        return np.zeros_like(rate)
    stable = (rate >= 0) & (rate < 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.expm1(t * np.log1p(-np.where(stable, rate, 0.0)))
    return np.where(stable, out, 1.0 - np.power(1.0 - rate, t))


def _eig(Km: np.ndarray, eig):
    return eigh_symmetric(Km) if eig is None else eig


def kls_closed_form_onsample(K, y, eta: float, t: int, eig=None) -> np.ndarray:
    """(I - (I - (2 eta / n) K)^t) y through the eigendecomposition of K."""
    Km = _raw(K)
    y = np.asarray(y, dtype=float)
    n = Km.shape[0]
    lam, V = _eig(Km, eig)
    g = _geometric_factors(lam, eta, n, t)
    return V @ (g * (V.T @ y))


def kls_closed_form_dual(K, y, eta: float, t: int, X=None, eig=None) -> KlsState:
    """Dual coefficients after t steps without iterating.

    alpha_t = (2 eta / n) sum_{s<t} (I - (2 eta / n) K)^s y, which in the
    eigenbasis is (1 - (1 - c lam)^t) / lam with limit c t at lam = 0.
    """
    _check_eta(eta)
    Km = _raw(K)
    y = np.asarray(y, dtype=float)
    n = Km.shape[0]
    lam, V = _eig(Km, eig)
    c = 2.0 * eta / n
    lam_c = np.maximum(lam, 0.0)
    g = _geometric_factors(lam_c, eta, n, t)
    tiny = lam_c * c < 1e-300
    coef = np.where(tiny, c * t, g / np.where(tiny, 1.0, lam_c))
    alpha = V @ (coef * (V.T @ y))
    if X is None and isinstance(K, KernelMatrix):
        X = K.X
    return KlsState(alpha, int(t), eta, X, Km)


def kls_predict(state: KlsState, x) -> np.ndarray | float:
    """f(x) = sum_i alpha_i kappa(x_i, x) at a point or at each row of an array."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Xq = x[None, :] if single else x
    if state.X is None:
        raise ValueError("state carries no training inputs")
    out = kappa_cross(Xq, state.X) @ state.alpha
    return float(out[0]) if single else out


def rkhs_norm_of_iterate(K, y, eta: float, t: int, eig=None) -> float:
    """RKHS norm of the t-th KLS iterate, sqrt(z^T K^-1 z) for z its on-sample values."""
    Km = _raw(K)
    n = Km.shape[0]
    lam, V = _eig(Km, eig)
    lam_min = float(lam[-1])
    threshold = 1e-10 * n
    if lam_min <= threshold:
        raise NearSingularKernelError(lam_min, threshold)
    g = _geometric_factors(lam, eta, n, t)
    coeff = V.T @ np.asarray(y, dtype=float)
    return float(np.sqrt(np.sum((g * coeff) ** 2 / lam)))


# --------------------------------------------------------------------------
# network versus kernel


def coupling_gap(f: Callable, g: Callable, test_points) -> float:
    """max over test points of |f(x) - g(x)|; f and g map an (M, d) array to (M,)."""
    P = np.atleast_2d(np.asarray(test_points, dtype=float))
    if P.shape[0] == 0:
        raise ValueError("coupling gap needs at least one test point")
    return float(np.max(np.abs(np.asarray(f(P)) - np.asarray(g(P)))))


def sup_test_points(d: int, seed: int, count: int = 512) -> np.ndarray:
    """Fixed seeded points used as a Monte Carlo stand-in for the sup over the sphere."""
    from .sphere_data import sample_sphere

    return sample_sphere(count, d, seed, tag="sup-test")


__all__ = [
    "UNIT_TOL",
    "KernelMatrix",
    "KlsState",
    "NearSingularKernelError",
    "NtfFeatures",
    "coupling_gap",
    "kappa",
    "kappa_cross",
    "kappa_from_cosine",
    "kernel_matrix",
    "kls_closed_form_dual",
    "kls_closed_form_onsample",
    "kls_gd_run",
    "kls_predict",
    "ntf_features",
    "ntf_gram",
    "rkhs_norm_of_iterate",
    "sup_test_points",
]
