"""Symmetric eigendecomposition, localized complexities and stopping rules."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numba
import numpy as np
from scipy.special import zeta

SYMMETRY_RTOL = 1e-10
CLAMP_RTOL = 1e-8
E = math.e


class AsymmetricMatrixError(ValueError):
    pass


class JacobiConvergenceError(RuntimeError):
    def __init__(self, sweeps: int, residual: float):
        super().__init__(f"Jacobi did not converge after {sweeps} sweeps (relative off-diagonal norm {residual:.3e})")
        self.sweeps = sweeps
        self.residual = residual


class StoppingCapReached(RuntimeError):
    def __init__(self, cap: int):
        super().__init__(f"stopping rule not triggered within cap t <= {cap}")
        self.cap = cap


# --------------------------------------------------------------------------
# eigendecomposition


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pairings covering every (p, q) with p < q exactly once per sweep."""
    N = n + (n % 2)
    players = list(range(N))
    rounds = []
    for _ in range(N - 1):
        P, Q = [], []
        for i in range(N // 2):
            a, b = players[i], players[N - 1 - i]
            if a < n and b < n:
                P.append(min(a, b))
                Q.append(max(a, b))
        rounds.append((np.array(P, dtype=np.intp), np.array(Q, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


@numba.njit(cache=True)
def _rotate_round(A, Vt, P, Q, c, s, t, apq, app, aqq):
    """Apply the Jacobi rotations for one round of disjoint (p, q) pairs.

    Rotation angles come from the matrix before the round; disjoint pairs
    commute, so columns are updated row by row and rows pair by pair, both
    with contiguous memory access.  Vt holds eigenvectors as rows.
    """
    n = A.shape[0]
    h = P.shape[0]
    for i in range(h):
        p, q = P[i], Q[i]
        apq[i] = A[p, q]
        app[i] = A[p, p]
        aqq[i] = A[q, q]
        if apq[i] == 0.0:
            c[i], s[i], t[i] = 1.0, 0.0, 0.0
            continue
        theta = (aqq[i] - app[i]) / (2.0 * apq[i])
        ti = 1.0 / (abs(theta) + np.hypot(theta, 1.0))
        if theta < 0.0:
            ti = -ti
        t[i] = ti
        c[i] = 1.0 / np.sqrt(ti * ti + 1.0)
        s[i] = ti * c[i]
    for k in range(n):
        for i in range(h):
            p, q = P[i], Q[i]
            akp, akq = A[k, p], A[k, q]
            A[k, p] = c[i] * akp - s[i] * akq
            A[k, q] = s[i] * akp + c[i] * akq
    for i in range(h):
        p, q = P[i], Q[i]
        ci, si = c[i], s[i]
        for k in range(n):
            apk, aqk = A[p, k], A[q, k]
            A[p, k] = ci * apk - si * aqk
            A[q, k] = si * apk + ci * aqk
            vp, vq = Vt[p, k], Vt[q, k]
            Vt[p, k] = ci * vp - si * vq
            Vt[q, k] = si * vp + ci * vq
        if apq[i] != 0.0:
            # exact 2x2 block from the pre-round values
            A[p, q] = 0.0
            A[q, p] = 0.0
            A[p, p] = app[i] - t[i] * apq[i]
            A[q, q] = aqq[i] + t[i] * apq[i]


def _off_norm(A: np.ndarray) -> float:
    return float(np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2)))


def eigh_symmetric(M, tol: float = 1e-12, max_sweeps: int = 64):
    """Eigenvalues (descending) and orthonormal eigenvectors of a symmetric matrix.

    Cyclic Jacobi.  Each sweep visits every off-diagonal pair once, grouped
    into rounds of disjoint pairs so a round's rotations commute and can be
    applied together.  Iterates until the off-diagonal Frobenius norm drops
    to ``tol * ||M||_F``.
    """
    A = np.array(M, dtype=float, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    n = A.shape[0]
    scale = float(np.linalg.norm(A))
    if n and float(np.linalg.norm(A - A.T)) > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
        raise AsymmetricMatrixError("matrix is not symmetric within 1e-10 relative")
    A = 0.5 * (A + A.T)
    if n <= 1 or scale == 0.0:
        return np.diag(A).copy(), np.eye(n)
    rounds = _round_robin(n)
    target = tol * scale
    Vt = np.eye(n)
    work = [np.empty(n) for _ in range(6)]
    sweeps = 0
    off = _off_norm(A)
    while off > target:
        if sweeps == max_sweeps:
            raise JacobiConvergenceError(sweeps, off / scale)
        for P, Q in rounds:
            _rotate_round(A, Vt, P, Q, *work)
        sweeps += 1
        off = _off_norm(A)
    V = np.ascontiguousarray(Vt.T)
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


# --------------------------------------------------------------------------
# spectra and complexities


@dataclass(frozen=True)
class SpectrumView:
    """Kernel-matrix eigenvalues, descending and clamped at zero."""

    eigenvalues: np.ndarray
    n: int

    @classmethod
    def from_eigenvalues(cls, values, n: int | None = None) -> "SpectrumView":
        lam = np.sort(np.asarray(values, dtype=float))[::-1]
        n = len(lam) if n is None else n
        if lam.size and lam[-1] < -CLAMP_RTOL * n:
            raise ValueError(f"eigenvalue {lam[-1]:.3e} is below -1e-8*n; kernel matrix is not PSD")
        return cls(np.maximum(lam, 0.0), n)

    @classmethod
    def from_matrix(cls, K) -> "SpectrumView":
        w, _ = eigh_symmetric(K)
        return cls.from_eigenvalues(w)

    @property
    def scaled(self) -> np.ndarray:
        """lambda_i / n."""
        return self.eigenvalues / self.n

    def to_csv(self) -> str:
        lines = ["k,lambda_k,lambda_k_over_n"]
        for k, (lam, s) in enumerate(zip(self.eigenvalues, self.scaled), start=1):
            lines.append(f"{k},{lam:.17g},{s:.17g}")
        return "\n".join(lines) + "\n"


def empirical_complexity(spectrum: SpectrumView, x):
    """sqrt((1/n) sum_i min(x^2, lambda_i / n)); accepts scalar or array x."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("complexity radius must be nonnegative")
    s = spectrum.scaled
    x2 = (xa * xa)[..., None]
    out = np.sqrt(np.minimum(x2, s).sum(axis=-1) / spectrum.n)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PolynomialDecay:
    """Population eigenvalues mu_i = C * i^(-beta)."""

    C: float
    beta: float

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("decay constant C must be positive")
        if not self.beta > 1:
            raise ValueError(f"decay exponent must exceed 1 for summability, got beta={self.beta}")


def population_complexity(decay: PolynomialDecay, n: int, x: float) -> float:
    """sqrt((1/n) sum_{i>=1} min(x^2, C i^-beta)), tail summed by Hurwitz zeta."""
    if x < 0:
        raise ValueError("complexity radius must be nonnegative")
    if x == 0:
        return 0.0
    C, beta = decay.C, decay.beta
    x2 = x * x
    # i0 = number of indices whose eigenvalue is at least x^2
    i0 = math.floor((C / x2) ** (1.0 / beta))
    while C * (i0 + 1) ** (-beta) >= x2:
        i0 += 1
    while i0 > 0 and C * i0 ** (-beta) < x2:
        i0 -= 1
    total = i0 * x2 + C * float(zeta(beta, i0 + 1))
    return math.sqrt(total / n)


def _smallest_crossing(holds, start: float = 1.0) -> float:
    """Smallest r > 0 with holds(r) True, for a predicate monotone in r."""
    hi = start
    while not holds(hi):
        hi *= 2.0
        if hi > 1e300:
            raise ArithmeticError("no solution found below 1e300")
    lo = hi / 2.0
    while holds(lo):
        hi = lo
        lo /= 2.0
        if lo < 1e-300:
            return hi
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if holds(mid):
            hi = mid
        else:
            lo = mid
    return hi


def empirical_critical_radius(spectrum: SpectrumView, sigma: float) -> float:
    """Smallest r > 0 with R_hat(sqrt r) <= r / (2 e sigma)."""
    if not sigma > 0:
        raise ValueError("noise level sigma must be positive")
    if not np.any(spectrum.eigenvalues > 0):
        raise ValueError("critical radius undefined for an all-zero spectrum")
    b = 2.0 * E * sigma
    return _smallest_crossing(lambda r: empirical_complexity(spectrum, math.sqrt(r)) <= r / b)


def population_critical_radius(decay: PolynomialDecay, n: int, b: float) -> float:
    """Smallest r > 0 with R(sqrt r) <= r / b."""
    if not b > 0:
        raise ValueError("b must be positive")
    return _smallest_crossing(lambda r: population_complexity(decay, n, math.sqrt(r)) <= r / b)


# --------------------------------------------------------------------------
# stopping rules


@dataclass(frozen=True)
class StoppingDecision:
    rule: str
    T: int
    eta: float | None
    r_hat: float | None = None
    sigma: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def rwy_stopping_time(
    spectrum: SpectrumView,
    eta: float,
    sigma: float,
    cap: int = 10**7,
) -> StoppingDecision:
    """Stop one step before R_hat(1/sqrt(eta t)) first exceeds 1/(2 e sigma eta t)."""
    if not sigma > 0:
        raise ValueError("RWY rule needs sigma > 0 (the stopping time diverges as sigma -> 0)")
    if not 0 < eta <= 0.5:
        raise ValueError(f"step size must lie in (0, 1/2], got eta={eta}")
    t0, chunk = 1, 256
    first = None
    while t0 <= cap:
        t = np.arange(t0, min(t0 + chunk, cap + 1), dtype=float)
        lhs = empirical_complexity(spectrum, 1.0 / np.sqrt(eta * t))
        rhs = 1.0 / (2.0 * E * sigma * eta * t)
        hit = np.flatnonzero(lhs > rhs)
        if hit.size:
            first = int(t[hit[0]])
            break
        t0 += len(t)
        chunk *= 2
    if first is None:
        raise StoppingCapReached(cap)
    r_hat = empirical_critical_radius(spectrum, sigma)
    return StoppingDecision("rwy", first - 1, eta, r_hat, sigma)


def dieuleveut_rule(n: int, beta: float) -> StoppingDecision:
    """eta = n^(-1/(1+beta)) / 2 with T = n."""
    if n < 1 or not beta > 0:
        raise ValueError("need n >= 1 and beta > 0")
    return StoppingDecision("dieuleveut", n, 0.5 * n ** (-1.0 / (1.0 + beta)))


def yao_rule(n: int) -> StoppingDecision:
    """T = n^(1/3), rounded half up; the step size is left to the caller."""
    if n < 1:
        raise ValueError("need n >= 1")
    return StoppingDecision("yao", int(math.floor(n ** (1.0 / 3.0) + 0.5)), None)


def fixed_rule(T: int, eta: float) -> StoppingDecision:
    return StoppingDecision("fixed", int(T), eta)
