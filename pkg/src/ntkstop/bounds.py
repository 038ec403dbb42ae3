"""Closed-form theory bounds, for overlaying on measured curves.

Every function is a pure evaluator that rejects inputs outside its domain
instead of clamping them.  ``C_lip`` and ``C_gap`` stand for dimension
dependent constants whose values are not known; they default to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BoundInputs:
    n: int
    d: int
    m: int
    eta: float
    T: int
    B_y: float
    lambda0: float
    nu: float = 1.0
    sigma: float = 0.0
    Lambda: float = 1.0
    R: float = 1.0
    C_lip: float = 1.0
    C_gap: float = 1.0

    def __post_init__(self):
        for name in ("n", "m", "B_y", "lambda0", "Lambda", "C_lip", "C_gap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.eta <= 0.5:
            raise ValueError("eta must lie in (0, 1/2]")
        if self.nu < 1:
            raise ValueError("nu must be at least 1")
        if self.T < 0 or self.sigma < 0:
            raise ValueError("T and sigma must be nonnegative")


def ln_plus(x: float) -> float:
    return max(math.log(x), 0.0)


def convergence_envelope(B_y: float, eta: float, lambda0: float, n: int, t: int) -> float:
    """B_y^2 (1 - eta lambda0 / (2n))^t."""
    rate = eta * lambda0 / (2.0 * n)
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"contraction factor eta*lambda0/(2n) = {rate} lies outside [0, 1]")
    return B_y**2 * (1.0 - rate) ** t


def drift_bound(B_y: float, n: int, lambda0: float, m: int) -> float:
    """Largest neuron displacement allowed along the GD path: 4 B_y^2 n / (lambda0 sqrt m)."""
    if not lambda0 > 0:
        raise ValueError("lambda0 must be positive")
    if m < 1:
        raise ValueError("m must be at least 1")
    return 4.0 * B_y**2 * n / lambda0 / math.sqrt(m)


def _check_ratio_nu(n: int, lambda0: float, nu: float) -> float:
    if not lambda0 > 0:
        raise ValueError("lambda0 must be positive")
    ratio = n / lambda0
    if ratio < 1:
        raise ValueError(f"n / lambda0 = {ratio} must be at least 1")
    if nu < 1:
        raise ValueError(f"nu = {nu} must be at least 1")
    return ratio


def width_requirement(B_y: float, n: int, lambda0: float, nu: float) -> int:
    """(8 (4 B_y^2 n/lambda0 + sqrt nu) + 2 + n)^4 (n/lambda0)^2, rounded up."""
    ratio = _check_ratio_nu(n, lambda0, nu)
    base = 8.0 * (4.0 * B_y**2 * ratio + math.sqrt(nu)) + (2.0 + n)
    return math.ceil(base**4 * ratio**2)


def coupling_bound(B_y: float, n: int, lambda0: float, m: int, nu: float) -> float:
    """Bound on sup_x (f_t(x) - f^kappa_t(x))^2 for the network/kernel pair."""
    ratio = _check_ratio_nu(n, lambda0, nu)
    if m < 1:
        raise ValueError("m must be at least 1")
    first = 64.0 / math.sqrt(m) * (4.0 * B_y**2 * ratio + math.sqrt(nu)) ** 2 * (256.0 * ratio + 9.0) ** 2
    second = nu / m * B_y**2 * (24.0 * ratio + 0.5) ** 4
    return first + second


def approx_error_A(R: float, Lambda: float, d: int, C_lip: float = 1.0) -> float:
    """Sup-norm error of the best RKHS approximant with squared norm at most R."""
    if d <= 2:
        raise ValueError("approximation error needs d > 2")
    if not Lambda > 0:
        raise ValueError("Lambda must be positive")
    s = math.sqrt(R) / Lambda
    if s <= 1:
        raise ValueError("need sqrt(R) / Lambda > 1")
    if R < C_lip:
        raise ValueError("need R >= C_lip")
    return C_lip * Lambda * s ** (-2.0 / (d - 2)) * math.log(s)


def tradeoff_R_star(x: float, y: float, Lambda: float, d: int) -> float:
    """Approximate minimizer of x A(R)^2 + y R.

    The caller must check R* >= max(C_lip, Lambda^2) before using it.
    """
    if not (x > 0 and y > 0):
        raise ValueError("x and y must be positive")
    if d <= 2:
        raise ValueError("need d > 2")
    return Lambda**2 * (y / x) ** (2.0 / d - 1.0)


def tradeoff_bound(x: float, y: float, Lambda: float, d: int, C_lip: float = 1.0) -> float:
    """(1 + C_lip^2 ln_+^2((y/x)^(1/d - 1/2))) Lambda^2 x^(1-2/d) y^(2/d)."""
    if not (x > 0 and y > 0):
        raise ValueError("x and y must be positive")
    if d <= 2:
        raise ValueError("need d > 2")
    log_term = ln_plus((y / x) ** (1.0 / d - 0.5))
    return (1.0 + C_lip**2 * log_term**2) * Lambda**2 * x ** (1.0 - 2.0 / d) * y ** (2.0 / d)


def rate_prediction(n: int, d: int) -> float:
    """Minimax excess-risk rate n^(-2/(2+d)) for Lipschitz targets, constants dropped."""
    if n < 1 or d < 2:
        raise ValueError("need n >= 1 and d >= 2")
    return n ** (-2.0 / (2.0 + d))
