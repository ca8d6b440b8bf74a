"""Chernoff-type upper bounds: optimal tilt, rate function, and fits of the cubic coefficient.

The bound is ``(1/N) log E exp(lam S) <= lam^2 alpha2 / 2 + beta lam^3`` for
``0 <= lam <= lambda_max``.  The constants ``beta`` and ``lambda_max`` have no
computable closed form and are treated as parameters, optionally fitted from
exact many-body moment generating functions.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .lattice import Observable, PairPotential


@dataclass(frozen=True)
class LDPParams:
    alpha2: float
    beta: float = 0.0
    lambda_max: float = np.inf

    def __post_init__(self):
        if not self.alpha2 >= 0:
            raise ValueError(f"alpha2 must be >= 0, got {self.alpha2}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not self.lambda_max > 0:
            raise ValueError(f"lambda_max must be > 0, got {self.lambda_max}")
        if self.alpha2 == 0 and self.beta == 0:
            raise ValueError("alpha2 and beta cannot both vanish")


class Tilt(NamedTuple):
    lam: float
    clamped: bool


def triple_norm(O: Observable, v: PairPotential) -> float:
    """``||Lap O (1 - Lap)^{-1}||_op + (1 + ||v||_inf + ||v||_1) ||O||_op``."""
    lat = O.lattice
    lat.check_same(v.lattice)
    T = lat.kinetic_matrix()
    n = lat.n_sites
    smoothing = np.linalg.solve(np.eye(n) + T, np.eye(n))
    first = np.linalg.norm(-T @ O.matrix @ smoothing, 2)
    return float(first + (1 + v.norm_linf + v.norm_l1) * O.op_norm)


def objective(lam, x, p: LDPParams):
    """``-lam x + lam^2 alpha2 / 2 + beta lam^3``."""
    lam = np.asarray(lam, float)
    return -lam * x + 0.5 * lam**2 * p.alpha2 + p.beta * lam**3


def _check_x(x):
    x = np.asarray(x, float)
    if np.any(~(x > 0)):
        raise ValueError("x must be positive")
    return x


def _unclamped(x, p: LDPParams):
    return 2 * x / (p.alpha2 + np.sqrt(p.alpha2**2 + 12 * p.beta * x))


def lambda_star(x, p: LDPParams) -> Tilt:
    """Minimizer of :func:`objective` over ``lam >= 0``, clamped to ``lambda_max``.

    Written in the cancellation-free form ``2x / (alpha2 + sqrt(alpha2^2 + 12 beta x))``.
    """
    x = _check_x(x)
    lam = _unclamped(x, p)
    clamped = lam > p.lambda_max
    lam = np.minimum(lam, p.lambda_max)
    if lam.ndim == 0:
        return Tilt(float(lam), bool(clamped))
    return Tilt(lam, clamped)


def rate_function(x, p: LDPParams):
    """``gamma(x) = min over 0 <= lam <= lambda_max`` of the objective (``<= 0``)."""
    lam, _ = lambda_star(x, p)
    out = objective(lam, np.asarray(x, float), p)
    return float(out) if np.ndim(out) == 0 else out


def rate_function_closed_form(x, p: LDPParams):
    """Two-term closed form of ``gamma`` at the unclamped optimum.

    ``-2x^2 sqrt(D) / (alpha2 + sqrt(D))^2 + 8 beta x^3 / (alpha2 + sqrt(D))^3``
    with ``D = alpha2^2 + 12 beta x``.
    """
    x = _check_x(x)
    root = np.sqrt(p.alpha2**2 + 12 * p.beta * x)
    den = p.alpha2 + root
    out = -2 * x**2 * root / den**2 + 8 * p.beta * x**3 / den**3
    return float(out) if out.ndim == 0 else out


def chernoff_envelope(x, N: int, p: LDPParams):
    """``exp(N gamma(x))``, the upper bound on ``P(S / N > x)``."""
    out = np.exp(N * np.asarray(rate_function(x, p)))
    return float(out) if out.ndim == 0 else out


# -- fitting the cubic coefficient --------------------------------------------------


def cubic_residual(lams, log_mgf_per_N, alpha2: float) -> np.ndarray:
    """``(1/N) log mgf(lam) - lam^2 alpha2 / 2``."""
    lams = np.asarray(lams, float)
    return np.asarray(log_mgf_per_N, float) - 0.5 * alpha2 * lams**2


def fit_beta(lams, log_mgf_per_N, alpha2: float, mode="lsq") -> float:
    """Cubic coefficient from measured ``(1/N) log mgf`` on a grid of ``lam > 0``.

    ``"lsq"`` is the least-squares slope of the residual against ``lam^3``
    (clipped at zero); ``"envelope"`` is the smallest ``beta`` for which the
    bound holds at every grid point.
    """
    lams = np.asarray(lams, float)
    keep = lams > 0
    if not np.any(keep):
        raise ValueError("need at least one positive lambda")
    r = cubic_residual(lams, log_mgf_per_N, alpha2)[keep]
    l3 = lams[keep] ** 3
    if mode == "lsq":
        beta = float(r @ l3 / (l3 @ l3))
    elif mode == "envelope":
        beta = float(np.max(r / l3))
    else:
        raise ValueError(f"unknown fit mode {mode!r}")
    return max(beta, 0.0)


def admissible_window(lams, log_mgf_per_N, p: LDPParams, slack=0.0) -> float:
    """Largest grid ``lam`` up to which the bound holds at every grid point (0 if none)."""
    lams = np.asarray(lams, float)
    order = np.argsort(lams)
    lams = lams[order]
    meas = np.asarray(log_mgf_per_N, float)[order]
    bound = 0.5 * p.alpha2 * lams**2 + p.beta * lams**3
    ok = meas <= bound + slack
    best = 0.0
    for lam, good in zip(lams, ok):
        if not good:
            break
        best = lam
    return float(best)
