"""Special functions behind the distribution layer.

Thin, argument-checked fronts over scipy.special; every function raises
ValueError outside its mathematical domain instead of propagating NaNs.
"""

from __future__ import annotations

from scipy import special as _sp


def ln_gamma(x: float) -> float:
    """log Gamma(x) for x > 0."""
    if not x > 0:
        raise ValueError(f"ln_gamma requires x > 0, got {x}")
    return float(_sp.gammaln(x))


def reg_inc_gamma(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x), a > 0, x >= 0."""
    if not a > 0:
        raise ValueError(f"reg_inc_gamma requires a > 0, got {a}")
    if x < 0:
        raise ValueError(f"reg_inc_gamma requires x >= 0, got {x}")
    return float(_sp.gammainc(a, x))


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b), a, b > 0, 0 <= x <= 1."""
    if not (a > 0 and b > 0):
        raise ValueError(f"reg_inc_beta requires a, b > 0, got a={a}, b={b}")
    if not 0 <= x <= 1:
        raise ValueError(f"reg_inc_beta requires 0 <= x <= 1, got {x}")
    return float(_sp.betainc(a, b, x))


def reg_inc_beta_inv(a: float, b: float, q: float) -> float:
    """Inverse of ``reg_inc_beta`` in its last argument."""
    if not (a > 0 and b > 0):
        raise ValueError(f"reg_inc_beta_inv requires a, b > 0, got a={a}, b={b}")
    if not 0 <= q <= 1:
        raise ValueError(f"reg_inc_beta_inv requires 0 <= q <= 1, got {q}")
    return float(_sp.betaincinv(a, b, q))


def reg_inc_gamma_inv(a: float, q: float) -> float:
    """Inverse of ``reg_inc_gamma`` in its second argument."""
    if not a > 0:
        raise ValueError(f"reg_inc_gamma_inv requires a > 0, got {a}")
    if not 0 <= q < 1:
        raise ValueError(f"reg_inc_gamma_inv requires 0 <= q < 1, got {q}")
    return float(_sp.gammaincinv(a, q))
