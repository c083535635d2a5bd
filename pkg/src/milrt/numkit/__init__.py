"""Numerical substrate: special functions, distributions, linear algebra, RNG."""

from .distributions import ChiSquare, FDist
from .linalg import cholesky, log_det, quad_form_inv, spd_inverse, spd_solve
from .rng import RngStream, as_generator
from .samplers import dirichlet, gamma, multivariate_normal, standard_normal, wishart
from .special import (
    ln_gamma,
    reg_inc_beta,
    reg_inc_beta_inv,
    reg_inc_gamma,
    reg_inc_gamma_inv,
)

__all__ = [
    "ChiSquare",
    "FDist",
    "RngStream",
    "as_generator",
    "cholesky",
    "dirichlet",
    "gamma",
    "ln_gamma",
    "log_det",
    "multivariate_normal",
    "quad_form_inv",
    "reg_inc_beta",
    "reg_inc_beta_inv",
    "reg_inc_gamma",
    "reg_inc_gamma_inv",
    "spd_inverse",
    "spd_solve",
    "standard_normal",
    "wishart",
]
