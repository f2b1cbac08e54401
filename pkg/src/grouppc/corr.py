"""Within-group correlation matrices and their log-determinants.

Everything here works group-wise: the full residual correlation matrix is
block diagonal with one block per group, so log-determinants, derivatives
and precisions are sums (or direct sums) over groups.  Each family has a
closed form per block:

* exchangeable: ``|R| = (1 + (m-1) rho) (1 - rho)^(m-1)``
* AR1 (unit spacing): ``|R| = (1 - rho^2)^(m-1)``
* OU over gaps ``delta``: ``|R| = prod_i (1 - exp(-2 delta_i phi))``

The OU form follows from the Markov property of the process: conditioning
telescopes the joint density into consecutive-pair factors, so only the
gap correlations ``exp(-delta_i phi)`` enter.  AR1 is the unit-spacing
special case under ``rho = exp(-phi)``.

A dense Cholesky fallback (`log_det_dense`, `dlogdet_finite_difference`)
backs the same quantities for verification.

Functions taking the correlation parameter accept scalars or arrays and
broadcast over the parameter.  All functions are pure.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray
from scipy.special import expit

from .design import Family, GroupModel, GroupedDesign
from .errors import DomainError

__all__ = [
    "corr_matrix",
    "precision_matrix",
    "log_det",
    "dlogdet_dparam",
    "log_det_dense",
    "dlogdet_finite_difference",
    "param_to_internal",
    "internal_to_param",
    "log_det_from_internal",
    "dlogdet_dinternal",
]

# Largest logit(rho) with rho strictly below 1.0 in double precision.
RHO_INTERNAL_MAX = 36.7
# Smallest log(phi) with phi strictly above 0.0 (normal range, with margin).
PHI_INTERNAL_MIN = -700.0


def _log1mexp(x):
    """log(1 - exp(-x)) for x >= 0, accurate at both ends."""
    x = np.asarray(x, dtype=float)
    small = x < np.log(2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(
            small,
            np.log(-np.expm1(-np.where(small, x, 1.0))),
            np.log1p(-np.exp(-np.where(small, 1.0, x))),
        )
    return out


def _softplus(t):
    """log(1 + exp(t)), overflow safe."""
    return np.logaddexp(0.0, t)


def _check_param(model: GroupModel, param, allow_degenerate: bool) -> NDArray:
    p = np.asarray(param, dtype=float)
    if np.any(np.isnan(p)):
        raise DomainError("correlation parameter is NaN")
    if model.family is Family.OU:
        bad = p < 0 if allow_degenerate else p <= 0
        if np.any(bad):
            raise DomainError("phi must be positive for the OU family")
    else:
        hi_bad = p > 1 if allow_degenerate else p >= 1
        if np.any(p < 0) or np.any(hi_bad):
            raise DomainError("rho must lie in [0, 1)")
    return p


def _scalar_like(param, value):
    """Return a float when the parameter input was scalar."""
    if np.ndim(param) == 0:
        return float(value)
    return np.asarray(value)


# ----------------------------------------------------------------------
# matrix construction
# ----------------------------------------------------------------------

def corr_matrix(model: GroupModel, design: GroupedDesign,
                group_index: int, param: float) -> NDArray:
    """Correlation matrix of one group (0-based ``group_index``).

    Parameters
    ----------
    model : GroupModel
    design : GroupedDesign
    group_index : int
        Which group, ``0 .. design.n_groups - 1``.
    param : float
        rho in [0, 1) for exchangeable/AR1, phi > 0 for OU.
    """
    model.check_design(design)
    p = float(_check_param(model, param, allow_degenerate=False))
    m = design.group_sizes[group_index]
    if model.family is Family.EXCHANGEABLE:
        R = np.full((m, m), p)
        np.fill_diagonal(R, 1.0)
        return R
    if model.family is Family.AR1:
        idx = np.arange(m)
        return p ** np.abs(idx[:, None] - idx[None, :])
    # OU: entries decay with the absolute coordinate difference
    if design.positions is not None:
        pos = np.asarray(design.positions[group_index], dtype=float)
    else:
        pos = np.arange(m, dtype=float)
    return np.exp(-np.abs(pos[:, None] - pos[None, :]) * p)


def _markov_precision(r: NDArray, tau: float) -> NDArray:
    """Precision of a unit-variance Markov chain with gap correlations ``r``.

    Writing x_i = r_i x_{i-1} + sqrt(1 - r_i^2) eps_i gives Q = B' D^-1 B
    with B unit lower bidiagonal and D the innovation variances, which is
    tridiagonal.
    """
    m = r.size + 1
    Q = np.zeros((m, m))
    Q[0, 0] = 1.0
    if m > 1:
        d = 1.0 - r * r
        i = np.arange(m - 1)
        Q[i + 1, i + 1] += 1.0 / d
        Q[i, i] += r * r / d
        Q[i, i + 1] = -r / d
        Q[i + 1, i] = -r / d
    return tau * Q


def precision_matrix(model: GroupModel, design: GroupedDesign,
                     group_index: int, param: float,
                     tau: float = 1.0) -> NDArray:
    """Precision of one group's residual block, ``tau * R^-1``.

    The product with ``corr_matrix(...) / tau`` is the identity.  All three
    families have analytic inverses: exchangeable via the rank-one update
    formula, AR1 and OU via the tridiagonal Markov factorization.
    """
    model.check_design(design)
    p = float(_check_param(model, param, allow_degenerate=False))
    if tau <= 0:
        raise DomainError("tau must be positive")
    m = design.group_sizes[group_index]
    if model.family is Family.EXCHANGEABLE:
        denom = (p - 1.0) * ((m - 1.0) * p + 1.0)
        Q = np.full((m, m), p)
        np.fill_diagonal(Q, -((m - 2.0) * p + 1.0))
        return (tau / denom) * Q
    if model.family is Family.AR1:
        r = np.full(m - 1, p)
    else:
        r = np.exp(-design.spacings(group_index) * p)
    return _markov_precision(r, tau)


# ----------------------------------------------------------------------
# log-determinants and derivatives (closed forms, vectorized in param)
# ----------------------------------------------------------------------

def _size_counts(design: GroupedDesign):
    return np.unique(np.asarray(design.group_sizes), return_counts=True)


def log_det(model: GroupModel, design: GroupedDesign, param):
    """Sum over groups of ``log |R_j(param)|``.

    Always <= 0, and exactly 0 at the independence base (rho = 0, or
    phi -> inf).  Degenerate boundary values (rho = 1, phi = 0) are
    accepted and yield ``-inf`` rather than raising.
    """
    model.check_design(design)
    p = _check_param(model, param, allow_degenerate=True)
    if model.family is Family.EXCHANGEABLE:
        out = np.zeros(np.shape(p))
        with np.errstate(divide="ignore"):
            for m, c in zip(*_size_counts(design)):
                if m == 1:
                    continue
                out = out + c * (np.log1p((m - 1) * p)
                                 + (m - 1) * np.log1p(-p))
        return _scalar_like(param, out)
    if model.family is Family.AR1:
        k = design.total_size - design.n_groups
        if k == 0:
            return _scalar_like(param, np.zeros(np.shape(p)))
        with np.errstate(divide="ignore"):
            out = k * (np.log1p(-p) + np.log1p(p))
        return _scalar_like(param, out)
    gaps = design.all_spacings()
    if gaps.size == 0:
        return _scalar_like(param, np.zeros(np.shape(p)))
    x = 2.0 * gaps.reshape(-1, *([1] * np.ndim(p))) * p
    return _scalar_like(param, _log1mexp(x).sum(axis=0))


def dlogdet_dparam(model: GroupModel, design: GroupedDesign, param):
    """Derivative of `log_det` in the correlation parameter.

    Defined on the interior of the domain; the degenerate boundary
    (rho = 1, phi = 0) raises a domain error.  The base point rho = 0 is
    allowed and gives exactly 0 for exchangeable/AR1.
    """
    model.check_design(design)
    p = _check_param(model, param, allow_degenerate=False)
    if model.family is Family.EXCHANGEABLE:
        out = np.zeros(np.shape(p))
        for m, c in zip(*_size_counts(design)):
            if m == 1:
                continue
            out = out + c * (m - 1) * (1.0 / (1.0 + (m - 1) * p)
                                       - 1.0 / (1.0 - p))
        return _scalar_like(param, out)
    if model.family is Family.AR1:
        k = design.total_size - design.n_groups
        out = k * (-2.0 * p) / ((1.0 - p) * (1.0 + p))
        return _scalar_like(param, out)
    gaps = design.all_spacings()
    if gaps.size == 0:
        return _scalar_like(param, np.zeros(np.shape(p)))
    g = gaps.reshape(-1, *([1] * np.ndim(p)))
    # d/dphi log(1 - exp(-2 g phi)) = 2 g / (exp(2 g phi) - 1)
    with np.errstate(over="ignore", divide="ignore"):
        out = (2.0 * g / np.expm1(2.0 * g * p)).sum(axis=0)
    return _scalar_like(param, out)


# ----------------------------------------------------------------------
# dense fallbacks
# ----------------------------------------------------------------------

def log_det_dense(model: GroupModel, design: GroupedDesign, param) -> float:
    """`log_det` recomputed from dense per-group Cholesky factors."""
    p = float(_check_param(model, param, allow_degenerate=False))
    total = 0.0
    for j in range(design.n_groups):
        R = corr_matrix(model, design, j, p)
        sign, val = np.linalg.slogdet(R)
        if sign <= 0:
            raise DomainError("correlation block is not positive definite")
        total += val
    return total


def dlogdet_finite_difference(model: GroupModel, design: GroupedDesign,
                              param: float, step: float = 1e-6) -> float:
    """Central finite-difference derivative of `log_det`."""
    p = float(param)
    return (log_det(model, design, p + step)
            - log_det(model, design, p - step)) / (2.0 * step)


# ----------------------------------------------------------------------
# internal (unbounded) parameter scale
# ----------------------------------------------------------------------
# rho lives on (0, 1) and is handled on the logit scale; phi lives on
# (0, inf) and is handled on the log scale.  Evaluating log-determinants
# directly from the internal coordinate sidesteps the loss of precision
# when rho is within a few ulp of 1, which matters for prior tails.

def param_to_internal(model: GroupModel, param):
    p = np.asarray(param, dtype=float)
    if model.family is Family.OU:
        with np.errstate(divide="ignore"):
            out = np.log(p)
    else:
        with np.errstate(divide="ignore"):
            out = np.log(p) - np.log1p(-p)
    return _scalar_like(param, out)


def internal_to_param(model: GroupModel, t):
    x = np.asarray(t, dtype=float)
    out = np.exp(x) if model.family is Family.OU else expit(x)
    return _scalar_like(t, out)


def log_det_from_internal(model: GroupModel, design: GroupedDesign, t):
    """`log_det` evaluated from the internal coordinate, stable in the tails."""
    model.check_design(design)
    x = np.asarray(t, dtype=float)
    if model.family is Family.EXCHANGEABLE:
        rho = expit(x)
        out = np.zeros(np.shape(x))
        for m, c in zip(*_size_counts(design)):
            if m == 1:
                continue
            # log(1 - rho) = -softplus(t) avoids saturation at rho ~ 1
            out = out + c * (np.log1p((m - 1) * rho) - (m - 1) * _softplus(x))
        return _scalar_like(t, out)
    if model.family is Family.AR1:
        k = design.total_size - design.n_groups
        out = k * (np.log1p(expit(x)) - _softplus(x))
        return _scalar_like(t, out)
    return log_det(model, design, np.exp(x))


def dlogdet_dinternal(model: GroupModel, design: GroupedDesign, t):
    """Derivative of `log_det` in the internal coordinate (chain rule applied)."""
    model.check_design(design)
    x = np.asarray(t, dtype=float)
    if model.family is Family.EXCHANGEABLE:
        rho = expit(x)
        drho = expit(x) * expit(-x)
        out = np.zeros(np.shape(x))
        for m, c in zip(*_size_counts(design)):
            if m == 1:
                continue
            out = out + c * (m - 1) * (drho / (1.0 + (m - 1) * rho) - rho)
        return _scalar_like(t, out)
    if model.family is Family.AR1:
        k = design.total_size - design.n_groups
        rho = expit(x)
        out = k * (-2.0 * rho * rho) / (1.0 + rho)
        return _scalar_like(t, out)
    gaps = design.all_spacings()
    if gaps.size == 0:
        return _scalar_like(t, np.zeros(np.shape(x)))
    phi = np.exp(x)
    g2 = 2.0 * gaps.reshape(-1, *([1] * np.ndim(x)))
    arg = g2 * phi
    # x / (exp(x) - 1) = x exp(-x) / (1 - exp(-x)): limit 1 at 0, decays at inf
    big = arg >= 1e-12
    safe = np.where(big, arg, 1.0)
    term = np.where(big, safe * np.exp(-safe) / (-np.expm1(-safe)), 1.0)
    return _scalar_like(t, term.sum(axis=0))
