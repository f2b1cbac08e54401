"""Penalized-complexity priors on within-group correlation parameters.

The prior is built in two steps.  First, the model's departure from the
independent base model is measured by

    d(param) = sqrt(2 KLD) = sqrt(-sum_j log |R_j(param)|),

which follows from the Gaussian Kullback-Leibler divergence against the
identity correlation: the trace term cancels because correlation matrices
have unit diagonal.  Second, an exponential distribution with rate lambda
is placed on that distance and pushed back to the parameter scale:

    pi(param) = lambda exp(-lambda d(param)) |d'(param)|.

The rate is scaled from a tail statement P(d < d(u)) = a, i.e.
lambda = -log(1 - a) / d(u).  For the exchangeable and AR1 families the
statement is the familiar P(rho < u) = a; for OU, whose distance
decreases in phi, it reads P(phi > u) = a.

All computation runs on an unbounded internal coordinate (logit rho, or
log phi) where the distance is monotone and the transformed density has
no boundary singularities; see `DistanceFunction`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import integrate
from scipy.linalg import cho_factor, cho_solve

from . import corr
from .design import Family, GroupModel, GroupedDesign
from .errors import DomainError, NumericError

__all__ = [
    "kld_gaussian",
    "DistanceFunction",
    "solve_lambda",
    "PCPrior",
    "balanced_density",
    "density_grid",
    "PriorGrid",
    "normalization_mass",
    "icc_to_param",
]

#: tolerance on the distance residual when inverting d
_INVERT_TOL = 1e-12


def kld_gaussian(C: NDArray, C0: NDArray) -> float:
    """Kullback-Leibler divergence KLD(N(0, C) || N(0, C0)).

    Both matrices must be symmetric positive definite.  This is the slow,
    direct evaluation used to validate the closed-form distances.
    """
    C = np.asarray(C, dtype=float)
    C0 = np.asarray(C0, dtype=float)
    M = C.shape[0]
    if C.shape != (M, M) or C0.shape != (M, M):
        raise ValueError("covariance matrices must be square and same size")
    try:
        f0 = cho_factor(C0)
        trace = np.trace(cho_solve(f0, C))
        _, logdet0 = np.linalg.slogdet(C0)
        fC = cho_factor(C)  # existence check doubles as PD validation
        logdetC = 2.0 * np.log(np.diag(fC[0])).sum()
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"covariance factorization failed: {exc}") from exc
    return 0.5 * (trace - M - (logdetC - logdet0))


def icc_to_param(model: GroupModel, icc: float) -> float:
    """Map an intraclass-correlation statement to the family's parameter.

    Identity for exchangeable/AR1.  For OU the correlation one distance
    unit apart is exp(-phi), so an ICC of ``v`` corresponds to
    ``phi = -log v``.
    """
    v = float(icc)
    if not 0.0 < v < 1.0:
        raise DomainError("the correlation statement must lie in (0, 1)")
    if model.family is Family.OU:
        return -np.log(v)
    return v


class DistanceFunction:
    """Distance to the independence base model for one (model, design) pair.

    Callable on the parameter scale; also evaluable and invertible on the
    internal unbounded scale, which is what every routine that walks into
    the tails uses.  The distance is strictly increasing in rho for the
    exchangeable/AR1 families and strictly decreasing in phi for OU.
    """

    def __init__(self, model: GroupModel, design: GroupedDesign):
        model.check_design(design)
        self.model = model
        self.design = design
        #: True when d grows with the internal coordinate (rho families)
        self.increasing = model.family is not Family.OU
        if model.family is Family.EXCHANGEABLE:
            self._base_slope = np.sqrt(
                sum(m * (m - 1) / 2.0 for m in design.group_sizes))
        elif model.family is Family.AR1:
            self._base_slope = np.sqrt(design.total_size - design.n_groups)
        else:
            self._base_slope = None
        if self.increasing:
            self._internal_lo, self._internal_hi = -745.0, corr.RHO_INTERNAL_MAX
        else:
            self._internal_lo, self._internal_hi = corr.PHI_INTERNAL_MIN, 700.0

    # -- parameter scale -------------------------------------------------

    def __call__(self, param):
        ld = corr.log_det(self.model, self.design, param)
        return np.sqrt(-np.asarray(ld)) if np.ndim(param) else float(np.sqrt(-ld))

    def derivative(self, param):
        """d d / d param.  At the rho = 0 base the analytic limit is returned."""
        p = np.asarray(param, dtype=float)
        d = np.sqrt(-np.asarray(corr.log_det(self.model, self.design, p)))
        grad = np.asarray(corr.dlogdet_dparam(self.model, self.design, p))
        at_base = d == 0.0
        if np.any(at_base):
            if self._base_slope is None:
                raise DomainError("the OU distance has no finite base-point slope")
            out = np.where(at_base, self._base_slope,
                           -grad / np.where(at_base, 1.0, 2.0 * d))
        else:
            out = -grad / (2.0 * d)
        return float(out) if np.ndim(param) == 0 else out

    # -- internal scale --------------------------------------------------

    def value_internal(self, t):
        ld = corr.log_det_from_internal(self.model, self.design, t)
        out = np.sqrt(-np.asarray(ld))
        return float(out) if np.ndim(t) == 0 else out

    def log_abs_derivative_internal(self, t):
        """log |d d / d t|, returning -inf at the base where d' vanishes."""
        d = np.asarray(self.value_internal(t))
        g = np.asarray(corr.dlogdet_dinternal(self.model, self.design, t))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(np.abs(g)) - np.log(2.0) - np.log(d)
        out = np.where(d == 0.0, -np.inf, out)
        return float(out) if np.ndim(t) == 0 else out

    def invert_internal(self, target):
        """Internal coordinates where the distance equals ``target``.

        Vectorized bisection; monotonicity of d makes the bracket trivial.
        Iterates until the distance residual drops below 1e-12 (or the
        bracket reaches floating-point resolution).  Targets beyond what
        the parameter can resolve in double precision clamp to the
        representable extreme.
        """
        tgt = np.atleast_1d(np.asarray(target, dtype=float))
        if np.any(tgt <= 0) or np.any(~np.isfinite(tgt)):
            raise DomainError("target distance must be positive and finite")
        sign = 1.0 if self.increasing else -1.0
        lo = np.full(tgt.shape, self._internal_lo)
        hi = np.full(tgt.shape, self._internal_hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            f_mid = sign * (self.value_internal(mid) - tgt)
            below = f_mid < 0
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.max(np.abs(f_mid)) <= _INVERT_TOL:
                break
            if np.max(hi - lo) < 1e-14 * np.maximum(1.0, np.abs(mid)).max():
                break
        out = 0.5 * (lo + hi)
        return float(out[0]) if np.ndim(target) == 0 else out

    def invert(self, target):
        """Parameter value(s) where the distance equals ``target``."""
        t = self.invert_internal(target)
        return corr.internal_to_param(self.model, t)


def solve_lambda(u: float, a: float, distance: DistanceFunction) -> float:
    """Rate lambda such that the prior puts mass ``a`` below distance d(u).

    For rho-parameterized families this realizes P(rho < u) = a; for OU it
    realizes P(phi > u) = a, since the distance decreases in phi.
    """
    if not 0.0 < a < 1.0:
        raise DomainError("the tail probability must lie strictly in (0, 1)")
    d_u = distance(u)
    if d_u == 0.0:
        raise DomainError(
            "degenerate scaling: the anchor point sits at the base model")
    if not np.isfinite(d_u):
        raise DomainError(
            "degenerate scaling: the anchor point has infinite distance")
    return -np.log1p(-a) / d_u


@dataclass(frozen=True)
class PCPrior:
    """Exponential prior on the distance to independence, rate ``lam``.

    Immutable; scaling a prior differently means building a new one.
    """

    lam: float
    distance: DistanceFunction

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise DomainError("lambda must be positive and finite")

    @classmethod
    def from_quantile(cls, model: GroupModel, design: GroupedDesign,
                      u: float, a: float) -> "PCPrior":
        """Build the prior from the tail statement P(d < d(u)) = a."""
        dist = DistanceFunction(model, design)
        return cls(lam=solve_lambda(u, a, dist), distance=dist)

    @property
    def model(self) -> GroupModel:
        return self.distance.model

    @property
    def design(self) -> GroupedDesign:
        return self.distance.design

    # -- parameter scale -------------------------------------------------

    def density(self, param):
        """Prior density on the parameter scale.

        At the rho = 0 base the finite limit lambda * d'(0) is returned.
        The density is unbounded near the degenerate boundary, which is
        integrable; boundary values themselves raise.
        """
        d = np.asarray(self.distance(param))
        if np.any(~np.isfinite(d)):
            raise DomainError("density requested at the degenerate boundary")
        slope = np.asarray(self.distance.derivative(param))
        out = self.lam * np.exp(-self.lam * d) * np.abs(slope)
        return float(out) if np.ndim(param) == 0 else out

    def log_density(self, param):
        d = np.asarray(self.distance(param))
        if np.any(~np.isfinite(d)):
            raise DomainError("density requested at the degenerate boundary")
        slope = np.asarray(self.distance.derivative(param))
        with np.errstate(divide="ignore"):
            out = np.log(self.lam) - self.lam * d + np.log(np.abs(slope))
        return float(out) if np.ndim(param) == 0 else out

    def cdf(self, param):
        """Distance-scale CDF, 1 - exp(-lambda d(param)).

        Equals P(rho < param) for the rho families and P(phi > param) for
        OU.  Continuous extension at the boundaries gives 0 at the base
        and 1 at the degenerate end.
        """
        d = np.asarray(self.distance(param))
        out = -np.expm1(-self.lam * d)
        return float(out) if np.ndim(param) == 0 else out

    def quantile(self, p):
        """Inverse of `cdf`; scalar or array ``p`` strictly inside (0, 1)."""
        q = np.asarray(p, dtype=float)
        if np.any(q <= 0) or np.any(q >= 1):
            raise DomainError("quantile levels must lie strictly in (0, 1)")
        target = -np.log1p(-q) / self.lam
        return self.distance.invert(target)

    def sample(self, count: int, seed: int):
        """Draw ``count`` parameter values by inverting exponential distances."""
        if seed is None:
            raise DomainError("a seed is required; sampling is deterministic")
        rng = np.random.default_rng(seed)
        e = rng.exponential(scale=1.0 / self.lam, size=int(count))
        t = self.distance.invert_internal(e)
        return corr.internal_to_param(self.model, t)

    # -- internal scale (used by quadrature) ------------------------------

    def log_density_internal(self, t):
        """Log density of the prior pushed to the internal coordinate."""
        d = np.asarray(self.distance.value_internal(t))
        out = (np.log(self.lam) - self.lam * d
               + np.asarray(self.distance.log_abs_derivative_internal(t)))
        return float(out) if np.ndim(t) == 0 else out


# ----------------------------------------------------------------------
# closed forms for balanced designs
# ----------------------------------------------------------------------

def balanced_density(family: Family | str, n_groups: int, group_size: int,
                     lam: float, param):
    """Analytic prior density for ``n`` equal groups of size ``m``.

    With lam' = lam sqrt(n) and the per-group determinant written out,
    the density for a single group raised to the design is

        exchangeable: (m-1)/2 (1/(1-rho) - 1/(1+(m-1)rho))
        AR1:          rho (m-1) / (1 - rho^2)
        OU:           (m-1) exp(-2 phi) / (1 - exp(-2 phi))

    each multiplied by lam' exp(-lam' s) / s at s = sqrt(-log|R|).
    Kept separate from `PCPrior.density` so the two can cross-check.
    """
    from .design import parse_family

    fam = parse_family(family)
    m = int(group_size)
    if m < 2:
        raise DomainError("closed forms need group size of at least 2")
    p = np.asarray(param, dtype=float)
    lam_n = lam * np.sqrt(n_groups)
    if fam is Family.EXCHANGEABLE:
        neg_logdet = -(np.log1p((m - 1) * p) + (m - 1) * np.log1p(-p))
        factor = 0.5 * (m - 1) * (1.0 / (1.0 - p) - 1.0 / (1.0 + (m - 1) * p))
    elif fam is Family.AR1:
        neg_logdet = -(m - 1) * (np.log1p(-p) + np.log1p(p))
        factor = p * (m - 1) / ((1.0 - p) * (1.0 + p))
    else:
        neg_logdet = -(m - 1) * corr._log1mexp(2.0 * p)
        # exp(-2 phi) / (1 - exp(-2 phi)) = 1 / expm1(2 phi)
        factor = (m - 1) / np.expm1(2.0 * p)
    s = np.sqrt(neg_logdet)
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = factor * lam_n * np.exp(-lam_n * s) / s
    # the exchangeable/AR1 base point has a finite limiting density
    if fam is not Family.OU:
        slope = {Family.EXCHANGEABLE: np.sqrt(n_groups * m * (m - 1) / 2.0),
                 Family.AR1: np.sqrt(n_groups * (m - 1))}[fam]
        dens = np.where(p == 0.0, lam * slope, dens)
    return float(dens) if np.ndim(param) == 0 else dens


# ----------------------------------------------------------------------
# tabulation and normalization
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class PriorGrid:
    """Tabulated prior: parameter, distance, density and CDF columns."""

    param: NDArray
    distance: NDArray
    density: NDArray
    cdf: NDArray

    def __len__(self):
        return self.param.size


def density_grid(prior: PCPrior, grid_size: int,
                 tail_prob: float = 1e-4) -> PriorGrid:
    """Tabulate the prior on a monotone parameter grid.

    The grid is uniform on the internal scale between the ``tail_prob``
    and ``1 - tail_prob`` distance quantiles, clipped to coordinates
    whose parameter value is still strictly inside the domain (the prior
    tail can outrun floating point well before it runs out of mass).
    """
    if grid_size < 2:
        raise DomainError("a grid needs at least two points")
    lam = prior.lam
    t_ends = prior.distance.invert_internal(
        np.array([-np.log1p(-tail_prob), -np.log(tail_prob)]) / lam)
    t_lo, t_hi = min(t_ends), max(t_ends)
    if prior.model.family is not Family.OU:
        # keep consecutive rows at least one double apart near rho = 1:
        # the logistic map moves by about step * exp(-t) per node there
        t_hi = min(t_hi, corr.RHO_INTERNAL_MAX)
        ulp = np.finfo(float).eps / 2
        for _ in range(4):
            step = (t_hi - t_lo) / (int(grid_size) - 1)
            cap = np.log(step / ulp)
            if t_hi <= cap:
                break
            t_hi = cap
    else:
        t_lo = max(t_lo, corr.PHI_INTERNAL_MIN)
    t = np.linspace(t_lo, t_hi, int(grid_size))
    param = corr.internal_to_param(prior.model, t)
    dist = np.asarray(prior.distance(param))
    density = prior.density(param)
    cdf = -np.expm1(-lam * dist)
    return PriorGrid(param=param, distance=dist, density=density, cdf=cdf)


def normalization_mass(prior: PCPrior) -> float:
    """Total prior mass, integrating the transformed density.

    The bulk is integrated piecewise on the internal scale with adaptive
    quadrature; the mass beyond the outermost knots is added analytically
    from the exponential distance distribution evaluated exactly at those
    knots, which stays correct even where the knots were clamped to the
    floating-point range of the parameter.  A correctly implemented
    change of variables returns 1.
    """
    dist = prior.distance
    lam = prior.lam
    eps = 1e-9
    probs = np.array([eps, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0 - eps])
    knots = np.sort(dist.invert_internal(-np.log1p(-probs) / lam))
    d_first = dist.value_internal(knots[0])
    d_last = dist.value_internal(knots[-1])
    if dist.increasing:
        head = -np.expm1(-lam * d_first)   # P(T < first knot)
        tail = np.exp(-lam * d_last)       # P(T > last knot)
    else:
        head = np.exp(-lam * d_first)
        tail = -np.expm1(-lam * d_last)
    total = head + tail
    for a, b in zip(knots[:-1], knots[1:]):
        val, _ = integrate.quad(
            lambda t: np.exp(prior.log_density_internal(t)), a, b,
            epsabs=1e-12, epsrel=1e-10, limit=200)
        total += val
    return total
