"""Evidence integration: likelihood paths, grids, summaries, Bayes factors."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate, linalg, stats

from grouppc import (
    DataError,
    Dataset,
    DistanceFunction,
    DomainError,
    Family,
    GridConfig,
    GroupModel,
    GroupedDesign,
    HyperPriors,
    PCPrior,
    SimConfig,
    balanced_design,
    bayes_factor,
    corr_matrix,
    evidence_category,
    gaussian_loglik,
    gumbel2_log_density,
    internal_to_param,
    log_marginal_likelihood,
    posterior_summaries,
    simulate_dataset,
    solve_psi,
)
from grouppc.inference import _mixture_gaussian_quantile

EXCH = GroupModel(Family.EXCHANGEABLE)
AR1 = GroupModel(Family.AR1)
OU = GroupModel(Family.OU)


def reference_dataset():
    """Unbalanced two-group dataset used for the frozen references below."""
    design = GroupedDesign(group_sizes=(7, 6), positions=(
        tuple(np.cumsum(np.random.default_rng(3).uniform(0.5, 1.5, 7)).tolist()),
        tuple(np.cumsum(np.random.default_rng(4).uniform(0.5, 1.5, 6)).tolist()),
    ))
    cfg = SimConfig(design=design, model=EXCH, param=0.6,
                    beta=(0.5, 1.0, -0.8), sigma2=1.5, seed=11)
    return simulate_dataset(cfg)


def toy_dataset():
    """Three observations in one group; small enough for 2-D quadrature."""
    y = np.random.default_rng(5).standard_normal(3) * 1.3 + 0.7
    return Dataset(y=y, X=np.ones((3, 1)), design=balanced_design(1, 3))


def toy_hyper(dataset):
    prior = PCPrior.from_quantile(EXCH, dataset.design, 0.5, 0.5)
    return HyperPriors(corr_prior=prior, psi=solve_psi(1 / 0.31, 0.01))


# ----------------------------------------------------------------------
# precision prior
# ----------------------------------------------------------------------

def test_gumbel2_normalizes_and_hits_tail_statement():
    u_sigma, alpha = 2.0, 0.01
    psi = solve_psi(u_sigma, alpha)
    mass, _ = integrate.quad(
        lambda t: np.exp(gumbel2_log_density(t, psi)), 0, np.inf, limit=200)
    assert_allclose(mass, 1.0, atol=1e-9)
    # P(sigma > U) = P(tau < U^-2); the analytic CDF is exp(-psi / sqrt(t))
    tail, _ = integrate.quad(
        lambda t: np.exp(gumbel2_log_density(t, psi)), 0, u_sigma ** -2)
    assert_allclose(tail, alpha, rtol=1e-8)
    assert_allclose(np.exp(-psi * u_sigma), alpha, rtol=1e-13)


def test_solve_psi_validates():
    with pytest.raises(DomainError):
        solve_psi(0.0, 0.01)
    with pytest.raises(DomainError):
        solve_psi(1.0, 0.0)


# ----------------------------------------------------------------------
# Gaussian log likelihood
# ----------------------------------------------------------------------

def test_loglik_matches_high_precision_references():
    # frozen values from a 50-digit Cholesky of the full covariance
    ds = reference_dataset()
    cases = [(EXCH, 0.95, -507.65354561761956),
             (AR1, 0.7, -115.5459734799779),
             (OU, 0.9, -113.54231569720339)]
    for model, param, ref in cases:
        got = gaussian_loglik(ds, model, param, 17.0, beta_prec=1e-6)
        assert_allclose(got, ref, rtol=2e-12)


def test_loglik_blockwise_equals_dense():
    # the two routes share nothing past the correlation closed forms;
    # compare where the dense route is well conditioned
    rng = np.random.default_rng(12)
    for _ in range(12):
        n = int(rng.integers(1, 5))
        sizes = tuple(int(v) for v in rng.integers(1, 13, n))
        pos = tuple(tuple(np.cumsum(rng.uniform(0.4, 1.6, m)).tolist())
                    for m in sizes)
        d = GroupedDesign(group_sizes=sizes, positions=pos)
        y = rng.standard_normal(d.total_size) * 2.1
        X = np.column_stack([np.ones(d.total_size),
                             rng.standard_normal(d.total_size)])
        ds = Dataset(y=y, X=X, design=d, column_names=("intercept", "x1"))
        for model in (EXCH, AR1, OU):
            param = 1.1 if model.family is Family.OU else 0.45
            tau = float(np.exp(rng.uniform(-2, 3)))
            a = gaussian_loglik(ds, model, param, tau, beta_prec=1e-3,
                                method="blockwise")
            b = gaussian_loglik(ds, model, param, tau, beta_prec=1e-3,
                                method="dense")
            assert_allclose(a, b, rtol=1e-8)


def test_loglik_matches_scipy_multivariate_normal():
    ds = reference_dataset()
    tau, beta_prec = 2.5, 1e-3
    blocks = [corr_matrix(AR1, ds.design, j, 0.6)
              for j in range(ds.design.n_groups)]
    cov = linalg.block_diag(*blocks) / tau + (ds.X @ ds.X.T) / beta_prec
    want = stats.multivariate_normal(mean=np.zeros(ds.y.size),
                                     cov=cov).logpdf(ds.y)
    got = gaussian_loglik(ds, AR1, 0.6, tau, beta_prec=beta_prec)
    assert_allclose(got, want, rtol=1e-9)


# ----------------------------------------------------------------------
# marginal likelihood
# ----------------------------------------------------------------------

def test_log_mlik_matches_adaptive_quadrature_reference():
    # frozen scipy.integrate.dblquad value of the exact evidence integral
    ds = toy_dataset()
    hyper = toy_hyper(ds)
    fit = log_marginal_likelihood(
        ds, EXCH, hyper,
        grid=GridConfig(n_tau=801, n_corr=801,
                        tau_bounds=(-36, 36), corr_bounds=(-36, 36)))
    assert_allclose(fit.log_mlik, -11.755859342888154, atol=1e-9)


def test_log_mlik_grid_refinement_converges():
    ds = toy_dataset()
    hyper = toy_hyper(ds)
    coarse = log_marginal_likelihood(ds, EXCH, hyper)
    fine = log_marginal_likelihood(
        ds, EXCH, hyper,
        grid=GridConfig(n_tau=401, n_corr=401,
                        tau_bounds=(-25, 25), corr_bounds=(-25, 25)))
    assert_allclose(coarse.log_mlik, fine.log_mlik, atol=5e-5)
    simpson = log_marginal_likelihood(
        ds, EXCH, hyper,
        grid=GridConfig(n_tau=401, n_corr=401, tau_bounds=(-25, 25),
                        corr_bounds=(-25, 25), rule="simpson"))
    assert_allclose(simpson.log_mlik, fine.log_mlik, atol=1e-8)


def test_ou_equals_ar1_under_shared_distance_prior():
    # unit-spaced OU is a reparameterization of AR1; with the same rate
    # on the shared distance scale the evidence must agree
    design = balanced_design(10, 30)
    sim = simulate_dataset(SimConfig(design=design, model=AR1, param=0.5,
                                     beta=(0.5, 1.0), sigma2=1.0, seed=1))
    ou = GroupModel(Family.OU, assume_unit_spacing=True)
    lam = PCPrior.from_quantile(AR1, design, 0.5, 0.5).lam
    psi = solve_psi(1 / 0.31, 0.01)
    fit_a = log_marginal_likelihood(
        sim, AR1, HyperPriors(
            corr_prior=PCPrior(lam=lam, distance=DistanceFunction(AR1, design)),
            psi=psi))
    fit_b = log_marginal_likelihood(
        sim, ou, HyperPriors(
            corr_prior=PCPrior(lam=lam, distance=DistanceFunction(ou, design)),
            psi=psi))
    assert_allclose(fit_a.log_mlik, fit_b.log_mlik, atol=1e-5)
    assert_allclose(fit_a.rho["mean"], fit_b.rho["mean"], atol=1e-4)


def test_fit_recovers_simulation_truth():
    design = balanced_design(12, 25)
    sim = simulate_dataset(SimConfig(design=design, model=EXCH, param=0.4,
                                     beta=(1.0, -2.0), sigma2=2.0, seed=8))
    prior = PCPrior.from_quantile(EXCH, design, 0.5, 0.5)
    fit = log_marginal_likelihood(
        sim, EXCH, HyperPriors(corr_prior=prior, psi=solve_psi(1 / 0.31, 0.01)))
    assert fit.rho["q025"] < 0.4 < fit.rho["q975"]
    assert fit.sigma2["q025"] < 2.0 < fit.sigma2["q975"]
    names = [b["name"] for b in fit.beta]
    assert names == ["intercept", "x1"]
    assert fit.beta[0]["q025"] < 1.0 < fit.beta[0]["q975"]
    assert fit.beta[1]["q025"] < -2.0 < fit.beta[1]["q975"]
    assert not fit.diagnostics["boundary_warning"]


def test_ou_reports_correlation_at_reference_gap():
    design = balanced_design(8, 12, unit_positions=True)
    sim = simulate_dataset(SimConfig(design=design, model=OU, param=0.7,
                                     beta=(0.0,), sigma2=1.0, seed=21))
    prior = PCPrior.from_quantile(OU, design, -np.log(0.5), 0.5)
    fit = log_marginal_likelihood(
        sim, OU, HyperPriors(corr_prior=prior, psi=solve_psi(1 / 0.31, 0.01)))
    # the reported correlation is exp(-phi * gap) at gap 1; truth 0.4966
    assert 0.2 < fit.rho["mean"] < 0.75
    assert 0 < fit.rho["q025"] < fit.rho["q975"] < 1


def test_boundary_mass_warning_on_tight_bounds():
    design = balanced_design(10, 10)
    sim = simulate_dataset(SimConfig(design=design, model=EXCH, param=0.9,
                                     beta=(0.0,), sigma2=1.0, seed=2))
    prior = PCPrior.from_quantile(EXCH, design, 0.5, 0.5)
    hyper = HyperPriors(corr_prior=prior, psi=solve_psi(1 / 0.31, 0.01))
    grid = GridConfig(n_tau=61, n_corr=61, corr_bounds=(-4.0, 1.0))
    fit = log_marginal_likelihood(sim, EXCH, hyper, grid=grid)
    assert fit.diagnostics["boundary_warning"]
    assert fit.diagnostics["boundary_mass"] >= 0.01
    wide = log_marginal_likelihood(sim, EXCH, hyper)
    assert not wide.diagnostics["boundary_warning"]


def test_log_mlik_validations():
    ds = toy_dataset()
    hyper = toy_hyper(ds)
    with pytest.raises(DomainError):
        log_marginal_likelihood(ds, AR1, hyper)  # prior built for exch
    bad = Dataset(y=ds.y, X=np.ones((3, 2)), design=ds.design,
                  column_names=("intercept", "ones_again"))
    with pytest.raises(DataError):
        log_marginal_likelihood(bad, EXCH, toy_hyper(bad))


def test_grid_config_validations():
    with pytest.raises(DomainError):
        GridConfig(n_tau=1)
    with pytest.raises(DomainError):
        GridConfig(rule="midpoint")
    with pytest.raises(DomainError):
        GridConfig(n_tau=200, rule="simpson")
    w = GridConfig(n_tau=5, n_corr=5, tau_bounds=(0.0, 4.0)).weights("tau")
    assert_allclose(w.sum(), 4.0)
    w = GridConfig(n_tau=5, n_corr=5, tau_bounds=(0.0, 4.0),
                   rule="simpson").weights("tau")
    assert_allclose(w.sum(), 4.0)


# ----------------------------------------------------------------------
# posterior summaries
# ----------------------------------------------------------------------

def test_posterior_summaries_point_mass():
    out = posterior_summaries(np.array([2.0, 5.0]), np.array([0.0, 1.0]))
    assert_allclose(out, [5.0, 5.0, 5.0])


def test_posterior_summaries_two_points():
    mean, lo, hi = posterior_summaries(np.array([0.0, 1.0]),
                                       np.array([0.5, 0.5]))
    assert_allclose(mean, 0.5)
    assert lo == 0.0 and hi == 1.0


def test_posterior_summaries_match_exponential_quantiles():
    # dense weighted grid approximating Exp(1)
    x = np.linspace(0, 30, 20001)
    w = np.exp(-x)
    mean, q025, q50, q975 = posterior_summaries(x, w,
                                                probs=(0.025, 0.5, 0.975))
    assert_allclose(mean, 1.0, atol=2e-3)
    assert_allclose(q50, np.log(2), atol=2e-3)
    assert_allclose(q025, -np.log(0.975), atol=2e-3)
    assert_allclose(q975, -np.log(0.025), atol=2e-3)


def test_mixture_quantile_single_gaussian():
    q = _mixture_gaussian_quantile(np.array([1.5]), np.array([2.0]),
                                   np.array([1.0]), 0.975)
    assert_allclose(q, stats.norm(1.5, 2.0).ppf(0.975), atol=1e-9)


def test_mixture_quantile_two_components():
    mu = np.array([-3.0, 3.0])
    sd = np.array([0.5, 0.5])
    w = np.array([0.5, 0.5])
    assert_allclose(_mixture_gaussian_quantile(mu, sd, w, 0.5), 0.0,
                    atol=1e-9)
    lo = _mixture_gaussian_quantile(mu, sd, w, 0.025)
    assert_allclose(stats.norm(-3, 0.5).cdf(lo) * 0.5, 0.025, atol=1e-9)


# ----------------------------------------------------------------------
# Bayes factors
# ----------------------------------------------------------------------

def test_evidence_categories():
    assert evidence_category(0.5) == "not worth more than a bare mention"
    assert evidence_category(-0.5) == "not worth more than a bare mention"
    assert evidence_category(2.0) == "positive"
    assert evidence_category(4.0) == "strong"
    assert evidence_category(9.0) == "very strong"
    assert evidence_category(-9.0) == "very strong"


def test_bayes_factor_requires_same_data():
    design = balanced_design(5, 8)
    sim = simulate_dataset(SimConfig(design=design, model=EXCH, param=0.5,
                                     beta=(0.0,), sigma2=1.0, seed=5))
    other = simulate_dataset(SimConfig(design=design, model=EXCH, param=0.5,
                                       beta=(0.0,), sigma2=1.0, seed=6))
    psi = solve_psi(1 / 0.31, 0.01)

    def fit(ds, model):
        prior = PCPrior.from_quantile(
            model, design, 0.5, 0.5)
        grid = GridConfig(n_tau=101, n_corr=101)
        return log_marginal_likelihood(
            ds, model, HyperPriors(corr_prior=prior, psi=psi), grid=grid)

    fit_a, fit_b = fit(sim, EXCH), fit(sim, AR1)
    bf = bayes_factor(fit_a, fit_b)
    assert_allclose(bf.log_bf, fit_a.log_mlik - fit_b.log_mlik)
    assert bf.category == evidence_category(bf.log_bf)
    with pytest.raises(DataError):
        bayes_factor(fit_a, fit(other, EXCH))


def test_fingerprint_invariant_to_regrouping():
    # the same rows grouped by a different factor hash identically
    rng = np.random.default_rng(9)
    y = rng.standard_normal(12)
    X = np.column_stack([np.ones(12), rng.standard_normal(12)])
    d_a = GroupedDesign(group_sizes=(4, 4, 4))
    d_b = GroupedDesign(group_sizes=(6, 6))
    perm = rng.permutation(12)
    ds_a = Dataset(y=y, X=X, design=d_a, column_names=("intercept", "x1"))
    ds_b = Dataset(y=y[perm], X=X[perm], design=d_b,
                   column_names=("intercept", "x1"))
    assert ds_a.fingerprint() == ds_b.fingerprint()
    ds_c = Dataset(y=y + 1e-12, X=X, design=d_a,
                   column_names=("intercept", "x1"))
    assert ds_a.fingerprint() != ds_c.fingerprint()


def test_to_json_dict_has_exactly_documented_keys():
    ds = toy_dataset()
    fit = log_marginal_likelihood(
        ds, EXCH, toy_hyper(ds), grid=GridConfig(n_tau=51, n_corr=51))
    payload = fit.to_json_dict()
    assert tuple(payload) == ("log_mlik", "rho", "sigma2", "beta",
                              "diagnostics")
    assert set(payload["rho"]) == {"mean", "q025", "q975"}
    assert set(payload["sigma2"]) == {"mean", "q025", "q975"}
    assert all(set(b) == {"name", "mean", "q025", "q975"}
               for b in payload["beta"])
