"""Independent reference implementations used to generate expected values.

Everything here is deliberately written the slow, obvious way (dense
grids, explicit matrices, exhaustive enumeration) so that the package's
fast paths can be checked against it.  Nothing in the package imports
this module.
"""

import itertools

import mpmath
import numpy as np
from scipy.optimize import minimize_scalar

from gwastep.criteria import evaluate as criterion_evaluate
from gwastep.firth import fit_firth_raw, penalized_loglikelihood


def firth_grid_maximum(X, y, bounds, n_points=401):
    """Best penalized log-likelihood over a dense coefficient grid.

    ``bounds`` is a list of (lo, hi) per coefficient; the grid has
    ``n_points`` per axis.  Returns (best_loglik, best_theta).
    """
    axes = [np.linspace(lo, hi, n_points) for lo, hi in bounds]
    best = (-np.inf, None)
    if len(axes) == 1:
        for b0 in axes[0]:
            val = penalized_loglikelihood(X, y, np.array([b0]))
            if val > best[0]:
                best = (val, np.array([b0]))
        return best
    grid0, grid1 = np.meshgrid(axes[0], axes[1], indexing="ij")
    flat = np.stack([grid0.ravel(), grid1.ravel()], axis=1)
    # Vectorized two-column evaluation: loglik and 2x2 determinant.
    eta = X @ flat.T
    pi = 1.0 / (1.0 + np.exp(-eta))
    loglik = y @ eta - np.logaddexp(0.0, eta).sum(axis=0)
    w = pi * (1.0 - pi)
    x1 = X[:, 1]
    i11 = w.sum(axis=0)
    i12 = (w * x1[:, None]).sum(axis=0)
    i22 = (w * (x1**2)[:, None]).sum(axis=0)
    det = i11 * i22 - i12**2
    with np.errstate(invalid="ignore", divide="ignore"):
        pll = loglik + 0.5 * np.log(det)
    pll = np.where(det > 0, pll, -np.inf)
    k = int(np.argmax(pll))
    return float(pll[k]), flat[k]


def firth_1d_maximizer(X, y, lo=-30.0, hi=30.0):
    """High-accuracy 1-D maximizer of the penalized log-likelihood."""
    result = minimize_scalar(
        lambda b: -penalized_loglikelihood(X, y, np.array([b])),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(result.x)


def criterion_reference(kind, loglik, k, n, p, constant_c):
    """Criterion value at 50 decimal digits, returned as float."""
    with mpmath.workdps(50):
        log_unit = (
            mpmath.log(n) + 2 * mpmath.log(p) - mpmath.log(constant_c)
        )
        value = -2 * mpmath.mpf(loglik) + k * log_unit
        if kind == "mbic2":
            value -= 2 * mpmath.log(mpmath.factorial(k))
        return float(value)


def trend_statistic_reference(genotype_totals, case_counts):
    """Trend statistic straight from the closed-form definition."""
    t = np.array([0.0, 1.0, 2.0])
    n_g = np.asarray(genotype_totals, float)
    r_g = np.asarray(case_counts, float)
    N = n_g.sum()
    R = r_g.sum()
    num = N * (t @ r_g) - R * (t @ n_g)
    den = R * (N - R) * (N * ((t**2) @ n_g) - (t @ n_g) ** 2)
    return N * num**2 / den


def trend_permutation_pvalue(genotypes, phenotype, n_shuffles, seed):
    """Mid-p permutation p-value for the trend statistic on one SNP.

    Case labels are shuffled while the genotype column stays fixed;
    individuals with missing genotype or phenotype are excluded first.
    The statistic is discrete under permutation, so ties at the observed
    value get half weight; that makes the estimate comparable to a
    continuous chi-square tail probability.
    """
    keep = (genotypes >= 0) & (phenotype >= 0)
    g = genotypes[keep].astype(np.int64)
    y = phenotype[keep].astype(np.int64)
    totals = np.array([(g == v).sum() for v in range(3)], float)
    observed = trend_statistic_reference(
        totals, [( (g == v) & (y == 1) ).sum() for v in range(3)]
    )
    rng = np.random.default_rng(seed)
    indicator = np.stack([(g == v).astype(np.int64) for v in range(3)], axis=1)
    strict = 0
    ties = 0
    batch = 2000
    done = 0
    while done < n_shuffles:
        m = min(batch, n_shuffles - done)
        perms = np.stack([rng.permutation(y) for _ in range(m)])
        case_counts = perms @ indicator  # (m, 3)
        t = np.array([0.0, 1.0, 2.0])
        N = totals.sum()
        R = y.sum()
        num = N * (case_counts @ t) - R * (t @ totals)
        den = R * (N - R) * (N * ((t**2) @ totals) - (t @ totals) ** 2)
        stats = N * num**2 / den
        strict += int((stats > observed + 1e-9).sum())
        ties += int((np.abs(stats - observed) <= 1e-9).sum())
        done += m
    return (strict + 0.5 * ties) / n_shuffles


def score_statistic_reference(X, y, theta_hat, candidate_col):
    """Score statistic via the full Fisher matrix and a Schur complement."""
    eta = X @ theta_hat
    pi = 1.0 / (1.0 + np.exp(-eta))
    w = pi * (1.0 - pi)
    full = np.concatenate([X, candidate_col[:, None]], axis=1)
    info = (full * w[:, None]).T @ full
    k = X.shape[1]
    i_xx = info[:k, :k]
    i_xj = info[:k, k]
    i_jj = info[k, k]
    v = i_jj - i_xj @ np.linalg.solve(i_xx, i_xj)
    u = candidate_col @ (y - pi)
    return u**2 / v


def exhaustive_best_model(matrix, criterion, snp_count=None):
    """Enumerate every SNP subset with the package's own fitter.

    Returns (best_subset, best_value).  Intended for p around 12.
    """
    from gwastep.firth import build_design_matrix, DesignSpec, response_vector

    p = matrix.n_snps if snp_count is None else snp_count
    y = response_vector(matrix)
    n = matrix.n_individuals
    best = (None, np.inf)
    for k in range(p + 1):
        for subset in itertools.combinations(range(p), k):
            X = build_design_matrix(matrix, DesignSpec(snp_indices=subset))
            try:
                fit = fit_firth_raw(X, y)
            except Exception:
                continue
            if not fit.converged:
                continue
            value = criterion_evaluate(
                criterion, fit.penalized_loglik, k, n, matrix.n_snps
            )
            if value < best[1]:
                best = (subset, value)
    return best


def greedy_forward(matrix, criterion):
    """Classic best-first forward selection with the package's fitter.

    At each step every remaining SNP is tried and the single best
    strictly improving addition is kept; stops when nothing improves.
    """
    from gwastep.firth import build_design_matrix, DesignSpec, response_vector

    y = response_vector(matrix)
    n, p = matrix.n_individuals, matrix.n_snps
    model: list[int] = []
    X = build_design_matrix(matrix, DesignSpec())
    fit = fit_firth_raw(X, y)
    value = criterion_evaluate(criterion, fit.penalized_loglik, 0, n, p)
    while True:
        best = None
        for j in range(p):
            if j in model:
                continue
            X_try = np.concatenate(
                [X, matrix.genotype_column(j)[:, None]], axis=1
            )
            try:
                fit_try = fit_firth_raw(
                    X_try, y, initial=np.append(fit.coefficients, 0.0)
                )
            except Exception:
                continue
            if not fit_try.converged:
                continue
            val = criterion_evaluate(
                criterion, fit_try.penalized_loglik, len(model) + 1, n, p
            )
            if val < value and (best is None or val < best[0]):
                best = (val, j, X_try, fit_try)
        if best is None:
            return tuple(model), value
        value, j, X, fit = best
        model.append(j)


def pearson_reference(a, b):
    """Pearson correlation via the textbook formula."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    da = a - a.mean()
    db = b - b.mean()
    return (da @ db) / np.sqrt((da @ da) * (db @ db))


def hwe_chi2_reference(n_hom_a, n_het, n_hom_b):
    """1-df goodness-of-fit chi-square for Hardy-Weinberg proportions."""
    n = n_hom_a + n_het + n_hom_b
    q = (2 * n_hom_b + n_het) / (2.0 * n)
    expected = np.array(
        [n * (1 - q) ** 2, 2 * n * q * (1 - q), n * q**2]
    )
    observed = np.array([n_hom_a, n_het, n_hom_b], float)
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = (observed - expected) ** 2 / expected
    return float(np.where(expected > 0, terms, 0.0).sum())


def random_minor_coded_matrix(rng, n, p, missing_rate=0.1):
    """Random dense genotypes whose counted allele is the sample-minor one."""
    freqs = rng.uniform(0.05, 0.5, p)
    dense = rng.binomial(2, freqs, size=(n, p)).astype(np.int8)
    if missing_rate > 0:
        dense[rng.random((n, p)) < missing_rate] = -1
    for j in range(p):
        col = dense[:, j]
        observed = col >= 0
        if observed.any() and col[observed].mean() / 2.0 > 0.5:
            col[observed] = 2 - col[observed]
    return dense


def unpenalized_ml_loglik(X, y):
    """Maximum unpenalized log-likelihood via a generic optimizer."""
    from scipy.optimize import minimize

    def nll(theta):
        eta = X @ theta
        return -(y @ eta - np.logaddexp(0.0, eta).sum())

    def grad(theta):
        eta = X @ theta
        pi = 1.0 / (1.0 + np.exp(-eta))
        return -(X.T @ (y - pi))

    best = -np.inf
    for scale in (0.0, 0.1):
        start = np.full(X.shape[1], scale)
        result = minimize(nll, start, jac=grad, method="BFGS",
                          options={"gtol": 1e-10, "maxiter": 500})
        best = max(best, -result.fun)
    return best
