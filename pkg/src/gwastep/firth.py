"""Firth-penalized logistic regression and score tests.

The penalized likelihood multiplies the binomial likelihood by the
square root of the Fisher information determinant.  Its maximizer stays
finite even under complete separation, which matters because stepwise
SNP search constantly fits models containing rare, nearly separating
markers.  Newton iterations use the modified score

    U*(theta) = X' (y - pi + h (1/2 - pi))

where h is the diagonal of the hat matrix of the weighted design, with
step-halving whenever a step fails to increase the penalized
log-likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import expit

from .errors import (
    DegenerateResponseError,
    RankDeficiencyError,
    UndefinedStatisticError,
)
from .genotype import GenotypeMatrix

DEFAULT_TOLERANCE = 1e-6
DEFAULT_MAX_ITER = 50
_MAX_HALVINGS = 25


@dataclass(frozen=True)
class DesignSpec:
    """Which columns enter a regression design.

    The design always contains an intercept; covariates, when present on
    the matrix and enabled here, come next; SNP columns follow in the
    listed order.  Coefficients in a fit are laid out the same way.
    """

    snp_indices: tuple[int, ...] = ()
    include_covariates: bool = True

    def __post_init__(self):
        if len(set(self.snp_indices)) != len(self.snp_indices):
            raise ValueError("duplicate SNP index in design")


@dataclass(frozen=True)
class FitResult:
    """Converged (or abandoned) state of one penalized fit.

    ``penalized_loglik == unpenalized_loglik + 0.5 * fisher_logdet``
    holds at the returned coefficients.
    """

    coefficients: np.ndarray
    penalized_loglik: float
    unpenalized_loglik: float
    fisher_logdet: float
    iterations: int
    converged: bool


def build_design_matrix(matrix: GenotypeMatrix, design: DesignSpec) -> np.ndarray:
    """Dense design matrix: intercept, covariates, mean-imputed SNP columns."""
    cols = [np.ones((matrix.n_individuals, 1))]
    if design.include_covariates and matrix.covariates is not None:
        cols.append(matrix.covariates)
    for j in design.snp_indices:
        cols.append(matrix.genotype_column(j)[:, None])
    return np.concatenate(cols, axis=1)


def response_vector(matrix: GenotypeMatrix) -> np.ndarray:
    """Validated 0/1 response as float64.

    Raises:
        DegenerateResponseError: phenotype absent, partially missing, or
            containing a single class.
    """
    y = matrix.phenotype
    if y is None:
        raise DegenerateResponseError("matrix has no phenotype")
    if (y < 0).any():
        raise DegenerateResponseError(
            "phenotype has missing values; restrict_to_phenotyped() first"
        )
    if y.min() == y.max():
        raise DegenerateResponseError("phenotype contains a single class")
    return y.astype(np.float64)


def intercept_only_estimate(n_total: int, n_cases: int) -> float:
    """Closed-form penalized estimate for an intercept-only model.

    The penalty adds half an observation to each response class, so the
    maximizer is log((s + 1/2) / (n - s + 1/2)).  Finite even when every
    individual is a case or a control.
    """
    if not 0 <= n_cases <= n_total or n_total <= 0:
        raise ValueError("need 0 <= n_cases <= n_total with n_total > 0")
    return math.log((n_cases + 0.5) / (n_total - n_cases + 0.5))


def loglikelihood(X: np.ndarray, y: np.ndarray, theta: np.ndarray) -> float:
    """Unpenalized binomial log-likelihood at ``theta``."""
    eta = X @ theta
    return float(y @ eta - np.logaddexp(0.0, eta).sum())


def fisher_logdet(X: np.ndarray, theta: np.ndarray) -> float:
    """log det X' W X at ``theta``; -inf if the matrix is not SPD."""
    eta = X @ theta
    pi = expit(eta)
    w = pi * (1.0 - pi)
    info = (X * w[:, None]).T @ X
    try:
        chol = np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        return -np.inf
    return 2.0 * float(np.log(np.diag(chol)).sum())


def penalized_loglikelihood(
    X: np.ndarray, y: np.ndarray, theta: np.ndarray
) -> float:
    """Firth-penalized log-likelihood at ``theta``; -inf when degenerate."""
    logdet = fisher_logdet(X, theta)
    if not np.isfinite(logdet):
        return -np.inf
    return loglikelihood(X, y, theta) + 0.5 * logdet


def _diagnose_rank(X: np.ndarray, design: DesignSpec, matrix) -> RankDeficiencyError:
    """Name the first design column linearly dependent on its predecessors."""
    names = ["intercept"]
    if design.include_covariates and matrix is not None and matrix.covariates is not None:
        names += ["covariate%d" % i for i in range(matrix.covariates.shape[1])]
    for j in design.snp_indices:
        if matrix is not None:
            names.append("snp %s" % matrix.snp_meta[j].snp_id)
        else:
            names.append("snp#%d" % j)
    rank = 0
    for col in range(X.shape[1]):
        new_rank = np.linalg.matrix_rank(X[:, : col + 1])
        if new_rank == rank:
            name = names[col] if col < len(names) else "column%d" % col
            return RankDeficiencyError(
                "design is rank deficient at %s" % name, column=col
            )
        rank = new_rank
    return RankDeficiencyError("design is rank deficient", column=None)


def fit_firth_raw(
    X: np.ndarray,
    y: np.ndarray,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
    initial: Optional[np.ndarray] = None,
) -> FitResult:
    """Newton solver on a raw design matrix.

    Convergence is declared when every component of the modified score
    is below ``tolerance`` in absolute value.  A warm ``initial`` vector
    typically saves most iterations when one column was added to or
    removed from a previously fitted design.
    """
    n, k = X.shape
    theta = np.zeros(k) if initial is None else np.asarray(initial, float).copy()
    pll = penalized_loglikelihood(X, y, theta)
    if not np.isfinite(pll) and initial is not None:
        # A stale warm start can sit in degenerate territory; restart cold.
        theta = np.zeros(k)
        pll = penalized_loglikelihood(X, y, theta)
    if not np.isfinite(pll):
        raise RankDeficiencyError("Fisher information is singular", column=None)

    iterations = 0
    converged = False
    for iterations in range(max_iter + 1):
        eta = X @ theta
        pi = expit(eta)
        w = pi * (1.0 - pi)
        info = (X * w[:, None]).T @ X
        try:
            chol = cho_factor(info, lower=True)
        except np.linalg.LinAlgError:
            raise RankDeficiencyError("Fisher information is singular", column=None)
        root_w = np.sqrt(w)
        half = solve_triangular(chol[0], (X * root_w[:, None]).T, lower=True)
        hat = (half**2).sum(axis=0)
        score = X.T @ (y - pi + hat * (0.5 - pi))
        if np.abs(score).max() <= tolerance:
            converged = True
            break
        if iterations == max_iter:
            break
        step = cho_solve(chol, score)
        new_theta = theta + step
        new_pll = penalized_loglikelihood(X, y, new_theta)
        halvings = 0
        # Near the optimum pll differences sink below float resolution;
        # without this slack the halving loop would erase the Newton step
        # and stall with the score still above a tight tolerance.
        slack = 1e-10 * (1.0 + abs(pll))
        while new_pll < pll - slack and halvings < _MAX_HALVINGS:
            step *= 0.5
            new_theta = theta + step
            new_pll = penalized_loglikelihood(X, y, new_theta)
            halvings += 1
        if not np.isfinite(new_pll):
            break  # no finite point reachable along this direction
        theta = new_theta
        pll = new_pll

    logdet = fisher_logdet(X, theta)
    ll = loglikelihood(X, y, theta)
    return FitResult(
        coefficients=theta,
        penalized_loglik=ll + 0.5 * logdet,
        unpenalized_loglik=ll,
        fisher_logdet=logdet,
        iterations=iterations,
        converged=converged,
    )


def fit_firth(
    matrix: GenotypeMatrix,
    design: DesignSpec,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
    initial: Optional[np.ndarray] = None,
) -> FitResult:
    """Fit the penalized logistic model for ``design``.

    Raises:
        DegenerateResponseError: unusable phenotype.
        RankDeficiencyError: linearly dependent design columns, with the
            offending column named.
    """
    y = response_vector(matrix)
    X = build_design_matrix(matrix, design)
    try:
        return fit_firth_raw(X, y, tolerance, max_iter, initial)
    except RankDeficiencyError:
        raise _diagnose_rank(X, design, matrix) from None


def null_fit(matrix: GenotypeMatrix) -> FitResult:
    """Fit of the SNP-free model (intercept plus covariates), cached."""
    cached = getattr(matrix, "_null_fit_cache", None)
    if cached is None:
        cached = fit_firth(matrix, DesignSpec())
        matrix._null_fit_cache = cached
    return cached


def null_model_loglik(matrix: GenotypeMatrix) -> float:
    """Penalized log-likelihood of the SNP-free model."""
    return null_fit(matrix).penalized_loglik


def score_test(
    matrix: GenotypeMatrix,
    fitted: FitResult,
    design: DesignSpec,
    candidate_snp: int,
) -> float:
    """Rao score statistic for adding one SNP to a fitted design.

    With pi-hat from the fitted model, U = x'(y - pi) and V the variance
    of U after projecting out the current design; the statistic is
    U^2 / V, approximately chi-square(1) under the null.

    Raises:
        UndefinedStatisticError: V at or below the numerical floor, which
            happens when the candidate is (nearly) collinear with the
            design or constant.
    """
    if candidate_snp in design.snp_indices:
        raise ValueError("candidate SNP %d is already in the design" % candidate_snp)
    stats = score_statistics(matrix, fitted, design, [candidate_snp])
    value = stats[0]
    if not np.isfinite(value):
        raise UndefinedStatisticError(
            "score statistic undefined for SNP %s"
            % matrix.snp_meta[candidate_snp].snp_id
        )
    return float(value)


def score_statistics(
    matrix: GenotypeMatrix,
    fitted: FitResult,
    design: DesignSpec,
    candidates: Optional[Sequence[int]] = None,
    batch: int = 1024,
) -> np.ndarray:
    """Vectorized score statistics for many candidate SNPs.

    Returns an array aligned with ``candidates`` (default: all SNPs);
    entries are NaN where the statistic is undefined or the candidate is
    already in the design.
    """
    y = response_vector(matrix)
    X = build_design_matrix(matrix, design)
    pi = expit(X @ fitted.coefficients)
    w = pi * (1.0 - pi)
    resid = y - pi
    info = (X * w[:, None]).T @ X
    chol = cho_factor(info, lower=True)

    if candidates is None:
        candidates = np.arange(matrix.n_snps)
    candidates = np.asarray(candidates, dtype=np.intp)
    out = np.empty(len(candidates))
    in_design = set(design.snp_indices)

    for start in range(0, len(candidates), batch):
        idx = candidates[start : start + batch]
        G = matrix.decode_batch(idx)
        WG = G * w[:, None]
        B = X.T @ WG
        solved = cho_solve(chol, B)
        raw_var = (G * WG).sum(axis=0)
        V = raw_var - (B * solved).sum(axis=0)
        U = resid @ G
        floor = 1e-10 * np.maximum(raw_var, 1.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            stats = np.where(V > floor, U**2 / V, np.nan)
        out[start : start + batch] = stats

    for i, j in enumerate(candidates):
        if int(j) in in_design:
            out[i] = np.nan
    return out
