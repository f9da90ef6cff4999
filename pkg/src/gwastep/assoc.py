"""Single-marker association tests and SNP rankings.

Two rankings drive the stepwise search: a marginal ranking from the
Cochran-Armitage trend test, and a conditional ranking from score tests
against an already fitted model.  The trend test doubles as the
single-marker baseline method when combined with Benjamini-Hochberg.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import chi2

from .errors import UndefinedStatisticError
from .firth import DesignSpec, FitResult, score_statistics
from .genotype import GenotypeMatrix

TREND_SCORES = np.array([0.0, 1.0, 2.0])


@dataclass(frozen=True)
class TrendResult:
    snp_index: int
    statistic: float
    p_value: float


@dataclass(frozen=True)
class Ranking:
    """SNP indices ordered best-first with their ranking scores.

    ``source`` records which statistic produced the order ("trend" or
    "score").  Ties in the statistic are broken by ascending map index,
    so rankings are deterministic.
    """

    snp_indices: np.ndarray
    scores: np.ndarray
    source: str

    def top(self, m: int) -> np.ndarray:
        return self.snp_indices[:m]


def trend_statistic_from_counts(
    genotype_totals: Sequence[float],
    case_counts: Sequence[float],
    scores: Optional[Sequence[float]] = None,
) -> float:
    """Cochran-Armitage trend statistic from a 2 x 3 contingency table.

    Args:
        genotype_totals: Individuals per genotype category, cases plus
            controls.
        case_counts: Cases per genotype category.
        scores: Dose scores per category; default (0, 1, 2).

    The statistic is invariant under affine transformations of the
    scores.

    Raises:
        UndefinedStatisticError: degenerate table (all one genotype, or
            no cases, or no controls).
    """
    t = TREND_SCORES if scores is None else np.asarray(scores, dtype=np.float64)
    n_g = np.asarray(genotype_totals, dtype=np.float64)
    r_g = np.asarray(case_counts, dtype=np.float64)
    total = n_g.sum()
    cases = r_g.sum()
    score_sum = t @ n_g
    numer = total * (t @ r_g) - cases * score_sum
    denom = cases * (total - cases) * (total * (t * t) @ n_g - score_sum**2)
    if denom <= 0.0:
        raise UndefinedStatisticError("trend statistic undefined for this table")
    return float(total * numer**2 / denom)


def _contingency_tables(matrix: GenotypeMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-SNP genotype totals and case counts, missing values excluded."""
    y = matrix.phenotype
    if y is None:
        raise UndefinedStatisticError("trend test needs a phenotype")
    known = y >= 0
    case_mask = y == 1
    totals = matrix.genotype_counts(known)
    cases = matrix.genotype_counts(case_mask)
    return totals.astype(np.float64), cases.astype(np.float64)


def trend_statistics(matrix: GenotypeMatrix) -> np.ndarray:
    """Vectorized trend statistic for every SNP; NaN where undefined."""
    totals, cases = _contingency_tables(matrix)
    t = TREND_SCORES
    n = totals.sum(axis=1)
    r = cases.sum(axis=1)
    score_sum = totals @ t
    numer = n * (cases @ t) - r * score_sum
    denom = r * (n - r) * (n * (totals @ (t * t)) - score_sum**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        stats = n * numer**2 / denom
    return np.where(denom > 0.0, stats, np.nan)


def cochran_armitage(matrix: GenotypeMatrix, snp_index: int) -> TrendResult:
    """Trend test for one SNP against the case-control phenotype.

    Individuals with a missing genotype or phenotype are excluded from
    the table.  The p-value is the upper chi-square(1) tail.
    """
    y = matrix.phenotype
    if y is None:
        raise UndefinedStatisticError("trend test needs a phenotype")
    g = matrix.raw_column(snp_index)
    keep = (g >= 0) & (y >= 0)
    g, yk = g[keep], y[keep]
    totals = [(g == v).sum() for v in range(3)]
    cases = [((g == v) & (yk == 1)).sum() for v in range(3)]
    stat = trend_statistic_from_counts(totals, cases)
    return TrendResult(
        snp_index=snp_index,
        statistic=stat,
        p_value=float(chi2.sf(stat, df=1)),
    )


def trend_pvalues(matrix: GenotypeMatrix) -> np.ndarray:
    """Upper-tail p-values for every SNP; NaN where the test is undefined."""
    stats = trend_statistics(matrix)
    with np.errstate(invalid="ignore"):
        return np.where(np.isnan(stats), np.nan, chi2.sf(stats, df=1))


def _build_ranking(stats: np.ndarray, source: str) -> Ranking:
    defined = np.isfinite(stats)
    idx = np.flatnonzero(defined)
    # Descending statistic; equal values fall back to ascending map index.
    order = np.lexsort((idx, -stats[idx]))
    ordered = idx[order]
    return Ranking(
        snp_indices=ordered, scores=stats[ordered], source=source
    )


def rank_marginal(matrix: GenotypeMatrix) -> Ranking:
    """All SNPs ordered by decreasing marginal trend statistic.

    SNPs with an undefined statistic (monomorphic in the analysed
    individuals) are excluded.
    """
    return _build_ranking(trend_statistics(matrix), "trend")


def rank_conditional(
    matrix: GenotypeMatrix, fitted: FitResult, design: DesignSpec
) -> Ranking:
    """SNPs outside ``design`` ordered by decreasing score statistic.

    Statistics are computed against the fitted model, so the order
    reflects what each SNP adds on top of the current model rather than
    its marginal signal.
    """
    stats = score_statistics(matrix, fitted, design)
    return _build_ranking(stats, "score")


def bh_reject(p_values: np.ndarray, alpha: float) -> np.ndarray:
    """Benjamini-Hochberg step-up at level ``alpha``.

    Returns a boolean mask over the inputs.  With sorted p-values the
    rule rejects the i* smallest, i* = max{i : p_(i) <= i * alpha / m};
    the comparison is inclusive, so a single p-value equal to alpha is
    rejected.  NaN entries are never rejected and do not count toward m.
    """
    p_values = np.asarray(p_values, dtype=np.float64)
    defined = np.isfinite(p_values)
    m = int(defined.sum())
    reject = np.zeros(p_values.shape, dtype=bool)
    if m == 0:
        return reject
    idx = np.flatnonzero(defined)
    order = np.argsort(p_values[idx], kind="stable")
    sorted_p = p_values[idx][order]
    thresholds = alpha * np.arange(1, m + 1) / m
    passing = np.flatnonzero(sorted_p <= thresholds)
    if len(passing) == 0:
        return reject
    cutoff = passing[-1] + 1
    reject[idx[order[:cutoff]]] = True
    return reject


def single_marker_bh(matrix: GenotypeMatrix, alpha: float = 0.05) -> list[int]:
    """Indices of SNPs surviving BH on the trend-test p-values."""
    rejected = bh_reject(trend_pvalues(matrix), alpha)
    return [int(j) for j in np.flatnonzero(rejected)]
