"""Scoring detected SNPs against the simulated truth.

A detection does not need to be the causal SNP itself; hitting a marker
in strong LD with it is still a find.  Both the grouping of detections
and the matching against causal SNPs therefore run on a single
correlation threshold C: detections whose pairwise |r| exceeds C merge
into clusters, and a detection counts toward a causal SNP when their
|r| exceeds C.  Using one threshold for both keeps power and false
positive counts comparable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UndefinedStatisticError
from .genotype import GenotypeMatrix
from .simulate import Scenario

DEFAULT_CLUSTER_C = 0.3


@dataclass(frozen=True)
class ClusterSet:
    """Partition of detections into correlation clusters.

    Within every cluster each member pair satisfies |r| > threshold_c;
    the clusters list preserves map order.
    """

    clusters: tuple[tuple[int, ...], ...]
    threshold_c: float

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)


def c_cluster(
    matrix: GenotypeMatrix, detections: Sequence[int], threshold_c: float
) -> ClusterSet:
    """Greedy agglomeration of detections in map order.

    A cluster starts at the first unassigned detection; each subsequent
    detection joins the current cluster iff its |r| with every current
    member exceeds ``threshold_c``, otherwise it starts a new cluster.
    Undefined correlations (constant columns) never exceed the
    threshold.
    """
    if not 0.0 < threshold_c < 1.0:
        raise ValueError("threshold_c must be in (0, 1)")
    ordered = sorted(int(j) for j in detections)
    if not ordered:
        return ClusterSet(clusters=(), threshold_c=threshold_c)
    corr = matrix.correlation_block(ordered)
    clusters: list[list[int]] = [[0]]
    for i in range(1, len(ordered)):
        current = clusters[-1]
        with np.errstate(invalid="ignore"):
            joins = all(abs(corr[i, m]) > threshold_c for m in current)
        if joins:
            current.append(i)
        else:
            clusters.append([i])
    return ClusterSet(
        clusters=tuple(tuple(ordered[i] for i in members) for members in clusters),
        threshold_c=threshold_c,
    )


def match_true_positives(
    matrix: GenotypeMatrix,
    detections: Sequence[int],
    causal_snps: Sequence[int],
    threshold_c: float,
) -> tuple[int, list[int]]:
    """Split detections into causal hits and false positives.

    A detection hits a causal SNP iff their |r| exceeds ``threshold_c``;
    a detection hitting several causal SNPs is assigned to the one with
    the largest |r| (ties to the lower map index).  Each causal SNP with
    at least one assigned detection contributes exactly one true
    positive.

    Returns:
        (true_positive_count, false_positive_detections); the count
        never exceeds min(len(detections), len(causal_snps)).
    """
    ordered = sorted(int(j) for j in detections)
    causal = sorted(int(c) for c in causal_snps)
    if not ordered or not causal:
        return 0, ordered
    hit_causal: set[int] = set()
    false_positives: list[int] = []
    for j in ordered:
        best_c = None
        best_r = threshold_c
        # Ascending causal order means the first maximum wins ties, i.e.
        # the lower map index.
        for c in causal:
            try:
                r = abs(matrix.correlation(j, c)) if j != c else 1.0
            except UndefinedStatisticError:
                continue
            if r > best_r:
                best_c = c
                best_r = r
        if best_c is None:
            false_positives.append(j)
        else:
            hit_causal.add(best_c)
    return len(hit_causal), false_positives


@dataclass(frozen=True)
class EvalReport:
    """Per-replicate performance of a selection method."""

    replicate_id: int
    size: int
    true_positives: int
    fp_count: int
    power: float
    fdr: float
    misclassifications: int
    threshold_c: float
    cluster_fp: bool


def evaluate_replicate(
    matrix: GenotypeMatrix,
    detections: Sequence[int],
    scenario: Scenario,
    threshold_c: float = DEFAULT_CLUSTER_C,
    cluster_fp: bool = False,
) -> EvalReport:
    """Score one replicate's detections against its scenario.

    With ``cluster_fp`` false positives are counted as correlation
    clusters rather than raw markers, which is the fair bookkeeping for
    single-marker methods that flag whole LD blocks.  ``matrix`` must be
    the matrix the scenario's causal indices refer to, so correlations
    with removed causal SNPs stay computable.
    """
    detections = sorted(int(j) for j in detections)
    k_causal = len(scenario.causal_snps)
    tp, fp_detections = match_true_positives(
        matrix, detections, scenario.causal_snps, threshold_c
    )
    if cluster_fp:
        fp = c_cluster(matrix, fp_detections, threshold_c).n_clusters
    else:
        fp = len(fp_detections)
    power = tp / k_causal if k_causal > 0 else 0.0
    fdr = fp / (tp + fp) if (tp + fp) > 0 else 0.0
    return EvalReport(
        replicate_id=scenario.replicate_id,
        size=len(detections),
        true_positives=tp,
        fp_count=fp,
        power=power,
        fdr=fdr,
        misclassifications=fp + (k_causal - tp),
        threshold_c=threshold_c,
        cluster_fp=cluster_fp,
    )


@dataclass(frozen=True)
class EvalSummary:
    """Replicate means with standard errors for the headline fields."""

    n_replicates: int
    mean_size: float
    se_size: float
    mean_power: float
    se_power: float
    mean_fp: float
    se_fp: float
    mean_fdr: float
    se_fdr: float
    mean_mis: float
    se_mis: float


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    if len(values) < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / np.sqrt(len(values)))


def aggregate(reports: Sequence[EvalReport]) -> EvalSummary:
    """Average per-replicate reports.

    The FDR column is the mean of per-replicate ratios, not a ratio of
    sums, matching how replicated simulation studies are usually
    tabulated.
    """
    if not reports:
        raise ValueError("no reports to aggregate")
    size = np.array([r.size for r in reports], dtype=float)
    power = np.array([r.power for r in reports], dtype=float)
    fp = np.array([r.fp_count for r in reports], dtype=float)
    fdr = np.array([r.fdr for r in reports], dtype=float)
    mis = np.array([r.misclassifications for r in reports], dtype=float)
    m_size, s_size = _mean_se(size)
    m_power, s_power = _mean_se(power)
    m_fp, s_fp = _mean_se(fp)
    m_fdr, s_fdr = _mean_se(fdr)
    m_mis, s_mis = _mean_se(mis)
    return EvalSummary(
        n_replicates=len(reports),
        mean_size=m_size,
        se_size=s_size,
        mean_power=m_power,
        se_power=s_power,
        mean_fp=m_fp,
        se_fp=s_fp,
        mean_fdr=m_fdr,
        se_fdr=s_fdr,
        mean_mis=m_mis,
        se_mis=s_mis,
    )
