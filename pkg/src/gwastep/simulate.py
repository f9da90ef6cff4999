"""Phenotype and genotype simulation for power and null studies.

All randomness flows through a counter-based Philox generator seeded
with ``SeedSequence((base_seed, replicate_id))``, so every replicate is
reproducible in isolation and results do not depend on execution order
or platform.

A scenario is a small, serializable description of how phenotypes were
generated: either a global null (fair coin labels) or a complex trait
with k causal SNPs whose effects follow an additive logistic model.
Causal indices always refer to the matrix the scenario was built on,
even after ``remove_causal`` has produced a reduced analysis matrix;
this keeps correlations with removed SNPs computable when scoring
detections.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit
from scipy.stats import norm

from .errors import InfeasibleScenarioError, ValidationError
from .genotype import GenotypeMatrix

GLOBAL_NULL = "global_null"
COMPLEX_TRAIT = "complex_trait"

PROXY_MIN_R = 0.5  # weakest proxy that justifies removing a causal SNP


@dataclass(frozen=True)
class Scenario:
    """Generative description of one simulated phenotype replicate."""

    kind: str
    seed: int
    replicate_id: int = 0
    k_causal: int = 0
    effect_low: float = 0.0
    effect_high: float = 0.0
    maf_min: float = 0.3
    rho_max: float = 0.1
    causal_snps: tuple[int, ...] = ()
    causal_ids: tuple[str, ...] = ()
    effect_sizes: tuple[float, ...] = ()
    intercept: float = 0.0
    removed_causal: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in (GLOBAL_NULL, COMPLEX_TRAIT):
            raise ValueError("unknown scenario kind %r" % self.kind)
        if len(self.causal_snps) != len(self.effect_sizes):
            raise ValueError("causal_snps and effect_sizes length mismatch")


def replicate_rng(seed: int, replicate_id: int = 0) -> np.random.Generator:
    """Philox generator for one (seed, replicate) pair."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence((int(seed), int(replicate_id))))
    )


def simulate_null(
    matrix: GenotypeMatrix, seed: int, replicate_id: int = 0
) -> np.ndarray:
    """Labels drawn i.i.d. Bernoulli(1/2), independent of the genotypes."""
    rng = replicate_rng(seed, replicate_id)
    return (rng.random(matrix.n_individuals) < 0.5).astype(np.int8)


def pick_causal(
    matrix: GenotypeMatrix,
    k: int,
    maf_min: float = 0.3,
    rho_max: float = 0.1,
    seed: int = 0,
    max_restarts: int = 50,
) -> tuple[int, ...]:
    """Choose k causal SNPs: common, mutually nearly uncorrelated, spread.

    Candidates need MAF > ``maf_min``; every selected pair must satisfy
    |r| < ``rho_max``; counts per chromosome differ by at most one.
    Selection is a seeded greedy pass per chromosome with restarts.

    Raises:
        InfeasibleScenarioError: with the binding constraint named, when
            no valid assignment is found.
    """
    if k <= 0:
        return ()
    chroms = [int(c) for c in matrix.chromosomes]
    quota = {c: k // len(chroms) for c in chroms}
    for c in chroms[: k % len(chroms)]:
        quota[c] += 1
    maf = np.array([m.minor_allele_freq for m in matrix.snp_meta])
    chrom_of = np.array([m.chromosome for m in matrix.snp_meta])
    eligible = {
        c: np.flatnonzero((chrom_of == c) & (maf > maf_min)) for c in chroms
    }
    for c in chroms:
        if len(eligible[c]) < quota[c]:
            raise InfeasibleScenarioError(
                "maf_min=%g leaves %d eligible SNPs on chromosome %d, need %d"
                % (maf_min, len(eligible[c]), c, quota[c])
            )

    rng = replicate_rng(seed, 0)
    for _ in range(max_restarts):
        selected: list[int] = []
        feasible = True
        for c in chroms:
            taken = 0
            for j in rng.permutation(eligible[c]):
                j = int(j)
                if taken == quota[c]:
                    break
                if all(
                    abs(matrix.correlation(j, s)) < rho_max for s in selected
                ):
                    selected.append(j)
                    taken += 1
            if taken < quota[c]:
                feasible = False
                break
        if feasible:
            return tuple(sorted(selected))
    raise InfeasibleScenarioError(
        "rho_max=%g admits no assignment of %d SNPs after %d restarts"
        % (rho_max, k, max_restarts)
    )


def calibrate_intercept(
    matrix: GenotypeMatrix,
    causal_snps,
    effect_sizes,
    target: float = 0.5,
) -> float:
    """Intercept making the mean case probability equal ``target``.

    The mean of expit(b0 + eta) is strictly increasing in b0, so a
    bracketing root-finder converges; the result satisfies
    |mean pi - target| <= 1e-9.
    """
    eta = np.zeros(matrix.n_individuals)
    for j, beta in zip(causal_snps, effect_sizes):
        eta += beta * matrix.genotype_column(j)

    def gap(b0):
        return float(expit(b0 + eta).mean() - target)

    lo = -float(eta.max()) - 40.0
    hi = -float(eta.min()) + 40.0
    return float(brentq(gap, lo, hi, xtol=1e-12, rtol=8.9e-16))


def build_trait_scenario(
    matrix: GenotypeMatrix,
    k: int,
    effect_low: float = 0.2,
    effect_high: float = 0.28,
    maf_min: float = 0.3,
    rho_max: float = 0.1,
    seed: int = 0,
    replicate_id: int = 0,
) -> Scenario:
    """Pick causal SNPs, assign effects, calibrate a balanced intercept.

    Effects form an evenly spaced grid from ``effect_low`` to
    ``effect_high`` assigned in causal map order.
    """
    causal = pick_causal(matrix, k, maf_min, rho_max, seed)
    effects = tuple(float(b) for b in np.linspace(effect_low, effect_high, k))
    intercept = calibrate_intercept(matrix, causal, effects)
    return Scenario(
        kind=COMPLEX_TRAIT,
        seed=seed,
        replicate_id=replicate_id,
        k_causal=k,
        effect_low=effect_low,
        effect_high=effect_high,
        maf_min=maf_min,
        rho_max=rho_max,
        causal_snps=causal,
        causal_ids=tuple(matrix.snp_meta[j].snp_id for j in causal),
        effect_sizes=effects,
        intercept=intercept,
    )


def simulate_trait(matrix: GenotypeMatrix, scenario: Scenario) -> np.ndarray:
    """Draw case-control labels under the scenario's logistic model.

    Mean-imputed genotype columns enter the linear predictor, so
    missing genotypes contribute their SNP's average dose.  With no
    causal SNPs and intercept zero this reproduces ``simulate_null``
    exactly (same generator, same draw).
    """
    eta = np.full(matrix.n_individuals, scenario.intercept)
    for j, beta in zip(scenario.causal_snps, scenario.effect_sizes):
        eta += beta * matrix.genotype_column(j)
    rng = replicate_rng(scenario.seed, scenario.replicate_id)
    return (rng.random(matrix.n_individuals) < expit(eta)).astype(np.int8)


def phenotype_for(matrix: GenotypeMatrix, scenario: Scenario) -> np.ndarray:
    if scenario.kind == GLOBAL_NULL:
        return simulate_null(matrix, scenario.seed, scenario.replicate_id)
    return simulate_trait(matrix, scenario)


def remove_causal(
    matrix: GenotypeMatrix,
    scenario: Scenario,
    proxy_min_r: float = PROXY_MIN_R,
) -> tuple[GenotypeMatrix, Scenario]:
    """Drop half the causal SNPs, preferring those with strong LD proxies.

    Half (rounded down) of the causal SNPs are removed from the matrix;
    candidates must have max |r| >= ``proxy_min_r`` with some other SNP
    and the strongest proxies go first.  When fewer candidates qualify a
    warning is emitted and only those are removed.  The returned
    scenario records the removed indices; causal indices keep referring
    to the input matrix.
    """
    k = len(scenario.causal_snps)
    n_remove = k // 2
    if n_remove == 0:
        return matrix, replace(scenario, removed_causal=())
    proxy = {}
    for c in scenario.causal_snps:
        r = np.abs(matrix.correlation_with_all(c))
        r[c] = np.nan
        best = np.nanmax(r) if np.isfinite(r).any() else 0.0
        proxy[c] = float(best)
    candidates = [c for c in scenario.causal_snps if proxy[c] >= proxy_min_r]
    candidates.sort(key=lambda c: (-proxy[c], c))
    if len(candidates) < n_remove:
        warnings.warn(
            "only %d of %d causal SNPs have a proxy with |r| >= %g; "
            "removing just those" % (len(candidates), n_remove, proxy_min_r),
            stacklevel=2,
        )
        chosen = candidates
    else:
        chosen = candidates[:n_remove]
    removed = tuple(sorted(chosen))
    keep = np.setdiff1d(np.arange(matrix.n_snps), np.array(removed, dtype=int))
    return matrix.subset_snps(keep), replace(scenario, removed_causal=removed)


# ----------------------------------------------------------------------
# synthetic genotypes


def generate_genotypes(
    n_individuals: int,
    n_snps: int,
    n_chromosomes: int = 1,
    seed: int = 0,
    block_mean: float = 20.0,
    latent_rho: float = 0.95,
    maf_low: float = 0.05,
    maf_high: float = 0.5,
    missing_rate: float = 0.0,
) -> GenotypeMatrix:
    """Synthetic genotypes with block-structured linkage disequilibrium.

    Chromosomes are partitioned into blocks of geometric size (mean
    ``block_mean``).  Within a block each haplotype shares a latent
    Gaussian factor; per-SNP noise with loading ``latent_rho`` plus a
    per-SNP frequency threshold produces alleles with exact marginal
    frequency drawn uniform on [``maf_low``, ``maf_high``].  The default
    loading makes neighbouring SNPs correlate around r = 0.6 while
    separate blocks stay independent.
    """
    if n_individuals < 1 or n_snps < 1 or n_chromosomes < 1:
        raise ValidationError("need at least one individual, SNP and chromosome")
    rng = replicate_rng(seed, 0)
    per_chrom = [n_snps // n_chromosomes] * n_chromosomes
    for c in range(n_snps % n_chromosomes):
        per_chrom[c] += 1

    dense = np.empty((n_individuals, n_snps), dtype=np.int8)
    chromosomes = np.empty(n_snps, dtype=int)
    positions = np.empty(n_snps, dtype=int)
    ids = []
    col = 0
    noise_scale = np.sqrt(1.0 - latent_rho**2)
    for chrom_idx, chrom_size in enumerate(per_chrom, start=1):
        placed = 0
        while placed < chrom_size:
            size = min(int(rng.geometric(1.0 / block_mean)), chrom_size - placed)
            freqs = rng.uniform(maf_low, maf_high, size)
            thresholds = norm.ppf(freqs)
            latent = rng.standard_normal((n_individuals, 2, 1))
            noise = rng.standard_normal((n_individuals, 2, size))
            haplo = latent_rho * latent + noise_scale * noise < thresholds
            block = haplo.sum(axis=1).astype(np.int8)
            if missing_rate > 0.0:
                gaps = rng.random((n_individuals, size)) < missing_rate
                block[gaps] = -1
            dense[:, col : col + size] = block
            for i in range(size):
                chromosomes[col + i] = chrom_idx
                positions[col + i] = 1000 * (placed + i + 1)
                ids.append("c%ds%05d" % (chrom_idx, placed + i + 1))
            placed += size
            col += size
    return GenotypeMatrix.from_dense(
        dense, chromosomes=chromosomes, positions=positions, snp_ids=ids
    )


# ----------------------------------------------------------------------
# scenario files

_TUPLE_INT = ("causal_snps", "removed_causal")
_TUPLE_FLOAT = ("effect_sizes",)
_TUPLE_STR = ("causal_ids",)
_SCALAR_INT = ("seed", "replicate_id", "k_causal")
_SCALAR_FLOAT = ("effect_low", "effect_high", "maf_min", "rho_max", "intercept")


def write_scenario(path, scenario: Scenario) -> None:
    """Serialize a scenario as sorted ``key=value`` lines."""
    fields = {
        "kind": scenario.kind,
        "seed": scenario.seed,
        "replicate_id": scenario.replicate_id,
        "k_causal": scenario.k_causal,
        "effect_low": repr(scenario.effect_low),
        "effect_high": repr(scenario.effect_high),
        "maf_min": repr(scenario.maf_min),
        "rho_max": repr(scenario.rho_max),
        "intercept": repr(scenario.intercept),
        "causal_snps": ",".join(str(j) for j in scenario.causal_snps),
        "causal_ids": ",".join(scenario.causal_ids),
        "effect_sizes": ",".join(repr(b) for b in scenario.effect_sizes),
        "removed_causal": ",".join(str(j) for j in scenario.removed_causal),
    }
    with open(path, "w") as fh:
        for key in sorted(fields):
            fh.write("%s=%s\n" % (key, fields[key]))


def read_scenario(path) -> Scenario:
    values = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    kwargs = {"kind": values["kind"]}
    for key in _SCALAR_INT:
        kwargs[key] = int(values[key])
    for key in _SCALAR_FLOAT:
        kwargs[key] = float(values[key])
    for key in _TUPLE_INT:
        kwargs[key] = tuple(int(v) for v in values[key].split(",") if v)
    for key in _TUPLE_FLOAT:
        kwargs[key] = tuple(float(v) for v in values[key].split(",") if v)
    for key in _TUPLE_STR:
        kwargs[key] = tuple(v for v in values[key].split(",") if v)
    return Scenario(**kwargs)
