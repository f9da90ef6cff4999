"""Replicate-level experiment loops.

These drive simulate -> select -> evaluate pipelines over many
replicates.  Results are reduced in replicate order and every replicate
derives its randomness from (base_seed, replicate_id) alone, so the
output is byte-identical no matter how many worker processes run the
loop.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .assoc import single_marker_bh
from .evaluate import DEFAULT_CLUSTER_C, EvalReport, evaluate_replicate
from .genotype import GenotypeMatrix
from .search import SearchConfig, three_round_select
from .simulate import (
    GLOBAL_NULL,
    Scenario,
    build_trait_scenario,
    remove_causal,
    simulate_null,
    simulate_trait,
)


@dataclass(frozen=True)
class ReplicateOutcome:
    """Detections and scores for one replicate.

    ``detections`` are indices into the evaluation matrix (the full
    matrix in power studies, where analysis indices are mapped back
    through SNP ids).  ``sm_report`` holds the single-marker baseline
    when it was run.
    """

    replicate_id: int
    detections: tuple[int, ...]
    report: EvalReport
    sm_report: Optional[EvalReport] = None
    sm_detections: tuple[int, ...] = ()


_WORKER: dict = {}


def _init_worker(payload: dict) -> None:
    _WORKER.update(payload)


def _null_replicate(replicate_id: int) -> ReplicateOutcome:
    matrix: GenotypeMatrix = _WORKER["matrix"]
    config: SearchConfig = _WORKER["config"]
    base_seed: int = _WORKER["base_seed"]
    threshold_c: float = _WORKER["threshold_c"]
    bh_alpha: float = _WORKER["bh_alpha"]
    include_sm: bool = _WORKER["include_sm"]

    phenotype = simulate_null(matrix, base_seed, replicate_id)
    analysed = matrix.with_phenotype(phenotype)
    scenario = Scenario(kind=GLOBAL_NULL, seed=base_seed, replicate_id=replicate_id)
    selection = three_round_select(analysed, config)
    detections = selection.model.snp_indices
    report = evaluate_replicate(
        analysed, detections, scenario, threshold_c, cluster_fp=False
    )
    sm_report = None
    sm_detections: tuple[int, ...] = ()
    if include_sm:
        sm_detections = tuple(single_marker_bh(analysed, bh_alpha))
        sm_report = evaluate_replicate(
            analysed, sm_detections, scenario, threshold_c, cluster_fp=True
        )
    return ReplicateOutcome(
        replicate_id=replicate_id,
        detections=detections,
        report=report,
        sm_report=sm_report,
        sm_detections=sm_detections,
    )


def _power_replicate(replicate_id: int) -> ReplicateOutcome:
    full: GenotypeMatrix = _WORKER["matrix"]
    analysis: GenotypeMatrix = _WORKER["analysis"]
    config: SearchConfig = _WORKER["config"]
    scenario: Scenario = _WORKER["scenario"]
    threshold_c: float = _WORKER["threshold_c"]

    scenario_r = replace(scenario, replicate_id=replicate_id)
    phenotype = simulate_trait(full, scenario_r)
    analysed = analysis.with_phenotype(phenotype)
    selection = three_round_select(analysed, config)
    detections = tuple(
        full.index_of(analysed.snp_meta[j].snp_id)
        for j in selection.model.snp_indices
    )
    report = evaluate_replicate(
        full, detections, scenario_r, threshold_c, cluster_fp=False
    )
    return ReplicateOutcome(
        replicate_id=replicate_id, detections=detections, report=report
    )


def _run(worker, payload: dict, replicate_ids: Sequence[int], threads: int):
    if threads <= 1:
        _init_worker(payload)
        try:
            return [worker(r) for r in replicate_ids]
        finally:
            _WORKER.clear()
    context = multiprocessing.get_context("fork")
    _init_worker(payload)  # fork inherits the payload
    try:
        with context.Pool(threads) as pool:
            return pool.map(worker, replicate_ids, chunksize=1)
    finally:
        _WORKER.clear()


def run_null_experiment(
    matrix: GenotypeMatrix,
    n_replicates: int,
    base_seed: int,
    config: Optional[SearchConfig] = None,
    threshold_c: float = DEFAULT_CLUSTER_C,
    bh_alpha: float = 0.05,
    include_sm: bool = True,
    threads: int = 1,
) -> list[ReplicateOutcome]:
    """Selection under the global null, replicated.

    Every detection is a false positive here.  The stepwise method
    counts raw detections; the single-marker baseline (trend test plus
    Benjamini-Hochberg at ``bh_alpha``) counts correlation clusters.
    """
    payload = {
        "matrix": matrix,
        "config": config or SearchConfig(),
        "base_seed": base_seed,
        "threshold_c": threshold_c,
        "bh_alpha": bh_alpha,
        "include_sm": include_sm,
    }
    return _run(_null_replicate, payload, range(n_replicates), threads)


def run_power_experiment(
    matrix: GenotypeMatrix,
    k_causal: int,
    n_replicates: int,
    base_seed: int,
    effect_low: float = 0.2,
    effect_high: float = 0.28,
    maf_min: float = 0.3,
    rho_max: float = 0.1,
    config: Optional[SearchConfig] = None,
    threshold_c: float = DEFAULT_CLUSTER_C,
    threads: int = 1,
) -> tuple[Scenario, GenotypeMatrix, list[ReplicateOutcome]]:
    """Power study on one fixed causal configuration.

    The scenario (causal SNPs, effect grid, balanced intercept) is built
    once; half the causal SNPs with the strongest LD proxies are removed
    from the analysis matrix; each replicate then draws a fresh
    phenotype from the full matrix and runs selection on the reduced
    one.  Detections are scored against the full matrix.
    """
    scenario = build_trait_scenario(
        matrix, k_causal, effect_low, effect_high, maf_min, rho_max, base_seed
    )
    analysis, scenario = remove_causal(matrix, scenario)
    payload = {
        "matrix": matrix,
        "analysis": analysis,
        "config": config or SearchConfig(),
        "scenario": scenario,
        "threshold_c": threshold_c,
    }
    outcomes = _run(_power_replicate, payload, range(n_replicates), threads)
    return scenario, analysis, outcomes
