"""Criterion-driven stepwise SNP model search.

The fast stepwise search (fss) keeps two candidate pools derived from a
ranking computed once per round: G1, the top ``m1`` SNPs, feeds the
directed forward step; G2, the top ``m2``, feeds the exchange step.  One
search cycle runs the directed forward scan (first strictly improving
SNP is added, each addition followed by an exchange pass), then a
standalone exchange pass, then backward elimination; cycles repeat until
none of the three changes the model.  Every accepted move strictly
decreases the criterion, which guarantees termination.

Full selection runs fss three times: from the null model with a
marginal trend ranking under the relaxed criterion, again with a
conditional score ranking under the relaxed criterion, and finally with
a fresh conditional ranking under mbic2.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assoc import Ranking, rank_conditional, rank_marginal
from .criteria import Criterion, evaluate, mbic2, mbic_relaxed
from .errors import RankDeficiencyError
from .firth import (
    DesignSpec,
    FitResult,
    build_design_matrix,
    fit_firth_raw,
    null_fit,
    response_vector,
)
from .genotype import GenotypeMatrix


def improves(new_value: float, reference: float) -> bool:
    """Strict improvement test with a solver-noise floor.

    Two fits of numerically identical designs can differ by ~1e-11 in
    penalized log-likelihood; a bare ``<`` would accept such noise as
    improvement and e.g. swap a SNP for an identical copy.  Requiring a
    margin keeps every accepted step a real decrease, which also bounds
    the number of steps.
    """
    return new_value < reference - 1e-9 * (1.0 + abs(reference))


@dataclass(frozen=True)
class SearchConfig:
    """Tuning constants of the stepwise search.

    Attributes:
        m1: Size of the directed-forward pool (top of the ranking).
        m2: Size of the exchange pool; capped at the number of ranked
            SNPs at run time, must be >= m1.
        d: Exchange window half-width, measured in map-index units.
        max_model_size: Hard cap on model size; hitting it warns loudly.
        d_shrink_threshold: Model size above which the window shrinks.
        d_floor: Smallest window the shrink rule may produce.
        backward_repeats: Length of the speculative elimination chain.
    """

    m1: int = 350
    m2: int = 5000
    d: int = 50
    max_model_size: int = 50
    d_shrink_threshold: int = 25
    d_floor: int = 5
    backward_repeats: int = 3

    def __post_init__(self):
        if self.m1 < 1:
            raise ValueError("m1 must be at least 1")
        if self.m2 < self.m1:
            raise ValueError("m2 must be at least m1")
        if self.d < 1 or self.d_floor < 1 or self.d_floor > self.d:
            raise ValueError("need 1 <= d_floor <= d")
        if self.max_model_size < 0 or self.backward_repeats < 1:
            raise ValueError("bad max_model_size or backward_repeats")

    def effective_d(self, model_size: int) -> int:
        """Exchange window for the given model size.

        Large models shrink the window to half (but never below
        ``d_floor``) to keep exchange scans affordable.
        """
        if model_size <= self.d_shrink_threshold:
            return self.d
        return max(self.d_floor, self.d // 2)


@dataclass(frozen=True)
class Model:
    """A fitted SNP model with its criterion value."""

    snp_indices: tuple[int, ...]
    fit: Optional[FitResult]
    criterion_value: float
    criterion: Criterion

    @property
    def size(self) -> int:
        return len(self.snp_indices)

    def design(self) -> DesignSpec:
        return DesignSpec(snp_indices=self.snp_indices)


@dataclass(frozen=True)
class TraceEvent:
    """One accepted move of the search."""

    round_label: str
    step: str  # "init", "add", "swap", "remove"
    snp_added: Optional[int]
    snp_removed: Optional[int]
    model_size: int
    criterion_value: float


@dataclass
class SearchCounters:
    """Work counters for benchmarking and trace cross-checks."""

    fits_by_size: Counter = field(default_factory=Counter)
    forward_scans: int = 0
    exchange_scans: int = 0
    backward_scans: int = 0

    @property
    def total_fits(self) -> int:
        return sum(self.fits_by_size.values())


class _State:
    """Mutable search state: current model, design matrix and warm fit."""

    def __init__(self, matrix, criterion, config, trace, counters, round_label):
        self.matrix = matrix
        self.criterion = criterion
        self.config = config
        self.n = matrix.n_individuals
        self.p = matrix.n_snps
        self.y = response_vector(matrix)
        self.trace = trace
        self.counters = counters
        self.round_label = round_label
        self.cap_warned = False
        self.snps: list[int] = []
        self.X: Optional[np.ndarray] = None
        self.fit: Optional[FitResult] = None
        self.value = np.inf
        base = build_design_matrix(matrix, DesignSpec())
        self.base_cols = base.shape[1]
        self._base = base

    def set_model(self, snps, X, fit):
        self.snps = list(snps)
        self.X = X
        self.fit = fit
        self.value = evaluate(
            self.criterion, fit.penalized_loglik, len(snps), self.n, self.p
        )

    def record(self, step, added=None, removed=None):
        if self.trace is not None:
            self.trace.append(
                TraceEvent(
                    round_label=self.round_label,
                    step=step,
                    snp_added=added,
                    snp_removed=removed,
                    model_size=len(self.snps),
                    criterion_value=self.value,
                )
            )

    def _fit(self, X, initial, k):
        self.counters.fits_by_size[k] += 1
        return fit_firth_raw(X, self.y, initial=initial)

    def try_add(self, snp):
        """Fit model + snp; returns (snps, X, fit, value) or None."""
        col = self.matrix.genotype_column(snp)
        X_new = np.concatenate([self.X, col[:, None]], axis=1)
        initial = np.append(self.fit.coefficients, 0.0)
        try:
            fit = self._fit(X_new, initial, len(self.snps) + 1)
        except RankDeficiencyError:
            return None
        if not fit.converged:
            return None
        value = evaluate(
            self.criterion, fit.penalized_loglik, len(self.snps) + 1, self.n, self.p
        )
        return self.snps + [snp], X_new, fit, value

    def try_swap(self, position, snp):
        col = self.matrix.genotype_column(snp)
        X_new = self.X.copy()
        X_new[:, self.base_cols + position] = col
        initial = self.fit.coefficients.copy()
        initial[self.base_cols + position] = 0.0
        try:
            fit = self._fit(X_new, initial, len(self.snps))
        except RankDeficiencyError:
            return None
        if not fit.converged:
            return None
        value = evaluate(
            self.criterion, fit.penalized_loglik, len(self.snps), self.n, self.p
        )
        snps = list(self.snps)
        snps[position] = snp
        return snps, X_new, fit, value

    def try_remove(self, position, snps=None, X=None, fit=None):
        """Removal from the given model (defaults to the current one)."""
        snps = self.snps if snps is None else snps
        X = self.X if X is None else X
        fit = self.fit if fit is None else fit
        col = self.base_cols + position
        X_new = np.delete(X, col, axis=1)
        initial = np.delete(fit.coefficients, col)
        try:
            new_fit = self._fit(X_new, initial, len(snps) - 1)
        except RankDeficiencyError:
            return None
        if not new_fit.converged:
            return None
        value = evaluate(
            self.criterion, new_fit.penalized_loglik, len(snps) - 1, self.n, self.p
        )
        new_snps = [s for i, s in enumerate(snps) if i != position]
        return new_snps, X_new, new_fit, value


def directed_forward_step(state: _State, g1: np.ndarray) -> bool:
    """Add the first G1 SNP that strictly improves the criterion.

    G1 is scanned in ranking order; SNPs already in the model are
    skipped.  Returns whether an addition happened.
    """
    state.counters.forward_scans += 1
    if len(state.snps) >= state.config.max_model_size:
        if not state.cap_warned:
            warnings.warn(
                "model size cap %d reached; no further SNPs will be added"
                % state.config.max_model_size,
                stacklevel=2,
            )
            state.cap_warned = True
        return False
    in_model = set(state.snps)
    for snp in g1:
        snp = int(snp)
        if snp in in_model:
            continue
        result = state.try_add(snp)
        if result is not None and improves(result[3], state.value):
            state.set_model(*result[:3])
            state.record("add", added=snp)
            return True
    return False


def exchange_step(state: _State, g2: np.ndarray) -> bool:
    """Swap model SNPs for nearby ranked SNPs when that strictly improves.

    Each model SNP, in inclusion order, is tested against every G2 SNP
    on the same chromosome within the effective map-index window; the
    best strictly improving swap (first wins ties) replaces it in place.
    Returns whether any swap was applied.
    """
    state.counters.exchange_scans += 1
    if not state.snps:
        return False
    eff_d = state.config.effective_d(len(state.snps))
    meta = state.matrix.snp_meta
    g2_chrom = np.array([meta[int(j)].chromosome for j in g2])
    g2_map = np.array([meta[int(j)].map_index for j in g2])
    changed = False
    for position in range(len(state.snps)):
        current = state.snps[position]
        cur_meta = meta[current]
        in_model = set(state.snps)
        nearby = (g2_chrom == cur_meta.chromosome) & (
            np.abs(g2_map - cur_meta.map_index) < eff_d
        )
        best = None
        best_value = state.value
        for snp in g2[nearby]:
            snp = int(snp)
            if snp in in_model:
                continue
            result = state.try_swap(position, snp)
            if result is not None and improves(result[3], best_value):
                best = result
                best_value = result[3]
        if best is not None:
            removed = current
            state.set_model(*best[:3])
            state.record("swap", added=best[0][position], removed=removed)
            changed = True
    return changed


def backward_step(state: _State) -> bool:
    """Greedy elimination with a short speculative chain.

    The single removal that most decreases the criterion is applied when
    it strictly improves.  Otherwise up to ``backward_repeats`` chained
    least-harmful removals are explored and the best model seen along
    the chain is adopted only if it beats the incumbent.  Returns
    whether the model changed.
    """
    state.counters.backward_scans += 1
    if not state.snps:
        return False

    def best_removal(snps, X, fit):
        best = None
        for position in range(len(snps)):
            result = state.try_remove(position, snps, X, fit)
            if result is not None and (best is None or result[3] < best[3]):
                best = result
        return best

    first = best_removal(state.snps, state.X, state.fit)
    if first is None:
        return False
    if improves(first[3], state.value):
        removed = [s for s in state.snps if s not in first[0]][0]
        state.set_model(*first[:3])
        state.record("remove", removed=removed)
        return True

    # Speculative chain: keep stripping the least harmful SNP and
    # remember the best model encountered.
    chain = first
    best_seen = first
    for _ in range(state.config.backward_repeats - 1):
        if not chain[0]:
            break
        chain = best_removal(chain[0], chain[1], chain[2])
        if chain is None:
            break
        if chain[3] < best_seen[3]:
            best_seen = chain
    if improves(best_seen[3], state.value):
        removed = [s for s in state.snps if s not in best_seen[0]]
        state.set_model(*best_seen[:3])
        for snp in removed:
            state.record("remove", removed=snp)
        return True
    return False


def null_model(matrix: GenotypeMatrix, criterion: Criterion) -> Model:
    """The SNP-free model scored under ``criterion``."""
    fit = null_fit(matrix)
    value = evaluate(
        criterion, fit.penalized_loglik, 0, matrix.n_individuals, matrix.n_snps
    )
    return Model((), fit, value, criterion)


def fss(
    matrix: GenotypeMatrix,
    initial: Optional[Model],
    ranking: Ranking,
    criterion: Criterion,
    config: Optional[SearchConfig] = None,
    trace: Optional[list] = None,
    counters: Optional[SearchCounters] = None,
    round_label: str = "fss",
) -> Model:
    """Run the fast stepwise search from ``initial`` until a fixed point.

    The returned model is a local minimum of ``criterion`` with respect
    to adding any G1 SNP, any in-scope exchange, and any single removal,
    and its criterion value never exceeds the initial one.  If fitting
    the initial model fails the search starts from the null model.
    """
    config = config or SearchConfig()
    counters = counters if counters is not None else SearchCounters()
    state = _State(matrix, criterion, config, trace, counters, round_label)

    start = initial if initial is not None else null_model(matrix, criterion)
    try:
        fit = start.fit
        X = build_design_matrix(matrix, start.design())
        if fit is None:
            fit = fit_firth_raw(X, state.y)
        state.set_model(start.snp_indices, X, fit)
    except RankDeficiencyError:
        fallback = null_model(matrix, criterion)
        state.set_model((), state._base.copy(), fallback.fit)
    state.record("init")

    g1 = ranking.top(min(config.m1, len(ranking.snp_indices)))
    g2 = ranking.top(min(config.m2, len(ranking.snp_indices)))

    while True:
        changed = False
        while directed_forward_step(state, g1):
            changed = True
            exchange_step(state, g2)
        if exchange_step(state, g2):
            changed = True
        if backward_step(state):
            changed = True
        if not changed:
            break
    return Model(tuple(state.snps), state.fit, state.value, criterion)


@dataclass(frozen=True)
class RoundResult:
    """Summary of one search round."""

    label: str
    ranking_source: str
    criterion: Criterion
    model: Model


@dataclass(frozen=True)
class SelectionResult:
    """Final model plus the per-round models and full move trace."""

    model: Model
    rounds: tuple[RoundResult, ...]
    trace: tuple[TraceEvent, ...]
    counters: SearchCounters


def _rescore(matrix: GenotypeMatrix, model: Model, criterion: Criterion) -> Model:
    value = evaluate(
        criterion,
        model.fit.penalized_loglik,
        model.size,
        matrix.n_individuals,
        matrix.n_snps,
    )
    return Model(model.snp_indices, model.fit, value, criterion)


def three_round_select(
    matrix: GenotypeMatrix,
    config: Optional[SearchConfig] = None,
    relaxed_c: float = 60.0,
) -> SelectionResult:
    """Full selection: two relaxed search rounds, then an mbic2 round.

    Round one starts from the null model with a marginal trend ranking
    under the relaxed criterion, which deliberately over-selects; round
    two repeats the search with a conditional score ranking computed
    against the round-one model; round three recomputes the conditional
    ranking and minimizes mbic2, stripping SNPs that do not survive the
    stricter penalty.  Deterministic for fixed inputs.
    """
    config = config or SearchConfig()
    relaxed = mbic_relaxed(relaxed_c)
    final_criterion = mbic2()
    trace: list[TraceEvent] = []
    counters = SearchCounters()
    rounds = []

    ranking1 = rank_marginal(matrix)
    model1 = fss(
        matrix, null_model(matrix, relaxed), ranking1, relaxed,
        config, trace, counters, round_label="round1",
    )
    rounds.append(RoundResult("round1", ranking1.source, relaxed, model1))

    ranking2 = rank_conditional(matrix, model1.fit, model1.design())
    model2 = fss(
        matrix, model1, ranking2, relaxed,
        config, trace, counters, round_label="round2",
    )
    rounds.append(RoundResult("round2", ranking2.source, relaxed, model2))

    ranking3 = rank_conditional(matrix, model2.fit, model2.design())
    model3 = fss(
        matrix, _rescore(matrix, model2, final_criterion), ranking3,
        final_criterion, config, trace, counters, round_label="round3",
    )
    rounds.append(RoundResult("round3", ranking3.source, final_criterion, model3))

    return SelectionResult(
        model=model3,
        rounds=tuple(rounds),
        trace=tuple(trace),
        counters=counters,
    )
