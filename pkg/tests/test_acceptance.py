"""Acceptance gate: twelve end-to-end criteria with pinned tolerances.

Each test prints one ``criterion NN PASS|FAIL`` line so a log of the run
doubles as a scorecard.  The heavy fixtures (null and power experiments
at p = 10^4) are module-scoped and shared between criteria.
"""

import functools
import math
import sys
import time

import numpy as np
import pytest

from gwastep.assoc import cochran_armitage, rank_marginal
from gwastep.cli import main
from gwastep.criteria import evaluate, mbic2, mbic_relaxed
from gwastep.evaluate import c_cluster, evaluate_replicate
from gwastep.firth import fit_firth_raw
from gwastep.genotype import GenotypeMatrix, load_plink, write_plink
from gwastep.runner import run_null_experiment, run_power_experiment
from gwastep.search import fss
from gwastep.simulate import (
    COMPLEX_TRAIT,
    Scenario,
    build_trait_scenario,
    generate_genotypes,
    pick_causal,
    simulate_trait,
)

from oracles import (
    criterion_reference,
    exhaustive_best_model,
    firth_grid_maximum,
    greedy_forward,
    random_minor_coded_matrix,
    trend_permutation_pvalue,
    trend_statistic_reference,
)


_CAPTURE_MANAGER = None


@pytest.fixture(autouse=True)
def _find_capture_manager(request):
    """Remember pytest's capture manager so scorecard lines reach the tty."""
    global _CAPTURE_MANAGER
    _CAPTURE_MANAGER = request.config.pluginmanager.getplugin("capturemanager")
    yield


def criterion(number, label):
    """Emit a scorecard line around a test, pass or fail."""

    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                result = fn(*args, **kwargs)
            except BaseException:
                _emit(number, label, False)
                raise
            _emit(number, label, True)
            return result

        return wrapper

    return decorate


def _emit(number, label, passed):
    line = "criterion %02d %s %s\n" % (
        number, "PASS" if passed else "FAIL", label,
    )
    if _CAPTURE_MANAGER is not None:
        with _CAPTURE_MANAGER.global_and_fixture_disabled():
            sys.stderr.write(line)
            sys.stderr.flush()
    else:
        sys.stderr.write(line)
        sys.stderr.flush()


# ----------------------------------------------------------------------
# shared heavy fixtures


@pytest.fixture(scope="module")
def null_experiment():
    """100 global-null selection replicates at n = 1000, p = 10^4."""
    matrix = generate_genotypes(1000, 10_000, 6, seed=101)
    start = time.perf_counter()
    outcomes = run_null_experiment(
        matrix, n_replicates=100, base_seed=7, threads=1
    )
    return outcomes, time.perf_counter() - start


@pytest.fixture(scope="module")
def power_matrix():
    return generate_genotypes(2000, 10_000, 6, seed=202)


def _power_run(matrix, beta):
    start = time.perf_counter()
    _, _, outcomes = run_power_experiment(
        matrix,
        k_causal=6,
        n_replicates=50,
        base_seed=7,
        effect_low=beta,
        effect_high=beta,
        threads=1,
    )
    return outcomes, time.perf_counter() - start


@pytest.fixture(scope="module")
def power_strong(power_matrix):
    return _power_run(power_matrix, 0.5)


@pytest.fixture(scope="module")
def power_weak(power_matrix):
    return _power_run(power_matrix, 0.25)


# ----------------------------------------------------------------------
# criteria


class TestAcceptance:
    @criterion(1, "intercept-only closed form within 1e-8 in under 1 s")
    def test_01_intercept_closed_form(self):
        rng = np.random.default_rng(11)
        cases = []
        for _ in range(50):
            n = int(rng.integers(2, 201))
            s = int(rng.integers(0, n + 1))
            y = np.zeros(n)
            y[:s] = 1.0
            cases.append((n, s, y))
        start = time.perf_counter()
        for n, s, y in cases:
            fit = fit_firth_raw(np.ones((n, 1)), y, tolerance=1e-12)
            expected = math.log((s + 0.5) / (n - s + 0.5))
            assert abs(fit.coefficients[0] - expected) <= 1e-8
        assert time.perf_counter() - start < 1.0

    @criterion(2, "two-parameter fit dominates a 400x400 grid in under 30 s")
    def test_02_two_parameter_grid(self):
        rng = np.random.default_rng(12)
        start = time.perf_counter()
        for _ in range(20):
            n = 50
            x = rng.binomial(2, rng.uniform(0.2, 0.5), n).astype(float)
            y = rng.integers(0, 2, n).astype(float)
            while y.min() == y.max():
                y = rng.integers(0, 2, n).astype(float)
            X = np.column_stack([np.ones(n), x])
            fit = fit_firth_raw(X, y)
            grid_best, _ = firth_grid_maximum(
                X, y, bounds=((-5.0, 5.0), (-5.0, 5.0)), n_points=400
            )
            assert fit.penalized_loglik >= grid_best - 1e-4
        assert time.perf_counter() - start < 30.0

    @criterion(3, "separated fits converge with coefficients below 20")
    def test_03_separation(self):
        rng = np.random.default_rng(13)
        start = time.perf_counter()
        for _ in range(20):
            n = int(rng.integers(30, 101))
            x = rng.binomial(2, rng.uniform(0.2, 0.5), n).astype(float)
            while x.min() == x.max():
                x = rng.binomial(2, 0.4, n).astype(float)
            y = (x >= 1.0).astype(float)
            X = np.column_stack([np.ones(n), x])
            fit = fit_firth_raw(X, y)
            assert fit.converged
            assert np.abs(fit.coefficients).max() < 20.0
        assert time.perf_counter() - start < 5.0

    @criterion(4, "criterion values match a high-precision reference to 1e-10")
    def test_04_criterion_exactness(self):
        for n, p in ((1000, 10_000), (4077, 149_478)):
            for k in range(51):
                loglik = -100.0 - 3.0 * k
                v2 = evaluate(mbic2(), loglik, k, n, p)
                v60 = evaluate(mbic_relaxed(60.0), loglik, k, n, p)
                assert abs(v2 - criterion_reference(
                    "mbic2", loglik, k, n, p, 4.0
                )) <= 1e-10
                assert abs(v60 - criterion_reference(
                    "mbic_c", loglik, k, n, p, 60.0
                )) <= 1e-10
                identity = k * math.log(15.0) - 2.0 * math.lgamma(k + 1)
                assert abs((v2 - v60) - identity) <= 1e-10

    @criterion(5, "fss beats greedy forward 50/50 and exhaustive in 38+/50")
    def test_05_search_optimality(self):
        def instance(seed):
            rng = np.random.default_rng(seed)
            freqs = rng.uniform(0.2, 0.5, 12)
            dense = rng.binomial(2, freqs, size=(500, 12)).astype(np.int8)
            eta = 0.8 * (dense[:, 1] + dense[:, 5] + dense[:, 9]).astype(float)
            eta -= np.median(eta)
            y = (rng.random(500) < 1.0 / (1.0 + np.exp(-eta))).astype(np.int8)
            return GenotypeMatrix.from_dense(dense, phenotype=y)

        start = time.perf_counter()
        crit = mbic2()
        beats_greedy = exhaustive_hits = 0
        for seed in range(50):
            m = instance(seed)
            model = fss(m, None, rank_marginal(m), crit)
            _, greedy_value = greedy_forward(m, crit)
            best_set, _ = exhaustive_best_model(m, crit)
            if model.criterion_value <= greedy_value + 1e-9:
                beats_greedy += 1
            if tuple(sorted(model.snp_indices)) == tuple(sorted(best_set)):
                exhaustive_hits += 1
        assert beats_greedy == 50
        assert exhaustive_hits >= 38
        assert time.perf_counter() - start < 300.0

    @criterion(6, "null FP mean at most 0.3 with 80+ empty models of 100")
    def test_06_global_null_fdr(self, null_experiment):
        outcomes, seconds = null_experiment
        assert len(outcomes) == 100
        fp = [o.report.fp_count for o in outcomes]
        empty = sum(1 for o in outcomes if o.report.size == 0)
        assert np.mean(fp) <= 0.3
        assert empty >= 80
        assert seconds < 7200.0

    @criterion(7, "power at least 0.8, FDR at most 0.2, monotone in beta")
    def test_07_power(self, power_strong, power_weak):
        strong, strong_seconds = power_strong
        weak, weak_seconds = power_weak
        power_05 = float(np.mean([o.report.power for o in strong]))
        fdr_05 = float(np.mean([o.report.fdr for o in strong]))
        power_025 = float(np.mean([o.report.power for o in weak]))
        assert power_05 >= 0.8
        assert fdr_05 <= 0.2
        assert power_025 < power_05
        assert strong_seconds + weak_seconds < 7200.0

    @criterion(8, "single-marker baseline mean FP clusters at most 0.15")
    def test_08_single_marker_baseline(self, null_experiment):
        outcomes, _ = null_experiment
        sm_fp = [o.sm_report.fp_count for o in outcomes]
        assert np.mean(sm_fp) <= 0.15

    @criterion(9, "trend test matches formula and 1e5-shuffle permutation")
    def test_09_trend_oracle(self):
        rng = np.random.default_rng(900)
        for i in range(10):
            g = rng.binomial(2, rng.uniform(0.15, 0.45), 2000).astype(np.int8)
            y = np.repeat([0, 1], 1000).astype(np.int8)
            rng.shuffle(y)
            m = GenotypeMatrix.from_dense(g[:, None], phenotype=y)
            result = cochran_armitage(m, 0)
            totals = [int((g == t).sum()) for t in (0, 1, 2)]
            cases = [int(((g == t) & (y == 1)).sum()) for t in (0, 1, 2)]
            assert abs(
                result.statistic - trend_statistic_reference(totals, cases)
            ) <= 1e-10
            perm = trend_permutation_pvalue(g, y, 100_000, seed=1000 + i)
            se = np.sqrt(perm * (1.0 - perm) / 100_000)
            assert abs(result.p_value - perm) <= 3.0 * se

    @criterion(10, "evaluation arithmetic exact on ten configurations")
    def test_10_evaluation_arithmetic(self):
        matrix = generate_genotypes(300, 400, 4, seed=11)
        causal = pick_causal(matrix, 6, seed=29)
        scenario = Scenario(
            kind=COMPLEX_TRAIT, seed=29, k_causal=6,
            causal_snps=causal, effect_sizes=(0.2,) * 6,
        )
        lone = 0  # verified below: uncorrelated with every causal SNP
        proxy, proxied = 29, 27
        assert proxied in causal
        assert max(abs(matrix.correlation(lone, c)) for c in causal) < 0.3
        assert abs(matrix.correlation(proxy, proxied)) > 0.3
        assert max(
            abs(matrix.correlation(proxy, c)) for c in causal if c != proxied
        ) < 0.3
        trio = [0, 1, 2]
        for a in trio:
            for b in trio:
                if a < b:
                    assert abs(matrix.correlation(a, b)) > 0.3

        configs = [
            ([], False, (0.0, 0, 0.0, 6)),
            (list(causal), False, (1.0, 0, 0.0, 0)),
            (list(causal[:3]) + [lone], False, (0.5, 1, 0.25, 4)),
            ([lone], False, (0.0, 1, 1.0, 7)),
            ([causal[0]], False, (1 / 6, 0, 0.0, 5)),
            ([proxy], False, (1 / 6, 0, 0.0, 5)),
            ([proxy, proxied], False, (1 / 6, 0, 0.0, 5)),
            (list(causal) + [lone], False, (1.0, 1, 1 / 7, 1)),
            (trio, False, (0.0, 3, 1.0, 9)),
            (trio, True, (0.0, 1, 1.0, 7)),
        ]
        for detections, cluster_fp, expected in configs:
            report = evaluate_replicate(
                matrix, detections, scenario, 0.3, cluster_fp=cluster_fp
            )
            observed = (report.power, report.fp_count, report.fdr,
                        report.misclassifications)
            assert observed == expected

        rng = np.random.default_rng(1010)
        for _ in range(10):
            detections = sorted(
                int(j) for j in rng.choice(matrix.n_snps, 10, replace=False)
            )
            clusters = c_cluster(matrix, detections, 0.3)
            for members in clusters.clusters:
                for a in members:
                    for b in members:
                        if a < b:
                            assert abs(matrix.correlation(a, b)) > 0.3

    @criterion(11, "PLINK round trip byte-identical on 100 random matrices")
    def test_11_plink_round_trip(self, tmp_path):
        rng = np.random.default_rng(1100)
        for i in range(100):
            n = int(rng.integers(4, 60))
            p = int(rng.integers(1, 30))
            dense = random_minor_coded_matrix(rng, n, p, missing_rate=0.1)
            phenotype = rng.choice(
                np.array([-1, 0, 1], dtype=np.int8), size=n
            )
            matrix = GenotypeMatrix.from_dense(dense, phenotype=phenotype)
            first = tmp_path / ("a%03d" % i)
            second = tmp_path / ("b%03d" % i)
            write_plink(matrix, first)
            write_plink(load_plink(first), second)
            for ext in (".bed", ".bim", ".fam"):
                a = first.with_suffix(ext).read_bytes()
                b = second.with_suffix(ext).read_bytes()
                assert a == b

    @criterion(12, "thread counts 1 and 8 give byte-identical TSV outputs")
    def test_12_thread_determinism(self, tmp_path):
        matrix = generate_genotypes(150, 60, 2, seed=120)
        scenario = build_trait_scenario(
            matrix, 2, effect_low=0.9, effect_high=1.1, seed=120
        )
        phenotype = simulate_trait(matrix, scenario)
        prefix = tmp_path / "data"
        write_plink(matrix.with_phenotype(phenotype), prefix)

        runs = {
            "evaluate-null": ["evaluate", "--replicates", "4", "--seed", "3"],
            "evaluate-power": ["evaluate", "--replicates", "2", "--seed", "3",
                               "--k-causal", "2", "--effect-low", "0.9",
                               "--effect-high", "1.1"],
            "select": ["select"],
        }
        outputs = {
            "evaluate-null": ("replicates.tsv", "summary.tsv"),
            "evaluate-power": ("replicates.tsv", "summary.tsv"),
            "select": ("final_model.tsv", "search_trace.tsv"),
        }
        for name, argv in runs.items():
            dirs = []
            for threads in ("1", "8"):
                out = tmp_path / ("%s_t%s" % (name, threads))
                rc = main(argv + ["--bfile", str(prefix), "--out", str(out),
                                  "--threads", threads])
                assert rc == 0
                dirs.append(out)
            for filename in outputs[name]:
                a = (dirs[0] / filename).read_bytes()
                b = (dirs[1] / filename).read_bytes()
                assert a == b
