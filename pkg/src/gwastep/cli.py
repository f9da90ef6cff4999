"""Command-line interface.

Subcommands cover the full pipeline: ``qc``, ``assoc``, ``select``,
``simulate-null``, ``simulate-trait``, ``evaluate`` and ``bench``.
Outputs are tab-separated files with ``#`` metadata lines plus a
``manifest.json`` recording the resolved configuration, input checksums,
library versions and wall-clock time.  Numeric output never depends on
``--threads``.  Failures map to distinct exit codes (see errors module);
a machine-parsable line ``error\t<code>\t<class>\t<message>`` goes to
stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .assoc import bh_reject, trend_pvalues, trend_statistics
from .errors import GwastepError
from .evaluate import aggregate
from .genotype import GenotypeMatrix, hwe_pvalues, load_plink, qc_filter, write_plink
from .runner import run_null_experiment, run_power_experiment
from .search import SearchConfig, three_round_select
from .simulate import (
    GLOBAL_NULL,
    Scenario,
    build_trait_scenario,
    read_scenario,
    remove_causal,
    simulate_null,
    simulate_trait,
    write_scenario,
)

_FLOAT = "%.10g"


def _fmt(value) -> str:
    if isinstance(value, float):
        return _FLOAT % value
    return str(value)


def _write_tsv(path, header, rows, metadata=None) -> None:
    with open(path, "w") as fh:
        for key in sorted(metadata or {}):
            fh.write("# %s=%s\n" % (key, _fmt(metadata[key])))
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _input_checksums(prefix) -> dict:
    sums = {}
    for ext in (".bed", ".bim", ".fam"):
        path = Path(str(prefix) + ext)
        if path.exists():
            sums[path.name] = _sha256(path)
    return sums


def _write_manifest(outdir, command, config, prefix, start_time) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": _input_checksums(prefix) if prefix else {},
        "versions": {
            "gwastep": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_clock_seconds": round(time.perf_counter() - start_time, 3),
    }
    with open(Path(outdir) / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_for_analysis(prefix) -> GenotypeMatrix:
    matrix = load_plink(prefix)
    if matrix.phenotype is not None and (matrix.phenotype < 0).any():
        matrix = matrix.restrict_to_phenotyped()
    return matrix


def _search_config(args) -> SearchConfig:
    return SearchConfig(m1=args.m1, m2=max(args.m2, args.m1), d=args.d)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------------
# subcommands


def _cmd_qc(args) -> int:
    start = time.perf_counter()
    out = _outdir(args)
    matrix = load_plink(args.bfile)
    maf = [m.minor_allele_freq for m in matrix.snp_meta]
    missing = [m.missing_rate for m in matrix.snp_meta]
    hwe_p = hwe_pvalues(matrix)
    filtered = qc_filter(matrix, args.maf_min, args.hwe_alpha)
    kept_ids = {m.snp_id for m in filtered.snp_meta}
    rows = [
        (
            m.snp_id,
            m.chromosome,
            m.position_bp,
            maf[j],
            missing[j],
            hwe_p[j],
            1 if m.snp_id in kept_ids else 0,
        )
        for j, m in enumerate(matrix.snp_meta)
    ]
    _write_tsv(
        out / "qc_report.tsv",
        ("snp_id", "chrom", "pos", "maf", "missing_rate", "hwe_p", "kept"),
        rows,
        {"maf_min": args.maf_min, "hwe_alpha": args.hwe_alpha,
         "n_input": matrix.n_snps, "n_kept": filtered.n_snps},
    )
    write_plink(filtered, out / "filtered")
    _write_manifest(
        out, "qc",
        {"maf_min": args.maf_min, "hwe_alpha": args.hwe_alpha},
        args.bfile, start,
    )
    return 0


def _cmd_assoc(args) -> int:
    start = time.perf_counter()
    out = _outdir(args)
    matrix = _load_for_analysis(args.bfile)
    stats = trend_statistics(matrix)
    pvals = trend_pvalues(matrix)
    rejected = bh_reject(pvals, args.bh_alpha)
    rows = [
        (
            m.snp_id,
            m.chromosome,
            m.position_bp,
            float(stats[j]),
            float(pvals[j]),
            int(rejected[j]),
        )
        for j, m in enumerate(matrix.snp_meta)
    ]
    _write_tsv(
        out / "assoc.tsv",
        ("snp_id", "chrom", "pos", "statistic", "p_value", "bh_rejected"),
        rows,
        {"bh_alpha": args.bh_alpha, "n_snps": matrix.n_snps,
         "n_rejected": int(rejected.sum())},
    )
    _write_manifest(out, "assoc", {"bh_alpha": args.bh_alpha}, args.bfile, start)
    return 0


def _cmd_select(args) -> int:
    start = time.perf_counter()
    out = _outdir(args)
    matrix = _load_for_analysis(args.bfile)
    config = _search_config(args)
    result = three_round_select(matrix, config)
    model = result.model
    rows = []
    base = 1 if matrix.covariates is None else 1 + matrix.covariates.shape[1]
    for slot, j in enumerate(model.snp_indices):
        meta = matrix.snp_meta[j]
        rows.append(
            (
                meta.snp_id,
                meta.chromosome,
                meta.position_bp,
                float(model.fit.coefficients[base + slot]),
            )
        )
    _write_tsv(
        out / "final_model.tsv",
        ("snp_id", "chrom", "pos", "coefficient"),
        rows,
        {
            "criterion": model.criterion.label,
            "criterion_value": model.criterion_value,
            "model_size": model.size,
            "m1": config.m1, "m2": config.m2, "d": config.d,
        },
    )
    trace_rows = []
    for event in result.trace:
        trace_rows.append(
            (
                event.round_label,
                event.step,
                "-" if event.snp_added is None
                else matrix.snp_meta[event.snp_added].snp_id,
                "-" if event.snp_removed is None
                else matrix.snp_meta[event.snp_removed].snp_id,
                event.model_size,
                event.criterion_value,
            )
        )
    _write_tsv(
        out / "search_trace.tsv",
        ("round", "step", "snp_added", "snp_removed", "model_size",
         "criterion_value"),
        trace_rows,
        {"total_fits": result.counters.total_fits},
    )
    _write_manifest(
        out, "select",
        {"m1": config.m1, "m2": config.m2, "d": config.d}, args.bfile, start,
    )
    return 0


def _cmd_simulate_null(args) -> int:
    start = time.perf_counter()
    out = _outdir(args)
    matrix = load_plink(args.bfile)
    columns = []
    for rep in range(args.replicates):
        columns.append(simulate_null(matrix, args.seed, rep))
        write_scenario(
            out / ("scenario_%04d.txt" % rep),
            Scenario(kind=GLOBAL_NULL, seed=args.seed, replicate_id=rep),
        )
    header = ["rep%04d" % r for r in range(args.replicates)]
    rows = list(zip(*[c.tolist() for c in columns]))
    _write_tsv(
        out / "phenotypes.tsv", header, rows,
        {"kind": GLOBAL_NULL, "seed": args.seed,
         "replicates": args.replicates, "n_individuals": matrix.n_individuals},
    )
    _write_manifest(
        out, "simulate-null",
        {"seed": args.seed, "replicates": args.replicates}, args.bfile, start,
    )
    return 0


def _cmd_simulate_trait(args) -> int:
    start = time.perf_counter()
    out = _outdir(args)
    matrix = load_plink(args.bfile)
    scenario = build_trait_scenario(
        matrix, args.k_causal, args.effect_low, args.effect_high,
        seed=args.seed,
    )
    analysis, scenario = remove_causal(matrix, scenario)
    write_scenario(out / "scenario.txt", scenario)
    write_plink(analysis, out / "analysis")
    removed = set(scenario.removed_causal)
    causal_rows = [
        (
            matrix.snp_meta[j].snp_id, j, float(beta),
            1 if j in removed else 0,
        )
        for j, beta in zip(scenario.causal_snps, scenario.effect_sizes)
    ]
    _write_tsv(
        out / "causal.tsv",
        ("snp_id", "index", "effect", "removed"),
        causal_rows,
        {"seed": args.seed, "k_causal": args.k_causal,
         "intercept": scenario.intercept},
    )
    columns = []
    for rep in range(args.replicates):
        columns.append(simulate_trait(matrix, replace(scenario, replicate_id=rep)))
    header = ["rep%04d" % r for r in range(args.replicates)]
    rows = list(zip(*[c.tolist() for c in columns]))
    _write_tsv(
        out / "phenotypes.tsv", header, rows,
        {"kind": scenario.kind, "seed": args.seed,
         "replicates": args.replicates, "n_individuals": matrix.n_individuals},
    )
    _write_manifest(
        out, "simulate-trait",
        {"seed": args.seed, "replicates": args.replicates,
         "k_causal": args.k_causal, "effect_low": args.effect_low,
         "effect_high": args.effect_high},
        args.bfile, start,
    )
    return 0


def _replicate_rows(outcomes, matrix):
    rows = []
    for outcome in outcomes:
        report = outcome.report
        ids = ",".join(matrix.snp_meta[j].snp_id for j in outcome.detections)
        rows.append(
            (
                report.replicate_id,
                report.size,
                report.true_positives,
                report.fp_count,
                report.power,
                report.fdr,
                report.misclassifications,
                ids if ids else "-",
            )
        )
    return rows


def _summary_rows(label, summary):
    return [
        (
            label,
            summary.n_replicates,
            summary.mean_size, summary.se_size,
            summary.mean_power, summary.se_power,
            summary.mean_fp, summary.se_fp,
            summary.mean_fdr, summary.se_fdr,
            summary.mean_mis, summary.se_mis,
        )
    ]


def _cmd_evaluate(args) -> int:
    start = time.perf_counter()
    out = _outdir(args)
    matrix = load_plink(args.bfile)
    config = _search_config(args)
    # The thread count is recorded in the manifest, not in the TSVs:
    # numeric outputs are thread-invariant and so are their files.
    meta = {
        "seed": args.seed, "replicates": args.replicates,
        "cluster_C": args.cluster_C,
        "m1": config.m1, "m2": config.m2, "d": config.d,
    }
    if args.k_causal > 0:
        scenario, analysis, outcomes = run_power_experiment(
            matrix,
            k_causal=args.k_causal,
            n_replicates=args.replicates,
            base_seed=args.seed,
            effect_low=args.effect_low,
            effect_high=args.effect_high,
            config=config,
            threshold_c=args.cluster_C,
            threads=args.threads,
        )
        write_scenario(out / "scenario.txt", scenario)
        meta.update(
            {"k_causal": args.k_causal, "effect_low": args.effect_low,
             "effect_high": args.effect_high}
        )
        summary_rows = _summary_rows(
            "stepwise", aggregate([o.report for o in outcomes])
        )
    else:
        outcomes = run_null_experiment(
            matrix,
            n_replicates=args.replicates,
            base_seed=args.seed,
            config=config,
            threshold_c=args.cluster_C,
            bh_alpha=args.bh_alpha,
            threads=args.threads,
        )
        meta.update({"k_causal": 0, "bh_alpha": args.bh_alpha})
        summary_rows = _summary_rows(
            "stepwise", aggregate([o.report for o in outcomes])
        ) + _summary_rows(
            "single_marker", aggregate([o.sm_report for o in outcomes])
        )
    _write_tsv(
        out / "replicates.tsv",
        ("replicate", "size", "true_positives", "false_positives", "power",
         "fdr", "misclassifications", "detected"),
        _replicate_rows(outcomes, matrix),
        meta,
    )
    _write_tsv(
        out / "summary.tsv",
        ("method", "replicates", "size", "size_se", "power", "power_se",
         "fp", "fp_se", "fdr", "fdr_se", "mis", "mis_se"),
        summary_rows,
        meta,
    )
    _write_manifest(
        out, "evaluate", dict(meta, threads=args.threads), args.bfile, start
    )
    return 0


def _cmd_bench(args) -> int:
    start = time.perf_counter()
    out = _outdir(args)
    t0 = time.perf_counter()
    matrix = _load_for_analysis(args.bfile)
    load_seconds = time.perf_counter() - t0
    if matrix.phenotype is None:
        matrix = matrix.with_phenotype(
            simulate_null(matrix, args.seed)
        )
    config = _search_config(args)
    t0 = time.perf_counter()
    result = three_round_select(matrix, config)
    select_seconds = time.perf_counter() - t0
    counters = result.counters
    steps = {"add": 0, "swap": 0, "remove": 0}
    for event in result.trace:
        if event.step in steps:
            steps[event.step] += 1
    rows = [
        ("load_seconds", load_seconds),
        ("select_seconds", select_seconds),
        ("model_size", result.model.size),
        ("criterion_value", result.model.criterion_value),
        ("total_fits", counters.total_fits),
        ("forward_scans", counters.forward_scans),
        ("exchange_scans", counters.exchange_scans),
        ("backward_scans", counters.backward_scans),
        ("steps_add", steps["add"]),
        ("steps_swap", steps["swap"]),
        ("steps_remove", steps["remove"]),
    ]
    for size in sorted(counters.fits_by_size):
        rows.append(("fits_size_%d" % size, counters.fits_by_size[size]))
    _write_tsv(out / "bench.tsv", ("metric", "value"), rows,
               {"m1": config.m1, "m2": config.m2, "d": config.d})
    _write_manifest(
        out, "bench", {"m1": config.m1, "m2": config.m2, "d": config.d},
        args.bfile, start,
    )
    return 0


# ----------------------------------------------------------------------
# argument wiring


def _add_common(sub, bfile=True):
    if bfile:
        sub.add_argument("--bfile", required=True, help="PLINK prefix")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--threads", type=int, default=1)


def _add_search_flags(sub):
    sub.add_argument("--m1", type=int, default=350)
    sub.add_argument("--m2", type=int, default=5000)
    sub.add_argument("--d", type=int, default=50)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gwastep",
        description="Stepwise GWAS model selection with FDR control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    qc = sub.add_parser("qc", help="filter SNPs by MAF and HWE")
    _add_common(qc)
    qc.add_argument("--maf-min", type=float, default=0.01)
    qc.add_argument("--hwe-alpha", type=float, default=1e-4)
    qc.set_defaults(func=_cmd_qc)

    assoc = sub.add_parser("assoc", help="single-marker trend tests")
    _add_common(assoc)
    assoc.add_argument("--bh-alpha", type=float, default=0.05)
    assoc.set_defaults(func=_cmd_assoc)

    select = sub.add_parser("select", help="three-round stepwise selection")
    _add_common(select)
    _add_search_flags(select)
    select.set_defaults(func=_cmd_select)

    sim_null = sub.add_parser("simulate-null", help="null phenotype replicates")
    _add_common(sim_null)
    sim_null.add_argument("--replicates", type=int, default=1)
    sim_null.set_defaults(func=_cmd_simulate_null)

    sim_trait = sub.add_parser(
        "simulate-trait", help="complex-trait replicates with causal removal"
    )
    _add_common(sim_trait)
    sim_trait.add_argument("--replicates", type=int, default=1)
    sim_trait.add_argument("--k-causal", type=int, required=True)
    sim_trait.add_argument("--effect-low", type=float, default=0.2)
    sim_trait.add_argument("--effect-high", type=float, default=0.28)
    sim_trait.set_defaults(func=_cmd_simulate_trait)

    evaluate = sub.add_parser(
        "evaluate", help="simulate, select and score over replicates"
    )
    _add_common(evaluate)
    _add_search_flags(evaluate)
    evaluate.add_argument("--replicates", type=int, default=1)
    evaluate.add_argument("--k-causal", type=int, default=0)
    evaluate.add_argument("--effect-low", type=float, default=0.2)
    evaluate.add_argument("--effect-high", type=float, default=0.28)
    evaluate.add_argument("--cluster-C", dest="cluster_C", type=float, default=0.3)
    evaluate.add_argument("--bh-alpha", type=float, default=0.05)
    evaluate.set_defaults(func=_cmd_evaluate)

    bench = sub.add_parser("bench", help="timing and fit-count report")
    _add_common(bench)
    _add_search_flags(bench)
    bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GwastepError as exc:
        sys.stderr.write(
            "error\t%d\t%s\t%s\n" % (exc.exit_code, type(exc).__name__, exc)
        )
        return exc.exit_code
    except Exception as exc:  # unexpected
        sys.stderr.write("error\t1\t%s\t%s\n" % (type(exc).__name__, exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
