"""Bit-packed genotype storage and PLINK 1.x binary I/O.

Genotypes are held SNP-major, two bits per genotype, in the PLINK .bed
byte layout: the low-order bit pair of each byte stores the first
individual of that byte, rows are padded with zero bits to a whole
number of bytes.  Bit-pair codes are

    00  homozygous for allele A (2 copies)
    01  missing
    10  heterozygous (1 copy)
    11  homozygous for allele B (0 copies)

so a stored value is always the count of ``allele_a`` carried by the
individual.  On load, columns whose counted-allele frequency exceeds 0.5
are recoded to minor-allele counts and their allele labels swapped, so
effect signs are comparable across SNPs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import chi2

from .errors import (
    EmptyResultError,
    FileSizeError,
    FormatError,
    UndefinedStatisticError,
    ValidationError,
)

_BED_MAGIC = bytes([0x6C, 0x1B])
_BED_SNP_MAJOR = 0x01

# Count of allele A for each 2-bit code; -1 marks missing.
_CODE_TO_COUNT = np.array([2, -1, 1, 0], dtype=np.int8)
# Inverse map indexed by genotype value + 1 (missing first).
_COUNT_TO_CODE = np.array([0b01, 0b11, 0b10, 0b00], dtype=np.uint8)

# 256 x 4 table: byte value -> the four genotype counts it encodes,
# low-order bit pair first.
_BYTE_LUT = np.empty((256, 4), dtype=np.int8)
for _b in range(256):
    for _i in range(4):
        _BYTE_LUT[_b, _i] = _CODE_TO_COUNT[(_b >> (2 * _i)) & 0b11]
del _b, _i


@dataclass(frozen=True)
class SnpMeta:
    """Per-SNP metadata carried alongside the packed genotype row.

    Attributes:
        snp_id: Marker identifier, unique within a matrix.
        chromosome: Integer chromosome code.
        position_bp: Base-pair position on the chromosome.
        allele_a: The counted allele; equals the minor allele after load.
        allele_b: The other allele.
        minor_allele_freq: min(f, 1 - f) for the counted-allele frequency f,
            computed over non-missing genotypes.
        missing_rate: Fraction of individuals with a missing genotype.
        map_index: 0-based rank of the SNP in (chromosome, position) order;
            always equals the row index of the SNP in its matrix.
    """

    snp_id: str
    chromosome: int
    position_bp: int
    allele_a: str
    allele_b: str
    minor_allele_freq: float
    missing_rate: float
    map_index: int


def _pack_rows(genotypes: np.ndarray) -> np.ndarray:
    """Pack an (n_snps, n_individuals) int8 genotype block row-wise."""
    n_snps, n_ind = genotypes.shape
    codes = _COUNT_TO_CODE[genotypes.astype(np.int16) + 1]
    width = 4 * ((n_ind + 3) // 4)
    if width != n_ind:
        # Zero bits are the pad convention, matching PLINK output.
        padded = np.zeros((n_snps, width), dtype=np.uint8)
        padded[:, :n_ind] = codes
        codes = padded
    packed = (
        codes[:, 0::4]
        | (codes[:, 1::4] << 2)
        | (codes[:, 2::4] << 4)
        | (codes[:, 3::4] << 6)
    )
    return np.ascontiguousarray(packed, dtype=np.uint8)


def _unpack_rows(packed: np.ndarray, n_ind: int) -> np.ndarray:
    """Decode packed rows back to an (n_snps, n_individuals) int8 block."""
    decoded = _BYTE_LUT[packed].reshape(packed.shape[0], -1)
    return decoded[:, :n_ind]


class GenotypeMatrix:
    """Immutable case-control genotype dataset.

    SNP rows are sorted by (chromosome, position) with strictly
    increasing positions within a chromosome.  The object is safe for
    any number of concurrent readers; per-column imputation results are
    cached internally.
    """

    def __init__(
        self,
        packed: np.ndarray,
        n_individuals: int,
        snp_meta: Sequence[SnpMeta],
        phenotype: Optional[np.ndarray] = None,
        covariates: Optional[np.ndarray] = None,
        validate: bool = True,
    ):
        self._packed = np.ascontiguousarray(packed, dtype=np.uint8)
        self._n = int(n_individuals)
        self._meta = tuple(snp_meta)
        if phenotype is not None:
            phenotype = np.ascontiguousarray(phenotype, dtype=np.int8)
            phenotype.setflags(write=False)
        self._phenotype = phenotype
        if covariates is not None:
            covariates = np.ascontiguousarray(covariates, dtype=np.float64)
            covariates.setflags(write=False)
        self._covariates = covariates
        self._packed.setflags(write=False)
        self._column_cache: dict[int, np.ndarray] = {}
        self._null_fit_cache = None
        if validate:
            self._validate()

    def _validate(self) -> None:
        bytes_per_snp = (self._n + 3) // 4
        if self._packed.ndim != 2 or self._packed.shape != (
            len(self._meta),
            bytes_per_snp,
        ):
            raise ValidationError(
                "packed block shape %s does not match %d SNPs x %d individuals"
                % (self._packed.shape, len(self._meta), self._n)
            )
        seen_ids = set()
        prev = None
        for row, meta in enumerate(self._meta):
            if meta.map_index != row:
                raise ValidationError(
                    "SNP %s has map_index %d but sits in row %d"
                    % (meta.snp_id, meta.map_index, row)
                )
            if meta.snp_id in seen_ids:
                raise ValidationError("duplicate SNP id %r" % meta.snp_id)
            seen_ids.add(meta.snp_id)
            if meta.allele_a == meta.allele_b:
                raise ValidationError(
                    "SNP %s is not biallelic (alleles %r/%r)"
                    % (meta.snp_id, meta.allele_a, meta.allele_b)
                )
            key = (meta.chromosome, meta.position_bp)
            if prev is not None and key <= prev:
                raise ValidationError(
                    "SNP %s breaks (chromosome, position) order" % meta.snp_id
                )
            prev = key
            if not 0.0 <= meta.minor_allele_freq <= 0.5:
                raise ValidationError(
                    "SNP %s has minor_allele_freq %g outside [0, 0.5]"
                    % (meta.snp_id, meta.minor_allele_freq)
                )
        if self._phenotype is not None:
            if self._phenotype.shape != (self._n,):
                raise ValidationError("phenotype length does not match individuals")
            bad = ~np.isin(self._phenotype, (-1, 0, 1))
            if bad.any():
                raise ValidationError(
                    "phenotype contains codes outside {0, 1, -1(missing)}"
                )
        if self._covariates is not None and self._covariates.shape[0] != self._n:
            raise ValidationError("covariate rows do not match individuals")

    # ------------------------------------------------------------------
    # construction helpers

    @classmethod
    def from_dense(
        cls,
        genotypes: np.ndarray,
        chromosomes: Optional[Sequence[int]] = None,
        positions: Optional[Sequence[int]] = None,
        snp_ids: Optional[Sequence[str]] = None,
        alleles: Optional[Sequence[tuple[str, str]]] = None,
        phenotype: Optional[np.ndarray] = None,
        covariates: Optional[np.ndarray] = None,
    ) -> "GenotypeMatrix":
        """Build a matrix from an (n_individuals, n_snps) dense block.

        Genotype values must be in {0, 1, 2, -1(missing)}.  Metadata
        defaults place all SNPs on chromosome 1 at 1 kb spacing.
        """
        genotypes = np.asarray(genotypes, dtype=np.int8)
        if genotypes.ndim != 2:
            raise ValidationError("dense genotypes must be 2-dimensional")
        bad = ~np.isin(genotypes, (-1, 0, 1, 2))
        if bad.any():
            raise ValidationError("genotype values must be in {0, 1, 2, -1}")
        n, p = genotypes.shape
        if chromosomes is None:
            chromosomes = [1] * p
        if positions is None:
            pos_by_chrom: dict[int, int] = {}
            positions = []
            for c in chromosomes:
                nxt = pos_by_chrom.get(c, 0) + 1000
                pos_by_chrom[c] = nxt
                positions.append(nxt)
        if snp_ids is None:
            snp_ids = ["snp%04d" % j for j in range(p)]
        if alleles is None:
            alleles = [("A", "B")] * p
        maf, missing = _column_stats(genotypes)
        meta = []
        for j in range(p):
            meta.append(
                SnpMeta(
                    snp_id=str(snp_ids[j]),
                    chromosome=int(chromosomes[j]),
                    position_bp=int(positions[j]),
                    allele_a=str(alleles[j][0]),
                    allele_b=str(alleles[j][1]),
                    minor_allele_freq=float(maf[j]),
                    missing_rate=float(missing[j]),
                    map_index=j,
                )
            )
        return cls(_pack_rows(genotypes.T), n, meta, phenotype, covariates)

    # ------------------------------------------------------------------
    # basic accessors

    @property
    def n_individuals(self) -> int:
        return self._n

    @property
    def n_snps(self) -> int:
        return len(self._meta)

    @property
    def snp_meta(self) -> tuple[SnpMeta, ...]:
        return self._meta

    @property
    def phenotype(self) -> Optional[np.ndarray]:
        return self._phenotype

    @property
    def covariates(self) -> Optional[np.ndarray]:
        return self._covariates

    @property
    def packed(self) -> np.ndarray:
        return self._packed

    @property
    def chromosomes(self) -> np.ndarray:
        return np.unique([m.chromosome for m in self._meta])

    def index_of(self, snp_id: str) -> int:
        if not hasattr(self, "_id_index"):
            self._id_index = {m.snp_id: m.map_index for m in self._meta}
        return self._id_index[snp_id]

    def raw_column(self, snp_index: int) -> np.ndarray:
        """Genotype counts for one SNP, int8 with -1 for missing."""
        row = self._packed[snp_index][None, :]
        return _unpack_rows(row, self._n)[0]

    def genotype_column(self, snp_index: int) -> np.ndarray:
        """Mean-imputed float column for one SNP.

        Missing genotypes are replaced by the mean of the observed ones.
        Raises:
            UndefinedStatisticError: if every genotype is missing.
        """
        cached = self._column_cache.get(snp_index)
        if cached is not None:
            return cached
        raw = self.raw_column(snp_index)
        col = raw.astype(np.float64)
        miss = raw < 0
        if miss.any():
            if miss.all():
                raise UndefinedStatisticError(
                    "SNP %s has no observed genotypes"
                    % self._meta[snp_index].snp_id
                )
            col[miss] = col[~miss].mean()
        col.setflags(write=False)
        self._column_cache[snp_index] = col
        return col

    def decode_batch(self, snp_indices, impute: bool = True) -> np.ndarray:
        """Decode several SNPs at once to an (n_individuals, m) block.

        With ``impute`` the result is float64 with per-column mean
        imputation (all-missing columns become all-zero); otherwise raw
        int8 counts with -1 for missing.
        """
        snp_indices = np.asarray(snp_indices, dtype=np.intp)
        block = _unpack_rows(self._packed[snp_indices], self._n).T
        if not impute:
            return block
        out = block.astype(np.float64)
        miss = block < 0
        if miss.any():
            observed = np.where(miss, 0.0, out).sum(axis=0)
            counts = (~miss).sum(axis=0)
            means = np.divide(
                observed,
                counts,
                out=np.zeros_like(observed),
                where=counts > 0,
            )
            out = np.where(miss, means[None, :], out)
        return out

    def dense(self) -> np.ndarray:
        """Full (n_individuals, n_snps) int8 block, -1 for missing."""
        return _unpack_rows(self._packed, self._n).T

    # ------------------------------------------------------------------
    # derived views

    def with_phenotype(self, phenotype: Optional[np.ndarray]) -> "GenotypeMatrix":
        """New matrix sharing genotype storage but carrying ``phenotype``."""
        out = GenotypeMatrix(
            self._packed, self._n, self._meta, phenotype, self._covariates,
            validate=False,
        )
        if phenotype is not None:
            if out._phenotype.shape != (self._n,):
                raise ValidationError("phenotype length does not match individuals")
            if (~np.isin(out._phenotype, (-1, 0, 1))).any():
                raise ValidationError(
                    "phenotype contains codes outside {0, 1, -1(missing)}"
                )
        out._column_cache = self._column_cache
        return out

    def subset_snps(self, snp_indices) -> "GenotypeMatrix":
        """Keep the given SNP rows (map order preserved, indices rebuilt)."""
        snp_indices = np.asarray(snp_indices, dtype=np.intp)
        meta = [
            replace(self._meta[j], map_index=new_idx)
            for new_idx, j in enumerate(snp_indices)
        ]
        return GenotypeMatrix(
            self._packed[snp_indices],
            self._n,
            meta,
            self._phenotype,
            self._covariates,
        )

    def subset_individuals(self, keep_mask: np.ndarray) -> "GenotypeMatrix":
        """Keep the individuals flagged in ``keep_mask`` (repacks storage)."""
        keep_mask = np.asarray(keep_mask, dtype=bool)
        dense = self.dense()[keep_mask]
        phenotype = None if self._phenotype is None else self._phenotype[keep_mask]
        covariates = None if self._covariates is None else self._covariates[keep_mask]
        maf, missing = _column_stats(dense)
        meta = [
            replace(m, minor_allele_freq=float(maf[j]), missing_rate=float(missing[j]))
            for j, m in enumerate(self._meta)
        ]
        return GenotypeMatrix(
            _pack_rows(dense.T), int(keep_mask.sum()), meta, phenotype, covariates
        )

    def restrict_to_phenotyped(self) -> "GenotypeMatrix":
        """Drop individuals whose phenotype is missing."""
        if self._phenotype is None:
            raise ValidationError("matrix has no phenotype")
        keep = self._phenotype >= 0
        if keep.all():
            return self
        return self.subset_individuals(keep)

    # ------------------------------------------------------------------
    # statistics

    def correlation(self, snp_j: int, snp_k: int) -> float:
        """Pearson correlation of two mean-imputed genotype columns.

        Raises:
            UndefinedStatisticError: if either column is constant after
                imputation; this is deliberately distinct from 0.
        """
        a = self.genotype_column(snp_j)
        b = self.genotype_column(snp_k)
        da = a - a.mean()
        db = b - b.mean()
        na = float(da @ da)
        nb = float(db @ db)
        if na <= 0.0 or nb <= 0.0:
            which = self._meta[snp_j if na <= 0.0 else snp_k].snp_id
            raise UndefinedStatisticError(
                "correlation undefined: SNP %s is constant" % which
            )
        return float(da @ db) / float(np.sqrt(na) * np.sqrt(nb))

    def correlation_block(self, snp_indices) -> np.ndarray:
        """Pairwise correlation matrix for a set of SNPs; NaN where undefined."""
        cols = self.decode_batch(snp_indices)
        cols = cols - cols.mean(axis=0, keepdims=True)
        norms = np.sqrt((cols**2).sum(axis=0))
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = cols / norms[None, :]
            corr = unit.T @ unit
        corr[:, norms <= 0.0] = np.nan
        corr[norms <= 0.0, :] = np.nan
        return corr

    def correlation_with_all(self, snp_index: int, batch: int = 2048) -> np.ndarray:
        """|r| of one SNP against every SNP; NaN where undefined, 1 at itself."""
        a = self.genotype_column(snp_index)
        da = a - a.mean()
        na = float(np.sqrt(da @ da))
        out = np.full(self.n_snps, np.nan)
        if na <= 0.0:
            return out
        for start in range(0, self.n_snps, batch):
            idx = np.arange(start, min(start + batch, self.n_snps))
            cols = self.decode_batch(idx)
            cols = cols - cols.mean(axis=0, keepdims=True)
            norms = np.sqrt((cols**2).sum(axis=0))
            with np.errstate(invalid="ignore", divide="ignore"):
                out[idx] = (da @ cols) / (na * norms)
        return out

    def genotype_counts(
        self, individual_mask: Optional[np.ndarray] = None, batch: int = 4096
    ) -> np.ndarray:
        """Per-SNP counts of genotypes 0/1/2 over a subset of individuals.

        Returns an (n_snps, 3) int64 array; missing genotypes are not
        counted anywhere.
        """
        out = np.zeros((self.n_snps, 3), dtype=np.int64)
        for start in range(0, self.n_snps, batch):
            idx = np.arange(start, min(start + batch, self.n_snps))
            block = _unpack_rows(self._packed[idx], self._n)
            if individual_mask is not None:
                block = block[:, individual_mask]
            for g in range(3):
                out[idx, g] = (block == g).sum(axis=1)
        return out


def _column_stats(dense: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minor-allele frequency and missing rate per column of a dense block."""
    n = dense.shape[0]
    miss = dense < 0
    observed = (~miss).sum(axis=0)
    allele_sum = np.where(miss, 0, dense).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        freq = allele_sum / (2.0 * observed)
    freq = np.where(observed > 0, freq, 0.0)
    maf = np.minimum(freq, 1.0 - freq)
    return maf, miss.sum(axis=0) / float(n)


# ----------------------------------------------------------------------
# PLINK 1.x binary triple


def load_plink(
    prefix=None,
    *,
    bed_path=None,
    bim_path=None,
    fam_path=None,
) -> GenotypeMatrix:
    """Read a PLINK .bed/.bim/.fam triple.

    Args:
        prefix: Path prefix; ``<prefix>.bed`` etc. are used unless the
            individual paths are given explicitly.

    The .bed file must be SNP-major.  SNPs are sorted by (chromosome,
    position); duplicate positions keep the first occurrence.  Columns
    whose counted-allele frequency exceeds 0.5 are recoded to
    minor-allele counts with allele labels swapped.  Phenotypes follow
    the PLINK convention in .fam column six: 2 is a case, 1 a control,
    anything else missing.

    Raises:
        FormatError: wrong magic bytes or not SNP-major.
        FileSizeError: .bed length does not match the .bim/.fam counts.
        ValidationError: malformed .bim/.fam records.
    """
    if prefix is not None:
        bed_path = bed_path or Path(str(prefix) + ".bed")
        bim_path = bim_path or Path(str(prefix) + ".bim")
        fam_path = fam_path or Path(str(prefix) + ".fam")
    if bed_path is None or bim_path is None or fam_path is None:
        raise ValueError("either prefix or all three paths must be given")

    fam_rows = _read_table(fam_path, 6, "fam")
    n = len(fam_rows)
    phen_codes = np.full(n, -1, dtype=np.int8)
    for i, row in enumerate(fam_rows):
        if row[5] == "2":
            phen_codes[i] = 1
        elif row[5] == "1":
            phen_codes[i] = 0
    phenotype = phen_codes if np.isin(phen_codes, (0, 1)).any() else None

    bim_rows = _read_table(bim_path, 6, "bim")
    p = len(bim_rows)
    chroms = np.empty(p, dtype=np.int64)
    positions = np.empty(p, dtype=np.int64)
    ids = []
    alleles = []
    for j, row in enumerate(bim_rows):
        try:
            chroms[j] = int(row[0])
            positions[j] = int(row[3])
        except ValueError as exc:
            raise ValidationError(
                "bim line %d has non-numeric chromosome or position" % (j + 1)
            ) from exc
        ids.append(row[1])
        if row[4] == row[5]:
            raise ValidationError(
                "bim line %d (SNP %s) is not biallelic" % (j + 1, row[1])
            )
        alleles.append((row[4], row[5]))

    raw = Path(bed_path).read_bytes()
    if len(raw) < 3 or raw[:2] != _BED_MAGIC:
        raise FormatError("%s: bad magic bytes, not a PLINK .bed file" % bed_path)
    if raw[2] != _BED_SNP_MAJOR:
        raise FormatError(
            "%s: mode byte 0x%02x unsupported (need SNP-major 0x01)"
            % (bed_path, raw[2])
        )
    bytes_per_snp = (n + 3) // 4
    expected = 3 + p * bytes_per_snp
    if len(raw) != expected:
        raise FileSizeError(
            "%s: %d bytes, expected %d for %d SNPs x %d individuals"
            % (bed_path, len(raw), expected, p, n)
        )
    packed = np.frombuffer(raw, dtype=np.uint8, offset=3).reshape(p, bytes_per_snp)

    # Sort by map position; duplicated positions keep the first record.
    order = np.lexsort((np.arange(p), positions, chroms))
    keys = list(zip(chroms[order].tolist(), positions[order].tolist()))
    keep = [i for i in range(len(order)) if i == 0 or keys[i] != keys[i - 1]]
    order = order[keep]

    dense = _unpack_rows(packed[order], n)  # (p_kept, n)
    maf_freq = _counted_allele_freq(dense)
    flip = maf_freq > 0.5
    if flip.any():
        flip_rows = dense[flip]
        flip_rows = np.where(flip_rows >= 0, 2 - flip_rows, flip_rows).astype(np.int8)
        dense[flip] = flip_rows

    meta = []
    maf, missing = _column_stats(dense.T)
    for new_idx, old_idx in enumerate(order.tolist()):
        a1, a2 = alleles[old_idx]
        if flip[new_idx]:
            a1, a2 = a2, a1
        meta.append(
            SnpMeta(
                snp_id=ids[old_idx],
                chromosome=int(chroms[old_idx]),
                position_bp=int(positions[old_idx]),
                allele_a=a1,
                allele_b=a2,
                minor_allele_freq=float(maf[new_idx]),
                missing_rate=float(missing[new_idx]),
                map_index=new_idx,
            )
        )
    return GenotypeMatrix(_pack_rows(dense), n, meta, phenotype)


def _counted_allele_freq(dense_rows: np.ndarray) -> np.ndarray:
    """Frequency of the counted allele per SNP row; 0 when all missing."""
    miss = dense_rows < 0
    observed = (~miss).sum(axis=1)
    total = np.where(miss, 0, dense_rows).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        freq = total / (2.0 * observed)
    return np.where(observed > 0, freq, 0.0)


def write_plink(matrix: GenotypeMatrix, prefix) -> None:
    """Write the matrix as a PLINK .bed/.bim/.fam triple.

    Stored genotype counts are emitted unchanged with ``allele_a`` as the
    A1 allele, so write followed by load round-trips matrices whose
    counted allele is the minor one.  Individuals get synthetic ids.
    """
    if matrix.n_snps == 0 or matrix.n_individuals == 0:
        raise ValidationError("refusing to write an empty dataset")
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    with open(str(prefix) + ".bed", "wb") as fh:
        fh.write(_BED_MAGIC + bytes([_BED_SNP_MAJOR]))
        fh.write(matrix.packed.tobytes())
    with open(str(prefix) + ".bim", "w") as fh:
        for m in matrix.snp_meta:
            fh.write(
                "%d\t%s\t0\t%d\t%s\t%s\n"
                % (m.chromosome, m.snp_id, m.position_bp, m.allele_a, m.allele_b)
            )
    phenotype = matrix.phenotype
    with open(str(prefix) + ".fam", "w") as fh:
        for i in range(matrix.n_individuals):
            if phenotype is None or phenotype[i] < 0:
                code = "-9"
            else:
                code = "2" if phenotype[i] == 1 else "1"
            fh.write("%d %d 0 0 0 %s\n" % (i + 1, i + 1, code))


def _read_table(path, min_cols: int, kind: str) -> list[list[str]]:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) < min_cols:
                raise ValidationError(
                    "%s line %d has %d fields, expected %d"
                    % (kind, lineno, len(fields), min_cols)
                )
            rows.append(fields)
    return rows


# ----------------------------------------------------------------------
# quality control


def hwe_pvalues(
    matrix: GenotypeMatrix, controls_only: Optional[bool] = None
) -> np.ndarray:
    """Hardy-Weinberg goodness-of-fit p-values for every SNP.

    A 1-df chi-square compares observed genotype counts with the
    expectation under the allele frequency estimated from the same
    counts.  When a phenotype is present the test uses controls only
    (cases are enriched for true associations); monomorphic SNPs get
    p = 1.
    """
    if controls_only is None:
        controls_only = matrix.phenotype is not None
    mask = None
    if controls_only:
        if matrix.phenotype is None:
            raise ValidationError("controls-only HWE needs a phenotype")
        mask = matrix.phenotype == 0
    counts = matrix.genotype_counts(mask)
    return _hwe_pvalues_from_counts(counts)


def _hwe_pvalues_from_counts(counts: np.ndarray) -> np.ndarray:
    n = counts.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        q = (2.0 * counts[:, 2] + counts[:, 1]) / (2.0 * n)
    q = np.where(n > 0, q, 0.0)
    expected = np.stack(
        [n * (1.0 - q) ** 2, 2.0 * n * q * (1.0 - q), n * q**2], axis=1
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = (counts - expected) ** 2 / expected
    stat = np.where(expected > 0, terms, 0.0).sum(axis=1)
    return chi2.sf(stat, df=1)


def qc_filter(
    matrix: GenotypeMatrix, maf_min: float = 0.01, hwe_alpha: float = 1e-4
) -> GenotypeMatrix:
    """Drop SNPs with MAF below ``maf_min`` or HWE p-value below ``hwe_alpha``.

    The surviving SNPs keep their map order; the operation is idempotent.

    Raises:
        EmptyResultError: if no SNP survives.
    """
    maf = np.array([m.minor_allele_freq for m in matrix.snp_meta])
    hwe_p = hwe_pvalues(matrix)
    keep = (maf >= maf_min) & (hwe_p >= hwe_alpha)
    if not keep.any():
        raise EmptyResultError(
            "QC removed all %d SNPs (maf_min=%g, hwe_alpha=%g)"
            % (matrix.n_snps, maf_min, hwe_alpha)
        )
    if keep.all():
        return matrix
    return matrix.subset_snps(np.flatnonzero(keep))
