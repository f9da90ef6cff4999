"""Shared fixtures: small synthetic datasets reused across test modules."""

import numpy as np
import pytest

from gwastep.genotype import GenotypeMatrix
from gwastep.simulate import generate_genotypes, simulate_null


@pytest.fixture(scope="session")
def small_ld_matrix():
    """300 x 400 block-LD matrix on 4 chromosomes, no missing data."""
    return generate_genotypes(300, 400, n_chromosomes=4, seed=11)


@pytest.fixture(scope="session")
def small_ld_cc(small_ld_matrix):
    """The block-LD matrix with a null phenotype attached."""
    y = simulate_null(small_ld_matrix, 17)
    return small_ld_matrix.with_phenotype(y)


@pytest.fixture()
def tiny_matrix():
    """Hand-written 6 x 4 matrix with one missing genotype."""
    dense = np.array(
        [
            [0, 1, 2, 0],
            [1, 0, 1, 1],
            [2, 1, 0, -1],
            [0, 2, 1, 0],
            [1, 1, 2, 1],
            [0, 0, 1, 0],
        ],
        dtype=np.int8,
    )
    phenotype = np.array([1, 0, 1, 0, 1, 0], dtype=np.int8)
    return GenotypeMatrix.from_dense(dense, phenotype=phenotype)


def independent_cc_matrix(rng, n, p, maf_low=0.2, maf_high=0.5):
    """Independent-SNP case-control matrix on one chromosome."""
    freqs = rng.uniform(maf_low, maf_high, p)
    dense = rng.binomial(2, freqs, size=(n, p)).astype(np.int8)
    phenotype = rng.integers(0, 2, n).astype(np.int8)
    return GenotypeMatrix.from_dense(dense, phenotype=phenotype)
