"""Model-selection criteria for sparse high-dimensional regression.

Two members of one penalty family are provided.  For a model with k
SNPs, maximized penalized log-likelihood L, sample size n and marker
count p:

    mbic2:     -2 L + k * log(n p^2 / 4) - 2 log(k!)
    mbic_c:    -2 L + k * log(n p^2 / c)

``mbic2`` behaves asymptotically like a Benjamini-Hochberg correction
and is the criterion used for final model choice; the relaxed ``mbic_c``
family (default c = 60) admits more SNPs and is useful in early search
rounds.  Lower values are better.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

MBIC2 = "mbic2"
MBIC_C = "mbic_c"


@dataclass(frozen=True)
class Criterion:
    """A parameterized selection criterion.

    Attributes:
        kind: ``"mbic2"`` or ``"mbic_c"``.
        constant_c: Penalty divisor; 4 for mbic2, free for mbic_c.
    """

    kind: str
    constant_c: float

    def __post_init__(self):
        if self.kind not in (MBIC2, MBIC_C):
            raise ValueError("unknown criterion kind %r" % self.kind)
        if not self.constant_c > 0:
            raise ValueError("constant_c must be positive")

    @property
    def label(self) -> str:
        if self.kind == MBIC2:
            return "mbic2"
        return "mbic_c%g" % self.constant_c


def mbic2() -> Criterion:
    return Criterion(MBIC2, 4.0)


def mbic_relaxed(constant_c: float = 60.0) -> Criterion:
    return Criterion(MBIC_C, constant_c)


def evaluate(
    criterion: Criterion, loglik: float, k: int, n: int, p: int
) -> float:
    """Criterion value for a model with ``k`` SNPs.

    Args:
        loglik: Maximized (penalized) log-likelihood of the model.
        k: Number of SNPs in the model, 0 <= k <= p.
        n: Number of individuals.
        p: Number of markers in the search space.

    The same inputs always produce bit-identical output.
    """
    if k < 0 or k > p:
        raise ValueError("k must be in [0, p]")
    if n <= 0 or p <= 0:
        raise ValueError("n and p must be positive")
    log_unit = math.log(n) + 2.0 * math.log(p) - math.log(criterion.constant_c)
    if log_unit <= 0.0:
        raise ValueError("criterion needs n * p^2 / c > 1")
    value = -2.0 * loglik + k * log_unit
    if criterion.kind == MBIC2:
        value -= 2.0 * math.lgamma(k + 1)
    return value


def penalty_increment(criterion: Criterion, k: int, n: int, p: int) -> float:
    """Criterion change for the step k -> k + 1 at fixed log-likelihood."""
    log_unit = math.log(n) + 2.0 * math.log(p) - math.log(criterion.constant_c)
    if criterion.kind == MBIC2:
        return log_unit - 2.0 * math.log(k + 1)
    return log_unit
