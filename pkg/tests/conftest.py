"""Shared generators for the free-product test modules."""

from fractions import Fraction

from freedecay.algebra import AlgebraElement, MatrixBlockAlgebra, center
from freedecay.freeword import FreeElement, FreeProductAmbient, Letter
from freedecay.scalars import QC


def m2_tr():
    return MatrixBlockAlgebra.matrix_with_trace(2)


def c3_weighted():
    return MatrixBlockAlgebra.from_weights(
        [Fraction(3, 5), Fraction(1, 5), Fraction(1, 5)]
    )


def random_rational_element(algebra, rng, span=3):
    blocks = []
    for n in algebra.block_dims:
        blocks.append(
            [
                [
                    QC(
                        Fraction(int(rng.integers(-span, span + 1))),
                        Fraction(int(rng.integers(-span, span + 1))),
                    )
                    for _ in range(n)
                ]
                for _ in range(n)
            ]
        )
    return AlgebraElement(algebra, blocks)


def random_centered_rational(algebra, rng, span=3):
    for _ in range(100):
        x = center(random_rational_element(algebra, rng, span))
        if any(v != QC(0) for b in x.blocks for row in b for v in row):
            return x
    raise RuntimeError("could not draw a nonzero centered element")


def random_alternating_word(ambient, length, rng, centered=True):
    """Random word with alternating factor pattern and rational payloads."""
    m = len(ambient.factors)
    letters = []
    prev = -1
    for _ in range(length):
        choices = [j for j in range(m) if j != prev]
        j = int(choices[rng.integers(0, len(choices))])
        alg = ambient.factors[j]
        payload = (
            random_centered_rational(alg, rng)
            if centered
            else random_rational_element(alg, rng)
        )
        letters.append(Letter(j, payload))
        prev = j
    return FreeElement.word(ambient, letters)


def random_word_element(ambient, max_length, rng, n_terms=1, centered=False):
    out = FreeElement(ambient)
    for _ in range(n_terms):
        length = int(rng.integers(1, max_length + 1))
        coeff = QC(Fraction(int(rng.integers(-3, 4))), Fraction(int(rng.integers(-3, 4))))
        if not coeff:
            coeff = QC(1)
        out = out + random_alternating_word(ambient, length, rng, centered=centered) * coeff
    return out


def pauli_unitaries(algebra):
    """u = w = offdiagonal flip, v = diag(1, -1): rational unitaries in M2."""
    flip = AlgebraElement(algebra, [[[0, 1], [1, 0]]])
    sign = AlgebraElement(algebra, [[[1, 0], [0, -1]]])
    return flip, sign, flip


def two_factor(a1, a2):
    return FreeProductAmbient((a1, a2))
