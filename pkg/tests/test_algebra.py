"""Tests for finite-dimensional C*-probability spaces."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freedecay.algebra import (
    AlgebraElement,
    AlgebraError,
    MatrixBlockAlgebra,
    center,
    dn_norm,
    gram_schmidt,
    l2_inner,
    l2_norm,
    onb_complement,
    op_norm,
    state,
)
from freedecay.scalars import QC


def m2_tr():
    return MatrixBlockAlgebra.matrix_with_trace(2)


def c2_half():
    return MatrixBlockAlgebra.from_weights([Fraction(1, 2), Fraction(1, 2)])


def c3_weighted():
    return MatrixBlockAlgebra.from_weights([Fraction(3, 5), Fraction(1, 5), Fraction(1, 5)])


def abelian_element(algebra, values):
    return AlgebraElement(algebra, [[[v]] for v in values])


rational = st.fractions(min_value=-3, max_value=3, max_denominator=7)


def random_rational_element(algebra, rng):
    blocks = []
    for n in algebra.block_dims:
        blocks.append(
            [
                [QC(Fraction(rng.integers(-4, 5)), Fraction(rng.integers(-4, 5))) for _ in range(n)]
                for _ in range(n)
            ]
        )
    return AlgebraElement(algebra, blocks)


# ---------------------------------------------------------------------------
# construction and validation
# ---------------------------------------------------------------------------


def test_weights_must_sum_to_one():
    with pytest.raises(AlgebraError):
        MatrixBlockAlgebra.from_weights([Fraction(1, 2), Fraction(1, 3)])


def test_state_must_be_faithful():
    with pytest.raises(AlgebraError):
        MatrixBlockAlgebra.from_weights([1, 0])
    with pytest.raises(AlgebraError):
        MatrixBlockAlgebra([[[QC(1), QC(1)], [QC(1), QC(0)]]])


def test_density_must_be_hermitian():
    with pytest.raises(AlgebraError):
        MatrixBlockAlgebra([[[QC(Fraction(1, 2)), QC(1)], [QC(0), QC(Fraction(1, 2))]]])


def test_block_shape_mismatch():
    alg = m2_tr()
    with pytest.raises(AlgebraError):
        AlgebraElement(alg, [[[QC(1)]]])


def test_owner_mismatch_rejected():
    x = c2_half().identity()
    y = c3_weighted().identity()
    with pytest.raises(AlgebraError):
        l2_inner(x, y)


def test_json_round_trip():
    for alg in (m2_tr(), c3_weighted()):
        again = MatrixBlockAlgebra.from_json(alg.to_json())
        assert again == alg
    x = random_rational_element(m2_tr(), np.random.default_rng(0))
    y = AlgebraElement.from_json(m2_tr(), x.to_json())
    assert y == x


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------


def test_state_of_identity_is_one():
    for alg in (m2_tr(), c2_half(), c3_weighted()):
        assert state(alg.identity()) == QC(1)


def test_state_of_offdiagonal_permutation_is_zero():
    alg = m2_tr()
    x = AlgebraElement(alg, [[[0, 1], [1, 0]]])
    assert state(x) == QC(0)


def test_state_weighted_atom():
    alg = c3_weighted()
    x = abelian_element(alg, [1, 0, 0])
    assert state(x) == QC(Fraction(3, 5))


def test_state_is_linear_and_positive():
    rng = np.random.default_rng(1)
    alg = m2_tr()
    for _ in range(25):
        x = random_rational_element(alg, rng)
        y = random_rational_element(alg, rng)
        assert state(x + y) == state(x) + state(y)
        v = state(x.adjoint() * x)
        assert v.im == 0 and v.re >= 0


# ---------------------------------------------------------------------------
# l2 inner product
# ---------------------------------------------------------------------------


def test_l2_inner_of_identity():
    assert l2_inner(c2_half().identity(), c2_half().identity()) == QC(1)


def test_l2_inner_plus_minus_vector():
    alg = c2_half()
    v = abelian_element(alg, [1, -1])
    assert l2_inner(v, v) == QC(1)


def test_l2_inner_conjugate_symmetry():
    rng = np.random.default_rng(2)
    alg = c3_weighted()
    for _ in range(25):
        x = random_rational_element(alg, rng)
        y = random_rational_element(alg, rng)
        assert l2_inner(x, y) == l2_inner(y, x).conjugate()


@settings(max_examples=40, deadline=None)
@given(st.lists(rational, min_size=2, max_size=2), st.lists(rational, min_size=2, max_size=2))
def test_cauchy_schwarz(xs, ys):
    alg = c2_half()
    x = abelian_element(alg, xs)
    y = abelian_element(alg, ys)
    lhs = abs(complex(l2_inner(x, y)))
    assert lhs <= l2_norm(x) * l2_norm(y) + 1e-9


# ---------------------------------------------------------------------------
# operator norm
# ---------------------------------------------------------------------------


def test_op_norm_identity_and_sign_vector():
    assert op_norm(m2_tr().identity()) == pytest.approx(1.0)
    assert op_norm(abelian_element(c2_half(), [1, -1])) == pytest.approx(1.0)


def test_op_norm_nilpotent():
    alg = m2_tr()
    x = AlgebraElement(alg, [[[0, 2], [0, 0]]])
    assert op_norm(x) == pytest.approx(2.0)


def test_c_star_identity_and_norm_comparison():
    rng = np.random.default_rng(3)
    for alg in (m2_tr(), c3_weighted()):
        for _ in range(20):
            x = random_rational_element(alg, rng)
            assert op_norm(x.adjoint() * x) == pytest.approx(op_norm(x) ** 2, abs=1e-9)
            assert l2_norm(x) <= op_norm(x) + 1e-12


def test_power_iteration_matches_eigh():
    from freedecay.algebra import _power_iteration_top

    rng = np.random.default_rng(4)
    a = rng.standard_normal((40, 40)) + 1j * rng.standard_normal((40, 40))
    h = a @ a.conj().T
    lam = max(np.linalg.eigvalsh(h))
    assert _power_iteration_top(h) == pytest.approx(lam, rel=1e-9)


# ---------------------------------------------------------------------------
# centering and the complement basis
# ---------------------------------------------------------------------------


def test_center_of_identity_is_zero():
    alg = c3_weighted()
    z = center(alg.identity())
    assert z == alg.zero()


def test_center_has_state_zero():
    rng = np.random.default_rng(5)
    for _ in range(10):
        x = random_rational_element(m2_tr(), rng)
        assert state(center(x)) == QC(0)


def test_onb_complement_dimension_and_orthonormality():
    alg = m2_tr()
    basis = onb_complement(alg)
    assert len(basis) == 3
    for i, x in enumerate(basis):
        assert abs(complex(state(x))) < 1e-12
        for j, y in enumerate(basis):
            want = 1.0 if i == j else 0.0
            assert abs(complex(l2_inner(x, y)) - want) < 1e-10


def test_onb_complement_of_c2_is_sign_vector():
    alg = c2_half()
    basis = onb_complement(alg)
    assert len(basis) == 1
    assert basis[0] == abelian_element(alg, [1, -1])


def test_gram_schmidt_drops_dependent_vectors():
    alg = c3_weighted()
    e = alg.identity()
    basis = gram_schmidt([e, e * QC(2), abelian_element(alg, [1, 0, 0])])
    assert len(basis) == 2


# ---------------------------------------------------------------------------
# dn_norm
# ---------------------------------------------------------------------------


def test_dn_norm_identity_only():
    for alg in (m2_tr(), c3_weighted()):
        assert dn_norm([alg.identity()]) == pytest.approx(1.0)


def test_dn_norm_c2():
    alg = c2_half()
    vecs = [alg.identity(), abelian_element(alg, [1, -1])]
    assert dn_norm(vecs) == pytest.approx(math.sqrt(2.0))


def test_dn_norm_c3_full_onb():
    alg = c3_weighted()
    vecs = [alg.identity()] + onb_complement(alg)
    assert dn_norm(vecs) == pytest.approx(math.sqrt(5.0), abs=1e-10)


def test_dn_norm_empty():
    assert dn_norm([]) == 0.0


def _sampled_sup_ratio(vectors, n_samples=600, seed=0, n_restarts=4):
    """Brute-force sup of op_norm/l2_norm over the span: dense sphere samples
    plus local maximization from the best starting points."""
    from scipy.optimize import minimize

    rng = np.random.default_rng(seed)
    k = len(vectors)
    owner = vectors[0].owner

    def ratio(c):
        c = np.asarray(c[:k]) + 1j * np.asarray(c[k:])
        nc = np.linalg.norm(c)
        if nc < 1e-12:
            return 0.0
        x = owner.zero()
        for ci, v in zip(c / nc, vectors):
            x = x + v * complex(ci)
        n2 = l2_norm(x)
        return op_norm(x) / n2 if n2 > 1e-9 else 0.0

    starts = []
    for _ in range(n_samples):
        c = rng.standard_normal(2 * k)
        starts.append((ratio(c), c))
    starts.sort(key=lambda t: -t[0])
    best = starts[0][0]
    for val, c in starts[:n_restarts]:
        res = minimize(lambda c: -ratio(c), c, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        best = max(best, -res.fun)
    return best


def test_dn_norm_equals_brute_force_sup_abelian():
    # On abelian algebras of dimension <= 6 the certificate constant is the
    # exact sup of op_norm/l2_norm over the subspace.
    for weights in ([Fraction(1, 2), Fraction(1, 2)], [Fraction(3, 5), Fraction(1, 5), Fraction(1, 5)],
                    [Fraction(1, 6)] * 6):
        alg = MatrixBlockAlgebra.from_weights(weights)
        vecs = [alg.identity()] + onb_complement(alg)
        sampled = _sampled_sup_ratio(vecs, n_samples=600, seed=1)
        assert dn_norm(vecs) == pytest.approx(sampled, abs=1e-3)


def test_dn_norm_dominates_sampled_sup_matrix_block():
    # For noncommutative blocks the constant is still a certified upper bound.
    alg = m2_tr()
    vecs = [alg.identity()] + onb_complement(alg)
    sampled = _sampled_sup_ratio(vecs, n_samples=400, seed=2)
    assert dn_norm(vecs) >= sampled - 1e-9
