"""Tests for filtrations, RD certificates, triples, and the classifier."""

import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import c3_weighted, m2_tr
from freedecay.algebra import (
    AlgebraError,
    MatrixBlockAlgebra,
    l2_norm,
    op_norm,
)
from freedecay.freeword import l2_inner_free
from freedecay.measure import CompactMeasure, degree_filtration
from freedecay.rdcert import (
    ConstantFiltration,
    FiniteDimFiltration,
    classify_abelian,
    derived_filtration,
    find_avitzour_triple,
    fit_exponent,
    free_filtration,
    orthogonality_hypotheses,
    rd_constant,
    rd_report,
    verify_avitzour_triple,
)


# ---------------------------------------------------------------------------
# constants and exponents
# ---------------------------------------------------------------------------


def test_constant_filtration_rd_constant():
    filt = ConstantFiltration(c3_weighted())
    value, method = rd_constant(filt, 3)
    assert value == pytest.approx(math.sqrt(5.0), abs=1e-10)
    assert rd_constant(filt, 0)[0] == 1.0


def test_measure_filtration_semicircle_constant():
    filt = degree_filtration(CompactMeasure.semicircle(), 12)
    value, _ = rd_constant(filt, 10)
    assert value == pytest.approx(math.sqrt(506.0), abs=1e-8)


def test_fit_exponent_flat_is_zero():
    rows = [(n, 1.0) for n in range(0, 8)]
    slope, _ = fit_exponent(rows)
    assert slope == pytest.approx(0.0, abs=1e-12)


def test_fit_exponent_requires_three_rows():
    with pytest.raises(ValueError):
        fit_exponent([(1, 1.0), (2, 2.0)])


def test_semicircle_exponent_three_halves():
    report = rd_report(degree_filtration(CompactMeasure.semicircle(), 40), 40)
    assert 1.40 <= report.alpha_hat <= 1.60


def test_lebesgue_exponent_one():
    report = rd_report(degree_filtration(CompactMeasure.lebesgue(), 40), 40)
    assert 0.95 <= report.alpha_hat <= 1.05


def test_rd_constant_monotone():
    report = rd_report(degree_filtration(CompactMeasure.semicircle(), 12), 12)
    uppers = [row[2] for row in report.rows]
    assert all(b >= a - 1e-12 for a, b in zip(uppers, uppers[1:]))


# ---------------------------------------------------------------------------
# generic finite-dimensional filtrations
# ---------------------------------------------------------------------------


def test_finite_dim_filtration_star_stability_enforced():
    alg = m2_tr()
    e12 = alg.element([[[0, 1], [0, 0]]])
    with pytest.raises(AlgebraError):
        FiniteDimFiltration(alg, [[], [e12]])


def test_finite_dim_filtration_product_containment():
    alg = m2_tr()
    e12 = alg.element([[[0, 1], [0, 0]]])
    e21 = e12.adjoint()
    filt = FiniteDimFiltration(alg, [[], [e12 + e21], [e12 * e21, e21 * e12, e12, e21]])
    rng = np.random.default_rng(0)
    assert filt.check_product_containment(1, 1, rng)


# ---------------------------------------------------------------------------
# free-product filtration
# ---------------------------------------------------------------------------


def _c2():
    return MatrixBlockAlgebra.from_weights([Fraction(1, 2), Fraction(1, 2)])


def test_free_filtration_level_dims():
    filt = free_filtration([ConstantFiltration(_c2()), ConstantFiltration(_c2())])
    assert filt.level_dim(0) == 1
    assert filt.level_dim(2) == 5
    assert len(filt.level_onb(2)) == 5


def test_free_filtration_levels_orthonormal():
    filt = free_filtration([ConstantFiltration(_c2()), ConstantFiltration(m2_tr())])
    basis = filt.level_onb(2)
    for i, x in enumerate(basis):
        for j, y in enumerate(basis):
            want = 1.0 if i == j else 0.0
            assert abs(complex(l2_inner_free(x, y)) - want) < 1e-10


def test_free_filtration_bracket_orders():
    filt = free_filtration(
        [ConstantFiltration(_c2()), ConstantFiltration(_c2())], probe_seed=1
    )
    for n in (1, 2, 3):
        c = filt.rd_constant(n)
        assert 0 < c.lower <= c.upper + 1e-9
        assert c.method == "bracket"


def test_free_filtration_exponent_finite():
    filt = free_filtration(
        [ConstantFiltration(_c2()), ConstantFiltration(_c2())], probe_seed=2
    )
    report = rd_report(filt, 4)
    assert np.isfinite(report.alpha_hat)


# ---------------------------------------------------------------------------
# derived filtrations
# ---------------------------------------------------------------------------


def test_direct_sum_bound():
    f1 = ConstantFiltration(_c2())
    f2 = ConstantFiltration(c3_weighted())
    report = derived_filtration(
        "direct_sum", first=f1, second=f2, weight=Fraction(1, 2), max_n=3
    )
    assert report.ok
    # equal-weight direct sum of constant filtrations saturates the bound
    assert report.realized[1] == pytest.approx(report.predicted_bound[1], rel=1e-9)


def test_corner_by_identity_keeps_constants():
    f = ConstantFiltration(c3_weighted())
    p = f.algebra.identity()
    report = derived_filtration("corner", first=f, projection=p, max_n=2)
    assert report.ok
    assert report.realized[1] == pytest.approx(math.sqrt(5.0), abs=1e-8)


def test_corner_by_atom_pair():
    f = ConstantFiltration(c3_weighted())
    alg = f.algebra
    p = alg.element([[[1]], [[1]], [[0]]])
    report = derived_filtration("corner", first=f, projection=p, max_n=2)
    assert report.ok
    # corner of the (3/5, 1/5) atoms renormalized: lightest atom 1/4
    assert report.realized[1] == pytest.approx(2.0, abs=1e-8)


def test_corner_rejects_non_projection():
    f = ConstantFiltration(c3_weighted())
    q = f.algebra.element([[[Fraction(1, 2)]], [[1]], [[0]]])
    with pytest.raises(AlgebraError):
        derived_filtration("corner", first=f, projection=q, max_n=1)


def test_tensor_bound_on_random_elements():
    f1 = ConstantFiltration(_c2())
    f2 = ConstantFiltration(m2_tr())
    report = derived_filtration("tensor", first=f1, second=f2, max_n=2)
    assert report.ok
    filt = report.filtration
    rng = np.random.default_rng(3)
    basis = filt.level_onb(1)
    c1 = f1.rd_constant(1).value
    c2 = f2.rd_constant(1).value
    bound = c1 * c2 * math.sqrt(len(f1.level_onb(1)))
    for _ in range(10):
        coeffs = rng.standard_normal(len(basis))
        x = filt.algebra.zero()
        for c, b in zip(coeffs, basis):
            x = x + b * complex(c)
        assert op_norm(x) <= bound * l2_norm(x) + 1e-9


# ---------------------------------------------------------------------------
# triples of unitaries with vanishing moments
# ---------------------------------------------------------------------------


def test_triple_for_m2_pair_is_exact_and_structured():
    f1 = ConstantFiltration(MatrixBlockAlgebra.matrix_with_state([Fraction(2, 3), Fraction(1, 3)]))
    f2 = ConstantFiltration(m2_tr())
    triple = find_avitzour_triple(f1, f2, seed=0)
    assert triple is not None
    res = verify_avitzour_triple(triple.u, triple.v, triple.w)
    assert max(res.values()) == 0.0  # rational structured construction
    flip = [[0, 1], [1, 0]]
    assert triple.u == f1.algebra.element([flip])
    assert triple.w == f2.algebra.element([flip])
    assert triple.v == f2.algebra.element([[[1, 0], [0, -1]]])


def test_triple_for_trivial_second_factor_is_none():
    f1 = ConstantFiltration(m2_tr())
    f2 = ConstantFiltration(MatrixBlockAlgebra.from_weights([1]))
    assert find_avitzour_triple(f1, f2, seed=0) is None


def test_triple_for_m3_trace_uses_cube_roots():
    f = ConstantFiltration(MatrixBlockAlgebra.matrix_with_trace(3))
    triple = find_avitzour_triple(f, f, seed=0)
    assert triple is not None
    res = verify_avitzour_triple(triple.u, triple.v, triple.w)
    assert max(res.values()) < 1e-12
    # v is the diagonal of cube roots of unity
    v_np = triple.v.to_numpy()[0]
    diag = np.diag(v_np)
    assert np.allclose(sorted(np.angle(diag)), sorted(np.angle(np.exp(2j * np.pi * np.arange(3) / 3))))


def test_triple_for_uniform_abelian_four_atoms_exact():
    f1 = ConstantFiltration(MatrixBlockAlgebra.from_weights([Fraction(1, 4)] * 4))
    triple = find_avitzour_triple(f1, f1, seed=0)
    assert triple is not None
    res = verify_avitzour_triple(triple.u, triple.v, triple.w)
    assert max(res.values()) == 0.0
    assert triple.v.is_exact() and triple.w.is_exact()


def test_triple_none_when_heavy_atom_blocks_unitaries():
    # max weight > 1/2: no state-zero unitary exists in the abelian algebra
    f1 = ConstantFiltration(MatrixBlockAlgebra.from_weights([Fraction(3, 5), Fraction(1, 5), Fraction(1, 5)]))
    f2 = ConstantFiltration(m2_tr())
    assert find_avitzour_triple(f2, f1, seed=0) is None  # v needs state zero in A2
    assert find_avitzour_triple(f1, f2, seed=0) is None  # u needs state zero in A1


def test_triple_general_weights_five_atoms():
    weights = [Fraction(6, 20), Fraction(5, 20), Fraction(4, 20), Fraction(3, 20), Fraction(2, 20)]
    f = ConstantFiltration(MatrixBlockAlgebra.from_weights(weights))
    triple = find_avitzour_triple(f, f, seed=1, trials=200)
    assert triple is not None
    res = verify_avitzour_triple(triple.u, triple.v, triple.w)
    assert max(res.values()) < 1e-9


def test_triple_three_nonuniform_atoms_is_none():
    # for three atoms the pair (v, w) forces uniform weights: the phase
    # matrix scaled by sqrt(weights) would have to be unitary
    weights = [Fraction(5, 12), Fraction(4, 12), Fraction(3, 12)]
    f = ConstantFiltration(MatrixBlockAlgebra.from_weights(weights))
    assert find_avitzour_triple(f, f, seed=1, trials=300) is None


def test_triple_heavy_atom_above_third_is_none():
    # a single atom above 1/3 contradicts the rank-3 projection diagonal
    weights = [Fraction(2, 5), Fraction(3, 10), Fraction(3, 20), Fraction(3, 20)]
    f = ConstantFiltration(MatrixBlockAlgebra.from_weights(weights))
    assert find_avitzour_triple(f, f, seed=1, trials=50) is None


# ---------------------------------------------------------------------------
# almost-orthogonality hypothesis report
# ---------------------------------------------------------------------------


def test_hypotheses_commuting_unitary_containment_zero():
    alg = MatrixBlockAlgebra.from_weights([Fraction(1, 4)] * 4)
    from freedecay.algebra import onb_complement

    comp = onb_complement(alg)
    u = alg.element([[[1]], [[-1]], [[1]], [[-1]]])
    report = orthogonality_hypotheses(comp, u, comp)
    assert report.containment_l2 < 1e-10
    assert report.containment_op < 1e-10


def test_hypotheses_suprema_bounded_by_one():
    rng = np.random.default_rng(4)
    alg = MatrixBlockAlgebra.matrix_with_trace(3)
    from freedecay.algebra import onb_complement

    comp = onb_complement(alg)
    # random unitary: exponential of a random Hermitian
    h = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    h = 0.5 * (h + h.conj().T)
    import scipy.linalg

    u_np = scipy.linalg.expm(1j * h)
    u = alg.element([[[complex(v) for v in row] for row in u_np]])
    report = orthogonality_hypotheses(comp[:3], u, comp[:4])
    assert report.sup_conjugated <= 1 + 1e-9
    assert report.sup_mixed <= 1 + 1e-9


def test_hypotheses_shift_decay_on_circle_discretization():
    # discretized Haar circle: almost-orthogonality decays as the character
    # order k grows away from the span of low frequencies
    n_atoms = 48
    alg = MatrixBlockAlgebra.from_weights([Fraction(1, n_atoms)] * n_atoms)

    def character(k):
        return alg.element(
            [[[complex(np.exp(2j * np.pi * k * t / n_atoms))]] for t in range(n_atoms)]
        )

    v_span = [character(k) for k in (-2, -1, 1, 2)]
    sups = []
    for k in (3, 6, 12):
        u = character(k)
        report = orthogonality_hypotheses(v_span, u, v_span)
        sups.append(report.sup_conjugated)
    # oracle: tau(a u b u) on characters is delta(p + q + 2k = 0 mod N);
    # once 2k clears the low band the supremum drops to zero
    assert sups[1] < 1e-10 and sups[2] < 1e-10


def test_hypotheses_scale_invariance():
    alg = MatrixBlockAlgebra.matrix_with_trace(2)
    from freedecay.algebra import onb_complement

    comp = onb_complement(alg)
    u = alg.element([[[0, 1], [1, 0]]])
    r1 = orthogonality_hypotheses(comp, u, comp)
    r2 = orthogonality_hypotheses([c * 7.5 for c in comp], u, [c * 0.2 for c in comp])
    assert r1.sup_conjugated == pytest.approx(r2.sup_conjugated, abs=1e-10)
    assert r1.sup_mixed == pytest.approx(r2.sup_mixed, abs=1e-10)


# ---------------------------------------------------------------------------
# abelian classification
# ---------------------------------------------------------------------------


def test_classify_two_by_two_not_selfless():
    c = classify_abelian([Fraction(1, 2), Fraction(1, 2)], [Fraction(1, 2), Fraction(1, 2)])
    assert not c.selfless
    assert any("< 5" in r for r in c.reasons)
    assert any(">= 1" in r for r in c.reasons)


def test_classify_three_by_two_selfless():
    c = classify_abelian([Fraction(1, 3)] * 3, [Fraction(1, 2)] * 2)
    assert c.selfless
    assert c.reasons == []


def test_classify_heavy_atoms_not_selfless():
    c = classify_abelian(
        [Fraction(3, 5), Fraction(1, 5), Fraction(1, 5)], [Fraction(1, 2), Fraction(1, 2)]
    )
    assert not c.selfless
    assert any(">= 1" in r for r in c.reasons)


def test_classify_symmetric():
    import itertools

    weight_sets = [
        [Fraction(1, 2), Fraction(1, 2)],
        [Fraction(2, 3), Fraction(1, 3)],
        [Fraction(1, 3)] * 3,
        [Fraction(1, 4)] * 4,
    ]
    for wa, wb in itertools.product(weight_sets, repeat=2):
        assert classify_abelian(wa, wb).selfless == classify_abelian(wb, wa).selfless


def test_classify_rejects_bad_weights():
    with pytest.raises(AlgebraError):
        classify_abelian([Fraction(1, 2)], [Fraction(1, 2), Fraction(1, 2)])
    with pytest.raises(AlgebraError):
        classify_abelian([Fraction(1, 2), Fraction(1, 2)], [Fraction(3, 2), Fraction(-1, 2)])
