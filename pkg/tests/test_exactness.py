import random
from fractions import Fraction

import pytest

from apotential.diffop import DiffOp, builtin, diag_operator, symbol_of
from apotential.exactness import (Certified, CompositionNonzero, Falsified, NotConstantRank,
                                  RankSumFailure, analyze, annihilator, certify_constant_rank,
                                  falsify_constant_rank, generic_rank, potential,
                                  pseudoinverse_symbol, random_point, rank_at,
                                  verify_exact_pair)
from apotential.polymat import Poly, PolyMatrix, random_poly

X1, X2 = Poly.var(0, 2), Poly.var(1, 2)

CONSTANT_RANK = [("grad_scalar", 2), ("grad_scalar", 3), ("div", 2), ("div", 3),
                 ("curl3d", 3), ("symgrad", 2), ("grad_vector", 2), ("curl2d_rowwise", 2),
                 ("laplacian", 2)]


def penrose_holds(m):
    num, d = pseudoinverse_symbol(m)
    mn, nm = m @ num, num @ m
    return (mn @ m == m.scale(d) and nm @ num == num.scale(d)
            and mn.T == mn and nm.T == nm)


def test_generic_rank_examples():
    rep = generic_rank(builtin("div", 2))
    assert rep.generic_rank == 1 and rep.a_coeffs[1] == -(X1 ** 2 + X2 ** 2)
    rep = generic_rank(builtin("grad_scalar", 2))
    assert rep.generic_rank == 1 and rep.a_coeffs[2].is_zero()
    assert generic_rank(builtin("zero", 2)).generic_rank == 0


@pytest.mark.parametrize("name,n", CONSTANT_RANK)
def test_coefficients_homogeneous(name, n):
    op = builtin(name, n)
    rep = generic_rank(op)
    for j, a in enumerate(rep.a_coeffs):
        assert a.is_zero() or a.is_homogeneous(2 * op.k * j)


def test_falsifier():
    assert falsify_constant_rank(diag_operator(2), budget=50) is not None
    w = falsify_constant_rank(diag_operator(2), budget=50)
    assert rank_at(symbol_of(diag_operator(2)), w) < 2 and any(w)
    assert falsify_constant_rank(builtin("div", 2), budget=300) is None
    assert falsify_constant_rank(builtin("zero", 2), budget=10) is None


def test_certifier():
    cert = certify_constant_rank(builtin("div", 2))
    assert isinstance(cert, Certified) and cert.depth == 0
    assert isinstance(certify_constant_rank(builtin("grad_scalar", 3)), Certified)
    cert = certify_constant_rank(diag_operator(2))
    assert isinstance(cert, Falsified)
    assert rank_at(symbol_of(diag_operator(2)), cert.witness) < 2
    assert analyze(diag_operator(2)).certificate.witness == (1, 0)


def test_pseudoinverse_examples():
    num, d = pseudoinverse_symbol(PolyMatrix([[X1, X2]]))
    assert num == PolyMatrix([[X1], [X2]]) and d == X1 ** 2 + X2 ** 2
    num, d = pseudoinverse_symbol(PolyMatrix.zeros(2, 3, 2))
    assert num.is_zero() and num.shape == (3, 2) and d == Poly.const(1, 2)
    num, d = pseudoinverse_symbol(PolyMatrix.identity(2, 2))
    assert num == PolyMatrix.identity(2, 2) and d == Poly.const(1, 2)


@pytest.mark.parametrize("name,n", CONSTANT_RANK + [("zero", 2)])
def test_penrose_builtins(name, n):
    assert penrose_holds(symbol_of(builtin(name, n)))


def test_penrose_random():
    rng = random.Random(11)
    for trial in range(20):
        rows, cols = rng.randint(1, 3), rng.randint(1, 3)
        m = PolyMatrix([[random_poly(rng, 2, 2, n_terms=2) for _ in range(cols)]
                        for _ in range(rows)])
        assert penrose_holds(m), trial


def test_potential_of_div():
    b = potential(builtin("div", 2))
    assert b.k == 2
    assert symbol_of(b) == PolyMatrix([[-X2 ** 2, X1 * X2], [X1 * X2, -X1 ** 2]])


def test_potential_of_zero_is_identity():
    b = potential(DiffOp.zero(2, 1, 3, 1))
    assert b.k == 0 and b == DiffOp.identity(2, 3)


def test_potential_of_grad_is_zero():
    b = potential(builtin("grad_scalar", 2))
    assert b.is_zero() and b.dim_from == 1 and b.dim_to == 1


def test_potential_rejects_diag():
    with pytest.raises(NotConstantRank) as exc:
        potential(diag_operator(2))
    assert exc.value.witness is not None


def test_annihilator_examples():
    a = annihilator(builtin("grad_scalar", 2))
    assert symbol_of(a) == PolyMatrix([[-X2 ** 2, X1 * X2], [X1 * X2, -X1 ** 2]])
    assert annihilator(DiffOp.identity(2, 2)).is_zero()
    a = annihilator(builtin("curl3d", 3))
    rng = random.Random(0)
    sym = symbol_of(a)
    for _ in range(100):
        assert rank_at(sym, random_point(rng, 3)) == 1
    verify_exact_pair(a, builtin("curl3d", 3), sample_count=20)


@pytest.mark.parametrize("name,n", CONSTANT_RANK)
def test_round_trip_and_rank_of_potential(name, n):
    a = builtin(name, n)
    r = generic_rank(a).generic_rank
    b = potential(a)
    assert b.is_zero() or all(e.is_zero() or e.is_homogeneous(2 * a.k * r)
                              for e in symbol_of(b).entries())
    pair = verify_exact_pair(a, b, sample_count=100, seed=1)
    assert pair.symbolic_zero
    assert all(rb == a.dim_from - r for _, _, rb in pair.rank_samples)


def test_verify_failures():
    pair = verify_exact_pair(builtin("div", 3), builtin("curl3d", 3))
    assert {(ra, rb) for _, ra, rb in pair.rank_samples} == {(1, 2)}
    with pytest.raises(CompositionNonzero) as exc:
        verify_exact_pair(builtin("div", 2), builtin("grad_scalar", 2))
    assert exc.value.entry == X1 ** 2 + X2 ** 2
    # A B = 0 but the image of B is too small
    with pytest.raises(RankSumFailure):
        verify_exact_pair(builtin("div", 2), DiffOp.zero(2, 1, 2, 2), sample_count=5)


def test_random_rationals_in_range():
    rng = random.Random(2)
    for _ in range(200):
        for x in random_point(rng, 3):
            x = Fraction(x)
            assert x != 0 and abs(x.numerator) <= 100 and 1 <= x.denominator <= 100
