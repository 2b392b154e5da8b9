import random

import pytest

from apotential.diffop import (BUILTINS, DegreeMismatch, DiffOp, NonHomogeneous, builtin,
                               compose, op_from_symbol, symbol_of)
from apotential.polymat import Poly, PolyMatrix, random_poly

X1, X2 = Poly.var(0, 2), Poly.var(1, 2)


def test_div_and_grad_symbols():
    assert symbol_of(builtin("div", 2)) == PolyMatrix([[X1, X2]])
    assert symbol_of(builtin("grad_scalar", 2)) == PolyMatrix([[X1], [X2]])
    x = [Poly.var(i, 3) for i in range(3)]
    assert symbol_of(builtin("grad_scalar", 3)) == PolyMatrix([[p] for p in x])


def test_zero_operator_symbol():
    z = builtin("zero", 2)
    assert z.k == 1 and symbol_of(z) == PolyMatrix.zeros(1, 1, 2)


def test_op_from_symbol_extracts_coefficients():
    b = PolyMatrix([[-X2 ** 2, X1 * X2], [X1 * X2, -X1 ** 2]])
    op = op_from_symbol(b)
    assert op.k == 2
    assert set(op.coeffs) == {(2, 0), (1, 1), (0, 2)}
    assert op.coeffs[(1, 1)] == ((0, 1), (1, 0))
    assert symbol_of(op) == b


def test_op_from_symbol_errors():
    with pytest.raises(NonHomogeneous):
        op_from_symbol(PolyMatrix([[X1 + 1]]))
    with pytest.raises(NonHomogeneous):
        op_from_symbol(PolyMatrix([[X1, X2 ** 2]]))
    with pytest.raises(DegreeMismatch):
        op_from_symbol(PolyMatrix([[X1]]), expected_degree=2)


def test_constructor_validation():
    with pytest.raises(DegreeMismatch):
        DiffOp(2, 1, 1, 1, {(1, 1): [[1]]})
    with pytest.raises(ValueError):
        DiffOp(2, 1, 2, 1, {(1, 0): [[1]]})
    with pytest.raises(ValueError):
        builtin("curl3d", 2)
    with pytest.raises(ValueError):
        builtin("rot", 2)


@pytest.mark.parametrize("name,n", [(b, n) for b in BUILTINS for n in (2, 3)
                                    if not (b == "curl3d" and n == 2)
                                    and not (b == "curl2d_rowwise" and n == 3)])
def test_builtins_homogeneous_and_round_trip(name, n):
    op = builtin(name, n)
    sym = symbol_of(op)
    for e in sym.entries():
        assert e.is_zero() or e.is_homogeneous(op.k)
    assert op_from_symbol(sym, expected_degree=op.k) == op


def test_classical_exact_pairs_compose_to_zero():
    curl, grad, div = builtin("curl3d", 3), builtin("grad_scalar", 3), builtin("div", 3)
    assert compose(curl, grad).is_zero()
    assert compose(div, curl).is_zero()
    assert compose(builtin("curl2d_rowwise", 2), builtin("grad_vector", 2)).is_zero()


def test_curl_sign_convention():
    # (curl u)_1 = d2 u3 - d3 u2
    c = builtin("curl3d", 3)
    assert c.coeffs[(0, 1, 0)][0] == (0, 0, 1)
    assert c.coeffs[(0, 0, 1)][0] == (0, -1, 0)


def test_random_round_trip():
    rng = random.Random(3)
    for _ in range(20):
        m = PolyMatrix([[random_poly(rng, 2, 0, homogeneous=2) for _ in range(2)]
                        for _ in range(3)])
        op = op_from_symbol(m, expected_degree=2)
        assert symbol_of(op) == m
        assert op_from_symbol(symbol_of(op), expected_degree=2) == op
