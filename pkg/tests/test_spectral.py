import io
import math
from fractions import Fraction

import numpy as np
import pytest

from apotential.diffop import builtin, diag_operator
from apotential.exactness import NotConstantRank, potential
from apotential.spectral import (NonZeroMean, NotAFree, TorusField, apply_diffop,
                                 exact_projector_checks, freq_grid, grid_points, inverse,
                                 load_afield_binary, project_afree, projector_grid,
                                 random_field, read_afield, recover_potential,
                                 save_afield_binary, sobolev_norm, transform, write_afield)

DIV = builtin("div", 2)
B_DIV = potential(DIV)


def coeff_at(field, comp, xi):
    idx = tuple(k % m for k, m in zip(xi, field.shape))
    return field.coeffs[(comp,) + idx]


def vector_field(*comps):
    return np.stack([np.asarray(c, dtype=float) for c in comps])


def test_constant_field():
    w = transform(np.full((1, 8, 8), 3.0))
    assert coeff_at(w, 0, (0, 0)) == pytest.approx(3.0)
    mask = np.ones((8, 8), bool)
    mask[0, 0] = False
    assert np.max(np.abs(w.coeffs[0][mask])) < 1e-15


def test_cosine_coefficients():
    x1, _ = grid_points((16, 16))
    w = transform(np.cos(2 * np.pi * x1)[None])
    for xi in ((1, 0), (-1, 0)):
        assert abs(coeff_at(w, 0, xi) - 0.5) < 1e-14
        w.coeffs[(0,) + tuple(k % 16 for k in xi)] = 0
    assert np.max(np.abs(w.coeffs)) < 1e-14


def test_round_trip_and_shape_errors():
    rng = np.random.default_rng(0)
    s = rng.standard_normal((3, 16, 16))
    assert np.max(np.abs(inverse(transform(s)) - s)) < 1e-12 * np.max(np.abs(s))
    with pytest.raises(ValueError):
        transform(np.zeros((1, 8, 16)))


def test_apply_div_and_grad():
    x1, x2 = grid_points((16, 16))
    w = transform(vector_field(np.cos(2 * np.pi * x1), 0 * x1))
    dw = apply_diffop(DIV, w)
    assert abs(coeff_at(dw, 0, (1, 0)) - np.pi * 1j) < 1e-12
    assert np.max(np.abs(inverse(dw)[0] + 2 * np.pi * np.sin(2 * np.pi * x1))) < 1e-12
    g = inverse(apply_diffop(builtin("grad_scalar", 2), transform(np.sin(2 * np.pi * x2)[None])))
    assert np.max(np.abs(g[0])) < 1e-12
    assert np.max(np.abs(g[1] - 2 * np.pi * np.cos(2 * np.pi * x2))) < 1e-12
    const = transform(np.ones((2, 8, 8)))
    assert np.max(np.abs(apply_diffop(DIV, const).coeffs)) < 1e-15
    with pytest.raises(ValueError):
        apply_diffop(DIV, transform(np.ones((3, 8, 8))))


def test_projection_examples():
    x1, _ = grid_points((16, 16))
    c = np.cos(2 * np.pi * x1)
    p = inverse(project_afree(DIV, transform(vector_field(c, 0 * c))))
    assert np.max(np.abs(p)) < 1e-14
    w = vector_field(0 * c, c)
    assert np.max(np.abs(inverse(project_afree(DIV, transform(w))) - w)) < 1e-14
    assert np.allclose(projector_grid(DIV, (8, 8))[:, :, 0, 0], np.eye(2))


def test_projector_exact_properties():
    for xi in ((1, 0), (3, -7), (Fraction(1, 2), 5)):
        assert exact_projector_checks(DIV, xi) == (True, True)
    assert exact_projector_checks(builtin("curl3d", 3), (1, 2, 3)) == (True, True)


def test_projection_rejects_rank_drop():
    with pytest.raises(NotConstantRank):
        project_afree(diag_operator(2), transform(np.ones((2, 8, 8))))


@pytest.mark.parametrize("method", ["exact", "svd"])
def test_projection_is_idempotent_and_afree(method):
    w = random_field((32, 32), 2, 10, seed=3)
    p = project_afree(DIV, w, method)
    pp = project_afree(DIV, p, method)
    assert (pp - p).l2_norm() <= 1e-10 * w.l2_norm()
    assert apply_diffop(DIV, p).l2_norm() <= 1e-8 * w.l2_norm()


def test_exact_and_svd_agree():
    w = random_field((16, 16), 4, 5, seed=4)
    for a in (builtin("symgrad", 2), builtin("curl2d_rowwise", 2)):
        if a.dim_from != 4:
            continue
        diff = project_afree(a, w, "exact") - project_afree(a, w, "svd")
        assert diff.l2_norm() < 1e-12 * w.l2_norm()


def test_recovery():
    w = project_afree(DIV, random_field((32, 32), 2, 10, seed=5))
    u = recover_potential(B_DIV, w, annihilator=DIV)
    assert (apply_diffop(B_DIV, u) - w).l2_norm() <= 1e-8 * w.l2_norm()
    assert np.max(np.abs(u.mean)) == 0


def test_recovery_checks():
    w = random_field((16, 16), 2, 4, seed=6)
    with pytest.raises(NotAFree):
        recover_potential(B_DIV, w, annihilator=DIV)
    shifted = project_afree(DIV, w)
    shifted.coeffs[:, 0, 0] = [1.0, 0.0]
    with pytest.raises(NonZeroMean):
        recover_potential(B_DIV, shifted)
    u = recover_potential(B_DIV, shifted, subtract_mean=True)
    shifted.coeffs[:, 0, 0] = 0
    assert (apply_diffop(B_DIV, u) - shifted).l2_norm() < 1e-10


def test_curl_potential_of_div3():
    w = project_afree(builtin("div", 3), random_field((8, 8, 8), 3, 3, seed=7))
    u = recover_potential(builtin("curl3d", 3), w)
    assert (apply_diffop(builtin("curl3d", 3), u) - w).l2_norm() < 1e-10 * w.l2_norm()


def test_hermitian_symmetry_kept():
    w = random_field((16, 16), 2, 7, seed=8)
    assert w.hermitian_defect() < 1e-12
    assert project_afree(DIV, w).hermitian_defect() < 1e-12
    assert recover_potential(B_DIV, project_afree(DIV, w)).hermitian_defect() < 1e-12


def test_sobolev_norm():
    x1, _ = grid_points((16, 16))
    w = transform(np.sin(2 * np.pi * x1)[None])
    assert sobolev_norm(w, 0) == pytest.approx(math.sqrt(0.5))
    assert sobolev_norm(w, -1) == pytest.approx(math.sqrt(0.5 / (1 + 4 * math.pi ** 2)))


def test_afield_round_trip(tmp_path):
    w = random_field((8, 8), 2, 3, seed=9)
    buf = io.StringIO()
    write_afield(w, buf)
    text = buf.getvalue()
    back = read_afield(io.StringIO(text))
    assert np.array_equal(back.coeffs, w.coeffs)
    buf2 = io.StringIO()
    write_afield(back, buf2)
    assert buf2.getvalue() == text
    save_afield_binary(w, tmp_path / "w.npz")
    assert np.array_equal(load_afield_binary(tmp_path / "w.npz").coeffs, w.coeffs)


def test_afield_errors():
    with pytest.raises(ValueError, match="header"):
        read_afield(io.StringIO("AFIELD 2\n"))
    bad = "AFIELD 1\nn=2 d=1 shape=4,4 real=1\nxi=(0,0): (1,0)\nxi=(9,0): (1,0)\n"
    with pytest.raises(ValueError, match="line 4"):
        read_afield(io.StringIO(bad))
