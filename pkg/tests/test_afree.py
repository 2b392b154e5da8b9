import numpy as np
import pytest

from apotential.afree import (CutoffProfile, PipelineParams, band_mask, compactify_sequence,
                              cutoff_scale, distance_to_boundary, moment_errors, mollify,
                              oscillation_family, smooth_cutoff, truncate, ym_moments)
from apotential.diffop import builtin
from apotential.exactness import potential
from apotential.spectral import apply_diffop, grid_points, inverse, transform

DIV = builtin("div", 2)
B_DIV = potential(DIV)


def test_truncate():
    w = np.array([3.0, 4.0]).reshape(2, 1)
    assert np.allclose(truncate(w, 2.0)[:, 0], [1.2, 1.6])
    rng = np.random.default_rng(0)
    f = rng.standard_normal((2, 8, 8))
    assert np.array_equal(truncate(f, 100.0), f)
    assert np.array_equal(truncate(np.zeros((2, 4, 4)), 1.0), np.zeros((2, 4, 4)))
    with pytest.raises(ValueError):
        truncate(f, 0.0)


def test_truncate_monotone_ladder():
    f = np.random.default_rng(1).standard_normal((2, 16, 16)) * 3
    norms = np.sqrt(np.sum(f * f, axis=0))
    errs = []
    for a in (0.5, 1, 2, 4, 8, 16):
        t = truncate(f, a)
        assert np.all(np.sqrt(np.sum(t * t, axis=0)) <= norms + 1e-15)
        errs.append(np.sqrt(np.mean(np.sum((t - f) ** 2, axis=0))))
    assert all(x >= y for x, y in zip(errs, errs[1:])) and errs[-1] == 0


def test_cutoff_scale():
    assert cutoff_scale([0.01]) == pytest.approx(0.1)
    assert cutoff_scale([0.04, 1e-8]) == pytest.approx(0.2)
    assert cutoff_scale([0.0, 0.0], min_margin=0.03) == 0.03
    assert cutoff_scale([100.0]) == 0.25
    vals = [cutoff_scale([x]) for x in (1e-2, 1e-4, 1e-6)]
    assert vals == sorted(vals, reverse=True)


def test_profile():
    prof = CutoffProfile(0.25, 2)
    shape = (64, 64)
    v = smooth_cutoff(np.ones((1,) + shape), prof)[0]
    dist = distance_to_boundary(shape)
    assert np.all(v[dist <= 0.125] == 0)
    assert np.all(v[dist > 0.25] == 1)
    assert np.all((v >= 0) & (v <= 1))
    with pytest.raises(ValueError):
        CutoffProfile(0.6)


def test_profile_derivative_bound():
    prof = CutoffProfile(0.25, 2)
    t = (np.arange(4096) + 0.5) / 4096
    phi = prof.axis_profile(t)
    c1 = prof.axis_constant()
    h = t[1] - t[0]
    d1 = np.gradient(phi, h)
    assert np.max(np.abs(d1)) <= c1 / 0.25 * 1.01


def test_mollify():
    c = np.full((2, 32, 32), 1.5)
    assert np.allclose(mollify(c, 2 / 32), c)
    spike = np.zeros((1, 32, 32))
    spike[0, 10, 10] = 1.0
    m = mollify(spike, 3 / 32)
    assert m.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.count_nonzero(m) > 9
    ys, xs = np.nonzero(m[0])
    assert max(np.abs(ys - 10).max(), np.abs(xs - 10).max()) <= 3
    f = np.random.default_rng(2).standard_normal((2, 32, 32))
    assert abs(mollify(f, 2 / 32).mean() - f.mean()) < 1e-12
    with pytest.raises(ValueError):
        mollify(f, 1 / 32)


def test_ym_moments():
    ws = oscillation_family((64, 64), [1, 2, 4])
    d = ym_moments(ws, [lambda w: w[1] ** 2, lambda w: w[1]], annihilator=DIV)
    assert np.allclose(d.moments[:, 0], 0.5, atol=1e-6)
    assert np.allclose(d.moments[:, 1], 0.0, atol=1e-12)
    assert max(d.residuals) < 1e-12
    assert all(x >= y for x, y in zip(d.tail_mass, d.tail_mass[1:]))
    c = np.zeros((2, 8, 8))
    c[0] = 2.0
    assert ym_moments([c], [lambda w: w[0] ** 3]).moments[0, 0] == pytest.approx(8.0)


def test_pipeline_zero_sequence():
    out = compactify_sequence(DIV, B_DIV, [np.zeros((2, 32, 32))])
    assert np.all(out[0].u == 0) and np.all(out[0].bu == 0)


def test_pipeline_band_zero_and_exactness():
    ws = oscillation_family((64, 64), [1, 2])
    for o in compactify_sequence(DIV, B_DIV, ws):
        band = band_mask((64, 64), o.band_width)
        assert np.all(o.bu[:, band] == 0)
        assert np.all(o.u[:, band] == 0)
        assert o.afree_defect <= 1e-8


def test_pipeline_keeps_moments_of_compact_afree_field():
    # w = B u for a smooth bump potential supported well inside the cube
    shape = (128, 128)
    x1, x2 = grid_points(shape, midpoint=True)
    r2 = ((x1 - 0.5) ** 2 + (x2 - 0.5) ** 2) / 0.25 ** 2
    bump = np.where(r2 < 1, (1 - r2) ** 6, 0.0)
    u = np.stack([bump * np.sin(2 * np.pi * x1), bump * np.cos(2 * np.pi * x2)])
    w = inverse(apply_diffop(B_DIV, transform(u)))
    w /= np.sqrt(np.mean(np.sum(w * w, axis=0)))
    out = compactify_sequence(DIV, B_DIV, [w])
    assert moment_errors([out[0].bu], [w])[0] < 5e-2


def test_params_from_mapping():
    p = PipelineParams.from_mapping({"alphas": "1,2", "mollifier_cells": "3"})
    assert p.alphas == [1.0, 2.0] and p.mollifier_cells == 3.0
    with pytest.raises(ValueError):
        PipelineParams.from_mapping({"bogus": 1})
