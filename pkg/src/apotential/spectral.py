"""Periodic fields on the unit torus and Fourier multipliers built from symbols.

Transform convention: ``w_hat(xi) = int_T w(x) exp(-2 pi i x.xi) dx`` for
``xi`` in ``Z^n``, approximated on the grid ``x = i / M`` by ``fftn / M^n``.
Coefficients are stored in numpy FFT order with the fiber axis first, i.e.
``coeffs.shape == (d, M_1, ..., M_n)``.

A k-th order operator acts as multiplication by ``(2 pi i)^k A(xi)``.  Symbol
values at lattice frequencies are computed in exact integer arithmetic and
rounded once to double precision.  For real fields the Nyquist planes
(``xi_i = -M/2``) are dropped by every multiplier, since a multiplier that is
not even in each coordinate cannot keep them Hermitian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .diffop import DiffOp, symbol_of
from .exactness import (NotConstantRank, projector_symbol, pseudoinverse_symbol,
                        symbol_rank)
from .polymat import Poly, PolyMatrix, rational_matmul

TWO_PI = 2.0 * math.pi


class NonZeroMean(ValueError):
    pass


class NotAFree(ValueError):
    pass


@dataclass
class TorusField:
    coeffs: np.ndarray
    real: bool = True

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.ndim < 2:
            raise ValueError("coeffs must have shape (d, M_1, ..., M_n)")

    @property
    def d(self):
        return self.coeffs.shape[0]

    @property
    def n(self):
        return self.coeffs.ndim - 1

    @property
    def shape(self):
        return self.coeffs.shape[1:]

    @property
    def mean(self):
        return self.coeffs[(slice(None),) + (0,) * self.n]

    def frequencies(self):
        return freq_grid(self.shape)

    def samples(self):
        return inverse(self)

    def copy(self):
        return TorusField(self.coeffs.copy(), self.real)

    def __add__(self, other):
        return TorusField(self.coeffs + other.coeffs, self.real and other.real)

    def __sub__(self, other):
        return TorusField(self.coeffs - other.coeffs, self.real and other.real)

    def l2_norm(self):
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def hermitian_defect(self):
        c = self.coeffs
        flipped = _negate_freq(c)
        return float(np.max(np.abs(c - np.conj(flipped)))) if c.size else 0.0


def _negate_freq(c):
    axes = tuple(range(1, c.ndim))
    return np.roll(np.flip(c, axis=axes), 1, axis=axes)


@lru_cache(maxsize=32)
def _freq_grid(shape):
    ks = [np.rint(np.fft.fftfreq(m, 1.0 / m)).astype(np.int64) for m in shape]
    return tuple(np.meshgrid(*ks, indexing="ij"))


def freq_grid(shape):
    """Integer frequency arrays ``(k_1, ..., k_n)`` in FFT order."""
    return _freq_grid(tuple(int(m) for m in shape))


def nyquist_mask(shape):
    """True on frequencies lying on a Nyquist plane of an even axis."""
    ks = freq_grid(shape)
    mask = np.zeros(tuple(shape), dtype=bool)
    for k, m in zip(ks, shape):
        if m % 2 == 0:
            mask |= k == -(m // 2)
    return mask


def grid_points(shape, midpoint=False):
    off = 0.5 if midpoint else 0.0
    axes = [(np.arange(m) + off) / m for m in shape]
    return np.meshgrid(*axes, indexing="ij")


def transform(samples, real=None) -> TorusField:
    """Forward transform of grid samples with shape ``(d, M_1, ..., M_n)``."""
    samples = np.asarray(samples)
    if samples.ndim < 2:
        raise ValueError("samples must have shape (d, M_1, ..., M_n)")
    shape = samples.shape[1:]
    if len(set(shape)) != 1:
        raise ValueError(f"grid sizes must agree along each axis, got {shape}")
    if real is None:
        real = not np.iscomplexobj(samples) or bool(np.all(samples.imag == 0))
    axes = tuple(range(1, samples.ndim))
    coeffs = np.fft.fftn(samples, axes=axes) / float(np.prod(shape))
    return TorusField(coeffs, real)


def inverse(field: TorusField):
    axes = tuple(range(1, field.coeffs.ndim))
    out = np.fft.ifftn(field.coeffs, axes=axes) * float(np.prod(field.shape))
    return out.real if field.real else out


# -- exact symbol evaluation on the lattice ------------------------------------

def _integer_scale(polys):
    """Positive integer making every coefficient of ``polys`` integral."""
    den = 1
    for p in polys:
        for c in p._terms.values():
            q = Fraction(c).denominator
            den = den * q // math.gcd(den, q)
    return den


def _eval_poly_grid(p: Poly, ks, cache):
    """Exact values of an integer-coefficient polynomial on the lattice (object array)."""
    shape = ks[0].shape
    total = np.zeros(shape, dtype=object)
    total[...] = 0
    for alpha, c in p._terms.items():
        term = None
        for i, e in enumerate(alpha):
            if not e:
                continue
            key = (i, e)
            if key not in cache:
                cache[key] = ks[i].astype(object) ** e
            term = cache[key] if term is None else term * cache[key]
        total = total + (c if term is None else term * c)
    return total


def eval_ratio_grid(num: PolyMatrix, den: Poly, shape):
    """``num(xi) / den(xi)`` at every lattice frequency, rounded once to float.

    Returns ``(values, den_values)`` where ``values`` has shape
    ``(rows, cols, *shape)`` and entries with ``den == 0`` are left as 0.
    """
    polys = list(num.entries()) + [den]
    scale = _integer_scale(polys)
    ks = freq_grid(shape)
    cache = {}
    dv = _eval_poly_grid(den.scale(scale), ks, cache)
    safe = np.where(dv == 0, 1, dv)
    out = np.zeros((num.rows, num.cols) + tuple(shape))
    for i in range(num.rows):
        for j in range(num.cols):
            e = num[i, j]
            if e.is_zero():
                continue
            nv = _eval_poly_grid(e.scale(scale), ks, cache)
            # int / int is correctly rounded
            out[i, j] = (nv / safe).astype(float)
    out[:, :, dv == 0] = 0.0
    return out, dv


def symbol_grid(op: DiffOp, shape):
    """Float values of ``op``'s symbol on the lattice (exact before rounding)."""
    sym = symbol_of(op)
    vals, _ = eval_ratio_grid(sym, Poly.const(1, op.n), shape)
    return vals


def _apply_multiplier(mult, coeffs):
    return np.einsum("ij...,j...->i...", mult, coeffs)


def _check_fiber(op_dim, field, what):
    if field.n == 0:
        raise ValueError("empty field")
    if op_dim != field.d:
        raise ValueError(f"fiber mismatch: {what} expects {op_dim} components, field has {field.d}")


def apply_diffop(op: DiffOp, w: TorusField) -> TorusField:
    """Multiply each coefficient by ``(2 pi i)^k A(xi)``."""
    _check_fiber(op.dim_from, w, "operator")
    if op.n != w.n:
        raise ValueError(f"operator lives in R^{op.n}, field on T^{w.n}")
    mult = symbol_grid(op, w.shape) * (2j * math.pi) ** op.k
    out = _apply_multiplier(mult, w.coeffs)
    if w.real:
        out[:, nyquist_mask(w.shape)] = 0
    return TorusField(out, w.real)


def projector_exact(a: DiffOp, xi):
    """Exact rational ``P(xi) = Id - A^+(xi) A(xi)`` at a rational frequency."""
    num, d = projector_symbol(a)
    dv = d.eval(xi)
    if dv == 0:
        raise NotConstantRank(f"projector undefined at xi = {xi}", witness=tuple(xi))
    return [[Fraction(x) / dv for x in row] for row in num.eval(xi)]


def projector_grid(a: DiffOp, shape, method="exact"):
    """Float ``P(xi)`` on the lattice; ``P(0)`` is the identity for order >= 1."""
    dim = a.dim_from
    if method == "svd":
        return _projector_grid_svd(a, shape)
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")
    num, d = projector_symbol(a)
    vals, dv = eval_ratio_grid(num, d, shape)
    zero = (0,) * len(shape)
    bad = np.argwhere(dv == 0)
    for idx in bad:
        if tuple(idx) == zero and a.k >= 1:
            continue
        xi = tuple(int(k[tuple(idx)]) for k in freq_grid(shape))
        raise NotConstantRank(f"rank drops at lattice frequency {xi}", witness=xi)
    if a.k >= 1:
        vals[(slice(None), slice(None)) + zero] = np.eye(dim)
    return vals


def _projector_grid_svd(a: DiffOp, shape):
    rank = symbol_rank(symbol_of(a)).generic_rank
    sym = symbol_grid(a, shape)
    dim = a.dim_from
    mats = np.moveaxis(sym.reshape(sym.shape[0], sym.shape[1], -1), -1, 0)
    _, _, vh = np.linalg.svd(mats)
    v = vh[:, :rank, :]
    p = np.eye(dim)[None] - np.einsum("kri,krj->kij", v, v)
    if a.k >= 1:
        p[0] = np.eye(dim)
    return np.moveaxis(p, 0, -1).reshape((dim, dim) + tuple(shape))


def project_afree(a: DiffOp, w: TorusField, method="exact") -> TorusField:
    """L2-orthogonal projection onto A-free fields; the mean passes through."""
    _check_fiber(a.dim_from, w, "annihilator")
    p = projector_grid(a, w.shape, method)
    out = _apply_multiplier(p, w.coeffs)
    if w.real:
        out[:, nyquist_mask(w.shape)] = 0
    return TorusField(out, w.real)


def recover_potential(b: DiffOp, w: TorusField, subtract_mean=False, annihilator=None,
                      tol=1e-8) -> TorusField:
    """Periodic ``u`` with ``B u = w - mean(w)``, via ``(2 pi i)^-l B^+(xi)``.

    When ``annihilator`` is given, ``w`` is first checked to be A-free to
    relative tolerance ``tol`` (distance to its projection).
    """
    _check_fiber(b.dim_to, w, "potential")
    mean = w.mean
    if np.max(np.abs(mean)) > 1e-10 and not subtract_mean:
        raise NonZeroMean(f"field has nonzero mean {mean}")
    if annihilator is not None:
        pw = project_afree(annihilator, w)
        resid = (w - pw)
        resid.coeffs[(slice(None),) + (0,) * w.n] = 0
        scale = max(w.l2_norm(), 1e-300)
        if resid.l2_norm() > tol * scale:
            raise NotAFree(f"field is not A-free: relative residual {resid.l2_norm() / scale:.3e}")
    num, d = pseudoinverse_symbol(symbol_of(b))
    vals, dv = eval_ratio_grid(num, d, w.shape)
    zero = (0,) * w.n
    if np.any((dv == 0) & ~_zero_mask(w.shape)):
        idx = tuple(np.argwhere((dv == 0) & ~_zero_mask(w.shape))[0])
        xi = tuple(int(k[idx]) for k in freq_grid(w.shape))
        raise NotConstantRank(f"potential symbol drops rank at {xi}", witness=xi)
    out = _apply_multiplier(vals, w.coeffs) / (2j * math.pi) ** b.k
    out[(slice(None),) + zero] = 0
    if w.real:
        out[:, nyquist_mask(w.shape)] = 0
    return TorusField(out, w.real)


def _zero_mask(shape):
    m = np.zeros(tuple(shape), dtype=bool)
    m[(0,) * len(shape)] = True
    return m


def sobolev_norm(w: TorusField, s: int) -> float:
    """``(sum |w_hat|^2 (1 + 4 pi^2 |xi|^2)^s)^(1/2)``."""
    ks = freq_grid(w.shape)
    xi2 = sum(k.astype(float) ** 2 for k in ks)
    weight = (1.0 + 4.0 * math.pi ** 2 * xi2) ** s
    return float(np.sqrt(np.sum(np.abs(w.coeffs) ** 2 * weight)))


def random_field(shape, d, band, seed=0, include_zero=False, amplitude=1.0) -> TorusField:
    """Real band-limited field with Gaussian coefficients for ``|xi|_inf <= band``."""
    shape = tuple(int(m) for m in shape)
    if any(band >= m / 2 for m in shape):
        raise ValueError(f"band {band} does not fit a grid of shape {shape}")
    rng = np.random.default_rng(seed)
    ks = freq_grid(shape)
    inside = np.ones(shape, dtype=bool)
    for k in ks:
        inside &= np.abs(k) <= band
    if not include_zero:
        inside &= ~_zero_mask(shape)
    c = rng.standard_normal((d,) + shape) + 1j * rng.standard_normal((d,) + shape)
    c = np.where(inside, c, 0) * amplitude
    c = 0.5 * (c + np.conj(_negate_freq(c)))
    return TorusField(c, True)


def derivative_norms(u: TorusField, max_order: int, s: int = 0):
    """``[||D^j u||_{H^s} for j = 0..max_order]`` with ``|D^j u|`` the full j-tensor."""
    ks = freq_grid(u.shape)
    xi2 = sum(k.astype(float) ** 2 for k in ks)
    weight = (1.0 + 4.0 * math.pi ** 2 * xi2) ** s
    energy = np.sum(np.abs(u.coeffs) ** 2, axis=0) * weight
    return [float(np.sqrt(np.sum(energy * (4.0 * math.pi ** 2 * xi2) ** j)))
            for j in range(max_order + 1)]


# -- AFIELD text format ----------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def write_afield(field: TorusField, fh):
    """Write the AFIELD text format to an open text stream."""
    fh.write("AFIELD 1\n")
    fh.write(f"n={field.n} d={field.d} shape={','.join(str(m) for m in field.shape)} "
             f"real={int(field.real)}\n")
    ks = freq_grid(field.shape)
    c = field.coeffs
    nz = np.any(c != 0, axis=0)
    entries = []
    for idx in zip(*np.nonzero(nz)):
        xi = tuple(int(k[idx]) for k in ks)
        entries.append((xi, idx))
    entries.sort()
    for xi, idx in entries:
        vec = c[(slice(None),) + idx]
        vals = " ".join(f"({_fmt(v.real)},{_fmt(v.imag)})" for v in vec)
        fh.write(f"xi=({','.join(str(k) for k in xi)}): {vals}\n")


def read_afield(fh) -> TorusField:
    lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0] != "AFIELD 1":
        raise ValueError("missing 'AFIELD 1' header")
    try:
        hdr = dict(tok.split("=", 1) for tok in lines[1].split())
        n, d = int(hdr["n"]), int(hdr["d"])
        shape = tuple(int(m) for m in hdr["shape"].split(","))
        real = hdr.get("real", "1") in ("1", "true", "True")
    except (KeyError, ValueError, IndexError) as exc:
        raise ValueError(f"malformed AFIELD header: {exc}") from exc
    if len(shape) != n:
        raise ValueError(f"shape {shape} does not match n={n}")
    coeffs = np.zeros((d,) + shape, dtype=complex)
    for lineno, ln in enumerate(lines[2:], start=3):
        try:
            head, body = ln.split(":", 1)
            head = head.strip()
            if not (head.startswith("xi=(") and head.endswith(")")):
                raise ValueError("expected xi=(k1,...,kn)")
            xi = tuple(int(t) for t in head[4:-1].split(","))
            if len(xi) != n:
                raise ValueError(f"frequency has {len(xi)} components, expected {n}")
            pairs = body.split()
            if len(pairs) != d:
                raise ValueError(f"expected {d} values, got {len(pairs)}")
            vec = []
            for p in pairs:
                if not (p.startswith("(") and p.endswith(")")):
                    raise ValueError(f"bad complex literal {p!r}")
                re_, im_ = p[1:-1].split(",")
                vec.append(complex(float(re_), float(im_)))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
        idx = []
        for k, m in zip(xi, shape):
            if not -(m // 2) <= k <= (m - 1) // 2:
                raise ValueError(f"line {lineno}: frequency {xi} outside shape {shape}")
            idx.append(k % m)
        coeffs[(slice(None),) + tuple(idx)] = vec
    return TorusField(coeffs, real)


def save_afield_binary(field: TorusField, path):
    np.savez(path, coeffs=field.coeffs, real=np.array(field.real))


def load_afield_binary(path) -> TorusField:
    with np.load(path) as z:
        return TorusField(z["coeffs"], bool(z["real"]))


def exact_projector_checks(a: DiffOp, xi):
    """``(P^2 == P, P^T == P)`` in exact arithmetic at ``xi``."""
    p = projector_exact(a, xi)
    return rational_matmul(p, p) == p, [list(r) for r in zip(*p)] == p


__all__ = [
    "TorusField", "NonZeroMean", "NotAFree", "transform", "inverse", "apply_diffop",
    "project_afree", "recover_potential", "sobolev_norm", "random_field", "freq_grid",
    "projector_exact", "projector_grid", "write_afield", "read_afield", "grid_points",
    "symbol_grid", "derivative_norms",
]
