"""Compactly supported potentials reproducing the statistics of A-free sequences.

Fields here are sample arrays of shape ``(d, M, ..., M)`` on the midpoint grid
``x = (i + 1/2) / M`` of the unit cube.  They are extended periodically when a
Fourier multiplier is applied; because every multiplier is translation
invariant the half-cell offset against the torus grid of :mod:`spectral` is
immaterial.  All norms are L2 norms.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import ndimage

from .diffop import DiffOp
from .spectral import (apply_diffop, derivative_norms, inverse, project_afree,
                       recover_potential, sobolev_norm, transform)

log = logging.getLogger(__name__)


# -- cutoff profiles -------------------------------------------------------

@lru_cache(maxsize=None)
def smoothstep_coeffs(order: int):
    """Power-basis coefficients of the C^order smoothstep on [0, 1]."""
    l = order
    c = np.zeros(2 * l + 2)
    for k in range(l + 1):
        c[l + 1 + k] = math.comb(l + k, k) * math.comb(2 * l + 1, l - k) * (-1) ** k
    return c


@lru_cache(maxsize=None)
def _smoothstep_derivative_max(order: int, j: int):
    c = npoly.polyder(smoothstep_coeffs(order), j) if j else smoothstep_coeffs(order)
    t = np.linspace(0.0, 1.0, 20001)
    return float(np.max(np.abs(npoly.polyval(t, c))))


def smoothstep(t, order):
    t = np.clip(t, 0.0, 1.0)
    return npoly.polyval(t, smoothstep_coeffs(order))


@dataclass(frozen=True)
class CutoffProfile:
    """Tensor-product smoothstep: 1 at distance > margin from the cube boundary,
    exactly 0 within margin / 2 of it."""

    margin: float
    order: int = 2

    def __post_init__(self):
        if not 0.0 < self.margin < 0.5:
            raise ValueError(f"margin must lie in (0, 1/2), got {self.margin}")
        if self.order < 0:
            raise ValueError("smoothness order must be non-negative")

    def axis_profile(self, t):
        t = np.asarray(t, dtype=float)
        dist = np.minimum(t, 1.0 - t)
        half = 0.5 * self.margin
        s = (dist - half) / half
        out = smoothstep(s, self.order)
        # exact zeros on the band and exact ones in the interior
        out = np.where(dist <= half, 0.0, out)
        return np.where(dist >= self.margin, 1.0, out)

    def values(self, shape, midpoint=True):
        off = 0.5 if midpoint else 0.0
        out = np.ones(tuple(shape))
        for ax, m in enumerate(shape):
            prof = self.axis_profile((np.arange(m) + off) / m)
            sh = [1] * len(shape)
            sh[ax] = m
            out = out * prof.reshape(sh)
        return out

    def axis_constant(self):
        """``max_j 2^j sup|S^(j)|`` so that ``|phi^(j)| <= C1 margin^-j``, j <= order."""
        return max(2.0 ** j * _smoothstep_derivative_max(self.order, j)
                   for j in range(self.order + 1))

    def constant(self, n):
        """C with ``|grad^j rho| <= C margin^-j`` (Frobenius norm), ``j <= order``."""
        c1 = self.axis_constant()
        return max(n ** (j / 2) * c1 ** min(j, n) for j in range(self.order + 1))


def distance_to_boundary(shape, midpoint=True):
    off = 0.5 if midpoint else 0.0
    out = np.full(tuple(shape), np.inf)
    for ax, m in enumerate(shape):
        t = (np.arange(m) + off) / m
        sh = [1] * len(shape)
        sh[ax] = m
        out = np.minimum(out, np.minimum(t, 1.0 - t).reshape(sh))
    return out


def band_mask(shape, width):
    """Grid points within ``width`` of the cube boundary."""
    return distance_to_boundary(shape) <= width


# -- elementary steps ------------------------------------------------------

def truncate(w, alpha):
    """Radial truncation: ``w`` where ``|w| <= alpha``, ``alpha w / |w|`` elsewhere."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    w = np.asarray(w, dtype=float)
    norm = np.sqrt(np.sum(w * w, axis=0))
    factor = np.where(norm > alpha, alpha / np.where(norm > 0, norm, 1.0), 1.0)
    return w * factor


def cutoff_scale(norm_table: Sequence[float], min_margin=1.0 / 64):
    """``max_m norm_m^(1/(2m))`` for ``norm_table[m-1] = ||D^(l-m) u||``, clamped to (0, 1/4].

    If every norm vanishes the configured ``min_margin`` is returned.
    """
    norms = [float(x) for x in norm_table]
    if any(x < 0 for x in norms):
        raise ValueError("norms must be non-negative")
    if not norms or all(x == 0 for x in norms):
        return min_margin
    s = max(x ** (1.0 / (2 * m)) for m, x in enumerate(norms, start=1))
    return min(s, 0.25)


def smooth_cutoff(w, profile: CutoffProfile):
    w = np.asarray(w)
    return w * profile.values(w.shape[1:])


@lru_cache(maxsize=32)
def _bump_kernel(n, radius_cells):
    r = int(math.ceil(radius_cells))
    offs = np.arange(-r, r + 1)
    grids = np.meshgrid(*([offs] * n), indexing="ij")
    rho2 = sum(g.astype(float) ** 2 for g in grids) / radius_cells ** 2
    k = np.where(rho2 < 1.0, (1.0 - rho2) ** 3, 0.0)
    return k / k.sum()


def mollify(w, eps, spacing=None):
    """Periodic convolution with a normalized radial polynomial bump of radius ``eps``."""
    w = np.asarray(w, dtype=float)
    shape = w.shape[1:]
    h = spacing if spacing is not None else 1.0 / shape[0]
    if eps < 2 * h * (1 - 1e-12):
        raise ValueError(f"mollifier radius {eps} is below two grid spacings ({2 * h})")
    kern = _bump_kernel(len(shape), eps / h)
    return np.stack([ndimage.convolve(c, kern, mode="wrap") for c in w])


# -- diagnostics -----------------------------------------------------------

@dataclass
class SequenceDiagnostics:
    lp_norms: list
    residuals: list
    moments: np.ndarray
    alphas: list
    tail_mass: list
    p: float = 2.0

    def as_rows(self):
        rows = []
        for j, (nrm, res) in enumerate(zip(self.lp_norms, self.residuals)):
            rows.append({"index": j, "lp_norm": nrm, "residual": res,
                         **{f"phi{i}": float(v) for i, v in enumerate(self.moments[j])}})
        return rows


def default_integrands(d):
    """First and second moments: ``w_i`` then ``w_i w_k`` for ``i <= k``."""
    out = [(f"w{i + 1}", (lambda w, i=i: w[i])) for i in range(d)]
    for i in range(d):
        for k in range(i, d):
            out.append((f"w{i + 1}*w{k + 1}", (lambda w, i=i, k=k: w[i] * w[k])))
    return out


def ym_moments(fields, integrands=None, annihilator: Optional[DiffOp] = None,
               alphas=(1.0, 2.0, 4.0, 8.0, 16.0), p=2.0) -> SequenceDiagnostics:
    """Midpoint-rule statistics of a sequence of fields on the unit cube.

    ``integrands`` is a list of callables (or ``(name, callable)`` pairs) taking
    a ``(d, ...)`` array and returning the pointwise integrand.
    """
    fields = [np.asarray(f, dtype=float) for f in fields]
    if not fields:
        raise ValueError("empty sequence")
    d = fields[0].shape[0]
    if integrands is None:
        integrands = default_integrands(d)
    fns = [f[1] if isinstance(f, tuple) else f for f in integrands]
    moments = np.array([[float(np.mean(fn(w))) for fn in fns] for w in fields])
    norms = [float(np.mean(np.sum(w * w, axis=0) ** (p / 2)) ** (1 / p)) for w in fields]
    residuals = []
    for w in fields:
        if annihilator is None:
            residuals.append(float("nan"))
        else:
            aw = apply_diffop(annihilator, transform(w))
            residuals.append(sobolev_norm(aw, -annihilator.k))
    alphas = sorted(float(a) for a in alphas)
    tail = []
    for a in alphas:
        worst = 0.0
        for w in fields:
            mag = np.sqrt(np.sum(w * w, axis=0))
            worst = max(worst, float(np.mean(np.where(mag > a, mag ** p, 0.0))))
        tail.append(worst)
    return SequenceDiagnostics(norms, residuals, moments, alphas, tail, p)


# -- the pipeline ----------------------------------------------------------

@dataclass
class PipelineParams:
    """Knobs for :func:`compactify_sequence`; lengths in grid cells unless noted.

    The truncation level for element ``j`` (1-based) is
    ``alpha_factor * max_j ||w_j|| * alpha_ratio^j`` unless ``alphas`` is given.
    Both cutoff margins come from :func:`cutoff_scale` (at most ``max_margin``)
    and are floored at ``min_margin_cells`` grid cells so the profile stays
    resolved; the mollifier radius must stay below half the first margin.
    """

    alphas: Optional[list] = None
    alpha_factor: float = 4.0
    alpha_ratio: float = 2.0
    mollifier_cells: float = 2.0
    min_margin_cells: float = 4.0
    max_margin: float = 0.25
    cutoff_order: Optional[int] = None

    @classmethod
    def from_mapping(cls, cfg):
        out = cls()
        for key, val in cfg.items():
            if not hasattr(out, key):
                raise ValueError(f"unknown pipeline parameter {key!r}")
            if key == "alphas":
                val = [float(x) for x in str(val).split(",")] if val not in (None, "") else None
            elif key == "cutoff_order":
                val = int(val) if val not in (None, "", "auto") else None
            else:
                val = float(val)
            setattr(out, key, val)
        return out


@dataclass
class PipelineElement:
    u: np.ndarray
    bu: np.ndarray
    alpha: float
    scale_first: float
    margin_first: float
    scale_final: float
    margin_final: float
    afree_defect: float
    band_leakage: float
    band_width: float


def _norm_table(u_hat, order, s):
    dn = derivative_norms(u_hat, max(order - 1, 0), s=s)
    return [dn[order - m] for m in range(1, order + 1)]


def compactify_sequence(a: DiffOp, b: DiffOp, w_seq, params: Optional[PipelineParams] = None):
    """Truncate, cut off, mollify, project, recover a potential, cut off again.

    Returns one :class:`PipelineElement` per input field.  ``bu`` is exactly
    zero on the final boundary band ``dist <= margin_final / 2``.
    """
    params = params or PipelineParams()
    w_seq = [np.asarray(w, dtype=float) for w in w_seq]
    if not w_seq:
        return []
    shape = w_seq[0].shape[1:]
    if any(w.shape != w_seq[0].shape for w in w_seq):
        raise ValueError("all fields must share one grid")
    if w_seq[0].shape[0] != a.dim_from or b.dim_to != a.dim_from:
        raise ValueError("field fiber does not match the operator pair")
    h = 1.0 / shape[0]
    k, l = a.k, b.k
    order_first = params.cutoff_order if params.cutoff_order is not None else max(k, 2)
    order_final = params.cutoff_order if params.cutoff_order is not None else max(l, 2)
    lo = params.min_margin_cells * h
    eps = params.mollifier_cells * h
    base = max(float(np.sqrt(np.mean(np.sum(w * w, axis=0)))) for w in w_seq)
    out = []
    for j, w in enumerate(w_seq, start=1):
        if params.alphas is not None:
            alpha = float(params.alphas[(j - 1) % len(params.alphas)])
        else:
            alpha = params.alpha_factor * max(base, 1e-300) * params.alpha_ratio ** j
        # localize the input
        tw = truncate(w, alpha)
        s1 = cutoff_scale(_norm_table(transform(tw), k, -k), min_margin=lo) if k else lo
        d1 = float(np.clip(s1, lo, max(params.max_margin, lo)))
        wt = mollify(smooth_cutoff(tw, CutoffProfile(d1, order_first)), eps, h)
        # make it exactly A-free
        pw = project_afree(a, transform(wt))
        # periodic potential, then a compactly supported one
        u_hat = recover_potential(b, pw, subtract_mean=True)
        s3 = cutoff_scale(_norm_table(u_hat, l, 0), min_margin=lo) if l else lo
        d3 = float(np.clip(s3, lo, max(params.max_margin, lo)))
        prof = CutoffProfile(d3, order_final)
        u = smooth_cutoff(inverse(u_hat), prof)
        bu_hat = apply_diffop(b, transform(u))
        bu = inverse(bu_hat)
        norm_bu = bu_hat.l2_norm()
        defect = 0.0
        if norm_bu > 0:
            defect = (bu_hat - project_afree(a, bu_hat)).l2_norm() / norm_bu
        band = band_mask(shape, 0.5 * d3)
        leak = float(np.max(np.abs(bu[:, band]))) if band.any() else 0.0
        bu[:, band] = 0.0
        out.append(PipelineElement(u, bu, alpha, s1, d1, s3, d3, defect, leak, 0.5 * d3))
        log.debug("element %d: alpha=%.3g margins %.4g/%.4g defect %.2e", j, alpha, d1, d3, defect)
    return out


def oscillation_family(shape, indices, component=1, d=2):
    """``w_j = sin(2 pi j x_1) e_component`` on the midpoint grid (div-free for div)."""
    off = 0.5
    x1 = (np.arange(shape[0]) + off) / shape[0]
    sh = [1] * len(shape)
    sh[0] = shape[0]
    out = []
    for j in indices:
        w = np.zeros((d,) + tuple(shape))
        w[component] = np.broadcast_to(np.sin(2 * np.pi * j * x1).reshape(sh), shape)
        out.append(w)
    return out


def moment_errors(outputs, inputs, integrands=None):
    """Max absolute difference of moments between two sequences, per element."""
    mo = ym_moments(outputs, integrands).moments
    mi = ym_moments(inputs, integrands).moments
    return np.max(np.abs(mo - mi), axis=1)
