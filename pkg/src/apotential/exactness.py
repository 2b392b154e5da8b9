"""Rank analysis, pseudo-inverses and synthesis of exact operator pairs.

Sign convention: characteristic coefficients come from
``det(l*Id - H) = l^N + a_1 l^(N-1) + ... + a_N`` so that
``a_j = (-1)^j e_j`` with ``e_j`` the elementary symmetric functions of the
eigenvalues of ``H = A A^T``.  The generic rank is the largest ``j`` with
``a_j`` not identically zero, and the operator has constant rank iff
``e_r = (-1)^r a_r`` is positive away from the origin.
"""

from __future__ import annotations

import itertools
import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .diffop import DiffOp, op_from_symbol, symbol_of
from .interval import Interval, poly_range
from .polymat import (Poly, PolyMatrix, _q, char_poly_faddeev, content_normalize,
                      rank_exact)

log = logging.getLogger(__name__)

DEFAULT_MAX_DEPTH = 12


class NotConstantRank(ValueError):
    """Raised when an operator is known to drop rank at a nonzero frequency."""

    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class NonHomogeneousResult(RuntimeError):
    pass


class CompositionNonzero(ValueError):
    def __init__(self, msg, index=None, entry=None):
        super().__init__(msg)
        self.index = index
        self.entry = entry


class RankSumFailure(ValueError):
    def __init__(self, msg, xi=None, ranks=None):
        super().__init__(msg)
        self.xi = xi
        self.ranks = ranks


# -- certificates ----------------------------------------------------------

@dataclass(frozen=True)
class Certified:
    depth: int
    boxes: int = 0
    status: str = "certified"


@dataclass(frozen=True)
class Falsified:
    witness: tuple
    status: str = "falsified"


@dataclass(frozen=True)
class Inconclusive:
    min_sampled_value: float
    samples: int
    status: str = "inconclusive"


@dataclass
class RankReport:
    generic_rank: int
    a_coeffs: list
    certificate: object = field(default_factory=lambda: Inconclusive(float("nan"), 0))
    steps: list = field(default_factory=list, repr=False)

    @property
    def e_r(self) -> Poly:
        """``(-1)^r a_r``; positive off the origin iff constant rank."""
        r = self.generic_rank
        return self.a_coeffs[r] if r % 2 == 0 else -self.a_coeffs[r]


@dataclass
class ExactPair:
    annihilator: DiffOp
    potential: DiffOp
    symbolic_zero: bool
    rank_samples: list


# -- sampling helpers ------------------------------------------------------

def random_rational(rng: random.Random, bound=100):
    num = rng.choice([i for i in range(-bound, bound + 1) if i])
    den = rng.randint(1, bound)
    return _q(Fraction(num, den))


def random_point(rng, n, bound=100):
    return tuple(random_rational(rng, bound) for _ in range(n))


def rank_at(m: PolyMatrix, xi) -> int:
    return rank_exact(m.eval(xi))


# -- rank analysis ---------------------------------------------------------

def _gram(m: PolyMatrix) -> PolyMatrix:
    return m @ m.T


def symbol_rank(m: PolyMatrix) -> RankReport:
    coeffs, steps = char_poly_faddeev(_gram(m), return_steps=True)
    r = max((j for j, a in enumerate(coeffs) if not a.is_zero()), default=0)
    return RankReport(r, coeffs, steps=steps)


def generic_rank(a) -> RankReport:
    """Generic rank of the symbol and the characteristic coefficients of ``A A^T``."""
    m = symbol_of(a) if isinstance(a, DiffOp) else a
    return symbol_rank(m)


def _candidate_points(n, rng, budget):
    """Coordinate-subspace probes first, then random rational points."""
    count = 0
    for size in range(1, n + 1):
        for support in itertools.combinations(range(n), size):
            for signs in itertools.product((1, -1), repeat=size - 1):
                xi = [0] * n
                xi[support[0]] = 1
                for idx, s in zip(support[1:], signs):
                    xi[idx] = s
                yield tuple(xi)
                count += 1
                if count >= budget:
                    return
    while count < budget:
        yield random_point(rng, n)
        count += 1


def falsify_constant_rank(a, budget=200, seed=0, report: Optional[RankReport] = None):
    """Search for a nonzero rational frequency where the rank drops.

    Returns the witness tuple or ``None``.  Rank is computed exactly.
    """
    m = symbol_of(a) if isinstance(a, DiffOp) else a
    if report is None:
        report = symbol_rank(m)
    r = report.generic_rank
    if r == 0:
        return None
    rng = random.Random(seed)
    e_r = report.e_r
    for xi in _candidate_points(m.nvars, rng, budget):
        if e_r.eval(xi) == 0 and rank_at(m, xi) < r:
            return xi
    return None


def certify_constant_rank(a, max_depth=DEFAULT_MAX_DEPTH, report: Optional[RankReport] = None):
    """Decide positivity of ``e_r`` on the faces of ``[-1, 1]^n`` by branch and bound.

    Returns :class:`Certified`, :class:`Falsified` or :class:`Inconclusive`.
    """
    m = symbol_of(a) if isinstance(a, DiffOp) else a
    if report is None:
        report = symbol_rank(m)
    r = report.generic_rank
    n = m.nvars
    if r == 0:
        return Certified(0, 0)
    e_r = report.e_r
    one = Fraction(1)
    depth_used = 0
    boxes = 0
    min_seen = None
    samples = 0
    inconclusive = False
    for i in range(n):
        for s in (one, -one):
            stack = [(tuple(Interval(s) if j == i else Interval(-1, 1) for j in range(n)), 0)]
            while stack:
                box, depth = stack.pop()
                boxes += 1
                rng_ = poly_range(e_r, box)
                if rng_.lo > 0:
                    depth_used = max(depth_used, depth)
                    continue
                centre = tuple(_q(iv.mid) for iv in box)
                val = e_r.eval(centre)
                samples += 1
                min_seen = val if min_seen is None else min(min_seen, val)
                if val <= 0 and rank_at(m, centre) < r:
                    return Falsified(centre)
                for corner in _corners(box):
                    cv = e_r.eval(corner)
                    samples += 1
                    min_seen = min(min_seen, cv)
                    if cv <= 0 and rank_at(m, corner) < r:
                        return Falsified(corner)
                free = [j for j in range(n) if j != i]
                if depth >= max_depth or not free:
                    inconclusive = True
                    continue
                # bisect the widest free coordinate
                j = max(free, key=lambda j: box[j].width)
                mid = box[j].mid
                lo = box[:j] + (Interval(box[j].lo, mid),) + box[j + 1:]
                hi = box[:j] + (Interval(mid, box[j].hi),) + box[j + 1:]
                stack.append((hi, depth + 1))
                stack.append((lo, depth + 1))
    if inconclusive:
        return Inconclusive(float(min_seen), samples)
    return Certified(depth_used, boxes)


def _corners(box):
    return itertools.product(*[sorted({_q(iv.lo), _q(iv.hi)}) for iv in box])


# -- pseudo-inverse and synthesis ------------------------------------------

def pseudoinverse_symbol(m: PolyMatrix, report: Optional[RankReport] = None):
    """Decell's formula as ``(numerator, denominator)`` with ``M^+ = N / d``.

    The sign is fixed so that ``d = e_r`` (positive off the origin when the
    rank is constant).  For ``r = 0`` returns the zero matrix over 1.
    """
    if report is None:
        report = symbol_rank(m)
    r = report.generic_rank
    nv = m.nvars
    if r == 0:
        return PolyMatrix.zeros(m.cols, m.rows, nv), Poly.const(1, nv)
    s = report.steps[r - 1]  # M_r = sum_{i<r} a_i H^(r-1-i)
    num = m.T @ s
    # M^+ = -a_r^{-1} M^T S = ((-1)^(r+1) M^T S) / e_r
    if r % 2 == 0:
        num = -num
    return num, report.e_r


def projector_symbol(a, report: Optional[RankReport] = None):
    """``(numerator, d)`` with ``Id - A^+ A = numerator / d`` (numerator = e_r * P)."""
    m = symbol_of(a) if isinstance(a, DiffOp) else a
    if report is None:
        report = symbol_rank(m)
    nv = m.nvars
    if report.generic_rank == 0:
        return PolyMatrix.identity(m.cols, nv), Poly.const(1, nv)
    num, d = pseudoinverse_symbol(m, report)
    return PolyMatrix.scalar(d, m.cols) - num @ m, d


def _check_known_witness(report, m, check_budget, seed):
    if isinstance(report.certificate, Falsified):
        raise NotConstantRank("operator is not of constant rank",
                              witness=report.certificate.witness)
    if check_budget:
        w = falsify_constant_rank(m, budget=check_budget, seed=seed, report=report)
        if w is not None:
            raise NotConstantRank(f"rank drops at xi = {w}", witness=w)


def potential_symbol(m: PolyMatrix, report: Optional[RankReport] = None):
    """``a_r Id + A^T S A``, the polynomial form of ``a_r (Id - A^+ A)``."""
    if report is None:
        report = symbol_rank(m)
    r = report.generic_rank
    nv = m.nvars
    if r == 0:
        return PolyMatrix.identity(m.cols, nv)
    s = report.steps[r - 1]
    return PolyMatrix.scalar(report.a_coeffs[r], m.cols) + m.T @ s @ m


def annihilator_symbol(m: PolyMatrix, report: Optional[RankReport] = None):
    """``a_r Id + sum_{i<r} a_i H^(r-i)``, the polynomial form of ``a_r (Id - B B^+)``."""
    if report is None:
        report = symbol_rank(m)
    r = report.generic_rank
    nv = m.nvars
    if r == 0:
        return PolyMatrix.identity(m.rows, nv)
    h = _gram(m)
    s = report.steps[r - 1]
    return PolyMatrix.scalar(report.a_coeffs[r], m.rows) + h @ s


def _to_op(sym: PolyMatrix, degree: int) -> DiffOp:
    sym, _ = content_normalize(sym)
    try:
        return op_from_symbol(sym, expected_degree=degree)
    except ValueError as exc:
        raise NonHomogeneousResult(f"synthesized symbol is not {degree}-homogeneous: {exc}")


def potential(a: DiffOp, report: Optional[RankReport] = None, check_budget=64, seed=0) -> DiffOp:
    """Exact potential ``B`` with ``ker A(xi) = im B(xi)``; order ``2 k r``.

    For ``r = 0`` this is the identity operator of order 0.  A short exact
    falsification search runs first (``check_budget`` frequencies) and raises
    :class:`NotConstantRank` on a rank drop.
    """
    m = symbol_of(a)
    if report is None:
        report = symbol_rank(m)
    r = report.generic_rank
    if r == 0:
        return DiffOp.identity(a.n, a.dim_from)
    _check_known_witness(report, m, check_budget, seed)
    return _to_op(potential_symbol(m, report), 2 * a.k * r)


def annihilator(b: DiffOp, report: Optional[RankReport] = None, check_budget=64, seed=0) -> DiffOp:
    """Exact annihilator ``A`` with ``ker A(xi) = im B(xi)``; order ``2 l r``."""
    m = symbol_of(b)
    if report is None:
        report = symbol_rank(m)
    r = report.generic_rank
    if r == 0:
        return DiffOp.identity(b.n, b.dim_to)
    _check_known_witness(report, m, check_budget, seed)
    return _to_op(annihilator_symbol(m, report), 2 * b.k * r)


def verify_exact_pair(a: DiffOp, b: DiffOp, sample_count=100, seed=0) -> ExactPair:
    """Check ``A(xi) B(xi) = 0`` symbolically and rank-sum constancy at samples."""
    if a.dim_from != b.dim_to:
        raise ValueError(f"dim W mismatch: annihilator takes {a.dim_from}, "
                         f"potential gives {b.dim_to}")
    if a.n != b.n:
        raise ValueError("operators live on different spaces")
    sa, sb = symbol_of(a), symbol_of(b)
    prod = sa @ sb
    for i in range(prod.rows):
        for j in range(prod.cols):
            if not prod[i, j].is_zero():
                raise CompositionNonzero(
                    f"A(xi)B(xi) has nonzero entry ({i}, {j}): {prod[i, j]}",
                    index=(i, j), entry=prod[i, j])
    rng = random.Random(seed)
    dim_w = a.dim_from
    samples = []
    for _ in range(sample_count):
        xi = random_point(rng, a.n)
        ra, rb = rank_at(sa, xi), rank_at(sb, xi)
        if ra + rb != dim_w:
            raise RankSumFailure(
                f"rank A + rank B = {ra} + {rb} != {dim_w} at xi = {xi}", xi=xi, ranks=(ra, rb))
        samples.append((xi, ra, rb))
    return ExactPair(a, b, True, samples)


def potential_pair(a: DiffOp, sample_count=100, seed=0) -> ExactPair:
    """Synthesize the potential of ``a`` and verify the pair."""
    return verify_exact_pair(a, potential(a, seed=seed), sample_count, seed)


def analyze(a, max_depth=DEFAULT_MAX_DEPTH, falsify_budget=200, seed=0) -> RankReport:
    """Generic rank plus a certificate: falsification first, then branch and bound."""
    m = symbol_of(a) if isinstance(a, DiffOp) else a
    report = symbol_rank(m)
    w = falsify_constant_rank(m, budget=falsify_budget, seed=seed, report=report)
    if w is not None:
        report.certificate = Falsified(w)
    else:
        report.certificate = certify_constant_rank(m, max_depth=max_depth, report=report)
    return report
