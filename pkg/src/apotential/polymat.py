"""Exact sparse multivariate polynomials over Q and matrices of them.

Coefficients are kept as Python ints when integral and as
:class:`fractions.Fraction` otherwise; no floating point is used anywhere in
this module.  Polynomials and matrices are immutable values.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Iterable, Sequence


def _q(c):
    """Canonical coefficient: int when integral, Fraction otherwise."""
    if isinstance(c, int):
        return c
    c = Fraction(c)
    if c.denominator == 1:
        return c.numerator
    return c


def _grlex_key(alpha):
    return (sum(alpha), alpha)


class Poly:
    """Sparse polynomial in ``nvars`` variables with rational coefficients.

    ``terms`` maps exponent tuples to nonzero coefficients.  Iteration is in
    descending graded-lexicographic order.

    >>> x, y = Poly.var(0, 2), Poly.var(1, 2)
    >>> (x + y) * (x - y)
    Poly('x1^2 - x2^2')
    """

    __slots__ = ("nvars", "_terms", "_hash")

    def __init__(self, terms=None, nvars: int = 1):
        if nvars < 0:
            raise ValueError("nvars must be non-negative")
        self.nvars = nvars
        clean = {}
        if terms:
            for alpha, c in terms.items():
                alpha = tuple(int(a) for a in alpha)
                if len(alpha) != nvars:
                    raise ValueError(
                        f"multi-index {alpha} has length {len(alpha)}, expected {nvars}")
                if any(a < 0 for a in alpha):
                    raise ValueError(f"negative exponent in {alpha}")
                c = _q(c)
                if c:
                    clean[alpha] = clean.get(alpha, 0) + c
                    if not clean[alpha]:
                        del clean[alpha]
        self._terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, terms, nvars):
        # trusted constructor: terms already canonical and zero-free
        p = cls.__new__(cls)
        p.nvars = nvars
        p._terms = terms
        p._hash = None
        return p

    @classmethod
    def zero(cls, nvars):
        return cls._raw({}, nvars)

    @classmethod
    def const(cls, c, nvars):
        c = _q(c)
        return cls._raw({(0,) * nvars: c} if c else {}, nvars)

    @classmethod
    def var(cls, i, nvars):
        alpha = [0] * nvars
        alpha[i] = 1
        return cls._raw({tuple(alpha): 1}, nvars)

    @classmethod
    def monomial(cls, alpha, c=1, nvars=None):
        alpha = tuple(alpha)
        return cls({alpha: c}, len(alpha) if nvars is None else nvars)

    # -- inspection --------------------------------------------------------

    @property
    def terms(self):
        """Terms as a list of ``(alpha, coeff)`` in descending graded-lex order."""
        return sorted(self._terms.items(), key=lambda t: _grlex_key(t[0]), reverse=True)

    def coeff(self, alpha):
        return self._terms.get(tuple(alpha), 0)

    def is_zero(self):
        return not self._terms

    def __bool__(self):
        return bool(self._terms)

    def __len__(self):
        return len(self._terms)

    def degree(self):
        """Total degree; -1 for the zero polynomial."""
        return max((sum(a) for a in self._terms), default=-1)

    def degrees(self):
        return {sum(a) for a in self._terms}

    def is_homogeneous(self, degree=None):
        ds = self.degrees()
        if not ds:
            return True
        if len(ds) != 1:
            return False
        return degree is None or ds == {degree}

    def coefficients(self):
        return [c for _, c in self.terms]

    def leading_coeff(self):
        t = self.terms
        return t[0][1] if t else 0

    # -- arithmetic --------------------------------------------------------

    def _check(self, other):
        if self.nvars != other.nvars:
            raise ValueError(f"nvars mismatch: {self.nvars} vs {other.nvars}")

    def _coerce(self, other):
        if isinstance(other, Poly):
            self._check(other)
            return other
        if isinstance(other, (int, Fraction)):
            return Poly.const(other, self.nvars)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for a, c in other._terms.items():
            s = out.get(a, 0) + c
            if s:
                out[a] = _q(s) if isinstance(s, Fraction) else s
            else:
                out.pop(a, None)
        return Poly._raw(out, self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Poly._raw({a: -c for a, c in self._terms.items()}, self.nvars)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c):
        c = _q(c)
        if not c:
            return Poly.zero(self.nvars)
        if c == 1:
            return self
        return Poly._raw({a: _q(v * c) for a, v in self._terms.items()}, self.nvars)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        if not isinstance(other, Poly):
            return NotImplemented
        self._check(other)
        if not self._terms or not other._terms:
            return Poly.zero(self.nvars)
        out = {}
        get = out.get
        for a, ca in self._terms.items():
            for b, cb in other._terms.items():
                k = tuple(x + y for x, y in zip(a, b))
                out[k] = get(k, 0) + ca * cb
        return Poly._raw({a: _q(c) for a, c in out.items() if c}, self.nvars)

    def __rmul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        return NotImplemented

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise ValueError("exponent must be a non-negative int")
        out = Poly.const(1, self.nvars)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, Poly):
            return self.nvars == other.nvars and self._terms == other._terms
        if isinstance(other, (int, Fraction)):
            return self == Poly.const(other, self.nvars)
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.nvars, frozenset(self._terms.items())))
        return self._hash

    # -- evaluation --------------------------------------------------------

    def __call__(self, point):
        return self.eval(point)

    def eval(self, point):
        """Exact value at a point whose coordinates are ints or Fractions."""
        if len(point) != self.nvars:
            raise ValueError(f"point has length {len(point)}, expected {self.nvars}")
        point = [_q(x) for x in point]
        total = 0
        for a, c in self._terms.items():
            t = c
            for x, e in zip(point, a):
                if e:
                    t = t * x ** e
            total += t
        return _q(total)

    def substitute(self, i, value):
        """Fix variable ``i`` to a rational value, keeping ``nvars``."""
        value = _q(value)
        out = {}
        for a, c in self._terms.items():
            b = a[:i] + (0,) + a[i + 1:]
            out[b] = out.get(b, 0) + c * value ** a[i]
        return Poly(out, self.nvars)

    def diff(self, i):
        out = {}
        for a, c in self._terms.items():
            if a[i]:
                b = a[:i] + (a[i] - 1,) + a[i + 1:]
                out[b] = c * a[i]
        return Poly(out, self.nvars)

    # -- printing ----------------------------------------------------------

    def to_str(self, var="x"):
        if not self._terms:
            return "0"
        parts = []
        for a, c in self.terms:
            mono = "*".join(
                f"{var}{i + 1}" + (f"^{e}" if e > 1 else "")
                for i, e in enumerate(a) if e)
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            if mono:
                body = mono if mag == 1 else f"{mag}*{mono}"
            else:
                body = str(mag)
            parts.append((sign, body))
        s = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        for sign, body in parts[1:]:
            s += f" {sign} {body}"
        return s

    def __str__(self):
        return self.to_str()

    def __repr__(self):
        return f"Poly('{self.to_str()}')"


class PolyMatrix:
    """Dense ``rows x cols`` matrix of :class:`Poly` sharing ``nvars``."""

    __slots__ = ("rows", "cols", "nvars", "_entries")

    def __init__(self, entries: Sequence[Sequence[Poly]], nvars: int | None = None):
        entries = [list(r) for r in entries]
        if not entries or not entries[0]:
            raise ValueError("PolyMatrix needs at least one row and one column")
        cols = len(entries[0])
        if any(len(r) != cols for r in entries):
            raise ValueError("ragged rows")
        if nvars is None:
            nvars = next(e.nvars for r in entries for e in r if isinstance(e, Poly))
        out = []
        for r in entries:
            row = []
            for e in r:
                if not isinstance(e, Poly):
                    e = Poly.const(e, nvars)
                if e.nvars != nvars:
                    raise ValueError("entries must share nvars")
                row.append(e)
            out.append(tuple(row))
        self.rows = len(out)
        self.cols = cols
        self.nvars = nvars
        self._entries = tuple(out)

    @classmethod
    def zeros(cls, rows, cols, nvars):
        z = Poly.zero(nvars)
        return cls([[z] * cols for _ in range(rows)], nvars)

    @classmethod
    def identity(cls, size, nvars):
        return cls.scalar(Poly.const(1, nvars), size)

    @classmethod
    def scalar(cls, p: Poly, size):
        z = Poly.zero(p.nvars)
        return cls([[p if i == j else z for j in range(size)] for i in range(size)], p.nvars)

    @classmethod
    def from_rational(cls, values, nvars):
        return cls([[Poly.const(v, nvars) for v in row] for row in values], nvars)

    @property
    def shape(self):
        return (self.rows, self.cols)

    def __getitem__(self, ij):
        i, j = ij
        return self._entries[i][j]

    def row(self, i):
        return self._entries[i]

    def tolist(self):
        return [list(r) for r in self._entries]

    def entries(self):
        for r in self._entries:
            yield from r

    def is_zero(self):
        return all(e.is_zero() for e in self.entries())

    def degrees(self):
        out = set()
        for e in self.entries():
            out |= e.degrees()
        return out

    def __eq__(self, other):
        if not isinstance(other, PolyMatrix):
            return NotImplemented
        return self.shape == other.shape and self._entries == other._entries

    def __hash__(self):
        return hash(self._entries)

    def __repr__(self):
        body = "; ".join(", ".join(str(e) for e in r) for r in self._entries)
        return f"PolyMatrix([{body}])"

    # -- algebra -----------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, PolyMatrix):
            return NotImplemented
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch: {self.shape} vs {other.shape}")
        return PolyMatrix(
            [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(self._entries, other._entries)],
            self.nvars)

    def __neg__(self):
        return PolyMatrix([[-e for e in r] for r in self._entries], self.nvars)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        """Multiply every entry by a rational or a :class:`Poly`."""
        if isinstance(c, Poly):
            return PolyMatrix([[c * e for e in r] for r in self._entries], self.nvars)
        return PolyMatrix([[e.scale(c) for e in r] for r in self._entries], self.nvars)

    def __matmul__(self, other):
        if not isinstance(other, PolyMatrix):
            return NotImplemented
        if self.cols != other.rows:
            raise ValueError(f"cannot multiply {self.shape} by {other.shape}")
        if self.nvars != other.nvars:
            raise ValueError("nvars mismatch")
        zero = Poly.zero(self.nvars)
        cols = list(zip(*other._entries))
        out = []
        for r in self._entries:
            row = []
            for c in cols:
                acc = zero
                for a, b in zip(r, c):
                    if a._terms and b._terms:
                        acc = acc + a * b
                row.append(acc)
            out.append(row)
        return PolyMatrix(out, self.nvars)

    @property
    def T(self):
        return PolyMatrix([list(c) for c in zip(*self._entries)], self.nvars)

    def transpose(self):
        return self.T

    def trace(self):
        if self.rows != self.cols:
            raise ValueError("trace of a non-square matrix")
        acc = Poly.zero(self.nvars)
        for i in range(self.rows):
            acc = acc + self._entries[i][i]
        return acc

    def map(self, fn):
        return PolyMatrix([[fn(e) for e in r] for r in self._entries], self.nvars)

    def eval(self, point):
        """Exact substitution; returns a list of lists of rationals."""
        if len(point) != self.nvars:
            raise ValueError(f"point has length {len(point)}, expected {self.nvars}")
        return [[e.eval(point) for e in r] for r in self._entries]


def poly_arith(lhs, rhs, kind):
    """Dispatch ``add``/``mul``/``scale`` on two polynomials (or poly and scalar)."""
    if kind == "add":
        return lhs + rhs
    if kind == "mul":
        return lhs * rhs
    if kind == "scale":
        return lhs.scale(rhs)
    raise ValueError(f"unknown kind {kind!r}")


def mat_ops(a, b, kind):
    if kind == "mul":
        return a @ b
    if kind == "add":
        return a + b
    if kind == "transpose":
        return a.T
    raise ValueError(f"unknown kind {kind!r}")


def char_poly_faddeev(h: PolyMatrix, return_steps=False):
    """Characteristic coefficients of ``h`` by the Faddeev-LeVerrier recursion.

    Returns ``[a_0, ..., a_N]`` with ``det(l*Id - h) = sum a_j l^(N-j)`` and
    ``a_0 = 1``.  With ``return_steps`` also returns ``[M_1, ..., M_N]`` where
    ``M_k = sum_{i<k} a_i h^(k-1-i)``; Decell's pseudo-inverse formula reuses
    ``M_r``.
    """
    if h.rows != h.cols:
        raise ValueError(f"characteristic polynomial of non-square {h.shape} matrix")
    n = h.rows
    nv = h.nvars
    one = Poly.const(1, nv)
    ident = PolyMatrix.identity(n, nv)
    coeffs = [one]
    steps = []
    m = ident
    for k in range(1, n + 1):
        if k > 1:
            m = h @ m + PolyMatrix.scalar(coeffs[-1], n)
        steps.append(m)
        hm = h @ m
        coeffs.append(hm.trace().scale(Fraction(-1, k)))
    if return_steps:
        return coeffs, steps
    return coeffs


def det_cofactor(m: PolyMatrix):
    """Determinant by Laplace expansion along the first row (exponential; small sizes)."""
    if m.rows != m.cols:
        raise ValueError("determinant of a non-square matrix")
    return _det_rec(m.tolist(), m.nvars)


def _det_rec(rows, nv):
    n = len(rows)
    if n == 1:
        return rows[0][0]
    acc = Poly.zero(nv)
    for j in range(n):
        e = rows[0][j]
        if e.is_zero():
            continue
        sub = [r[:j] + r[j + 1:] for r in rows[1:]]
        term = e * _det_rec(sub, nv)
        acc = acc + term if j % 2 == 0 else acc - term
    return acc


def minors(m: PolyMatrix, d: int):
    """All ``d x d`` minors, rows and columns subsets in lexicographic order."""
    if not 1 <= d <= min(m.rows, m.cols):
        raise ValueError(f"minor order {d} out of range for {m.shape} matrix")
    ent = m.tolist()
    out = []
    for rs in itertools.combinations(range(m.rows), d):
        for cs in itertools.combinations(range(m.cols), d):
            out.append(_det_rec([[ent[i][j] for j in cs] for i in rs], m.nvars))
    return out


def eval_rational(m: PolyMatrix, point):
    return m.eval(point)


def _frac_gcd(values):
    # gcd of rationals p_i/q_i is gcd(p_i) / lcm(q_i)
    num = 0
    den = 1
    for v in values:
        v = Fraction(v)
        num = math.gcd(num, v.numerator)
        den = den * v.denominator // math.gcd(den, v.denominator)
    return Fraction(num, den)


def content(m: PolyMatrix):
    """Positive rational gcd of all coefficients (1 for the zero matrix)."""
    coeffs = [c for e in m.entries() for c in e._terms.values()]
    if not coeffs:
        return 1
    return _q(_frac_gcd(coeffs))


def content_normalize(m: PolyMatrix):
    """Divide out the scalar content; returns ``(normalized, content)``."""
    c = content(m)
    if c == 1:
        return m, 1
    return m.scale(Fraction(1) / c), c


def rank_exact(matrix) -> int:
    """Rank of a rational matrix by fraction-free (Bareiss) elimination."""
    rows = []
    for r in matrix:
        r = [Fraction(x) for x in r]
        den = 1
        for x in r:
            den = den * x.denominator // math.gcd(den, x.denominator)
        rows.append([int(x * den) for x in r])
    if not rows or not rows[0]:
        return 0
    nr, nc = len(rows), len(rows[0])
    rank = 0
    prev = 1
    for col in range(nc):
        piv = next((i for i in range(rank, nr) if rows[i][col]), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        p = rows[rank][col]
        for i in range(rank + 1, nr):
            ri = rows[i]
            f = ri[col]
            pr = rows[rank]
            for j in range(col + 1, nc):
                ri[j] = (p * ri[j] - f * pr[j]) // prev
            ri[col] = 0
        prev = p
        rank += 1
        if rank == nr:
            break
    return rank


def rational_matmul(a, b):
    return [[_q(sum(x * y for x, y in zip(r, c))) for c in zip(*b)] for r in a]


def rational_transpose(a):
    return [list(c) for c in zip(*a)]


def rational_identity(n):
    return [[1 if i == j else 0 for j in range(n)] for i in range(n)]


def random_poly(rng, nvars, max_degree, n_terms=3, coeff_range=5, homogeneous=None):
    """Random polynomial with small integer coefficients (test-data helper)."""
    if homogeneous is not None:
        monos = [a for a in _exponents(nvars, homogeneous)]
    else:
        monos = [a for d in range(max_degree + 1) for a in _exponents(nvars, d)]
    terms = {}
    for _ in range(n_terms):
        a = monos[rng.randrange(len(monos))]
        c = rng.randint(-coeff_range, coeff_range)
        terms[a] = terms.get(a, 0) + c
    return Poly(terms, nvars)


def _exponents(nvars, degree):
    """All multi-indices of length ``nvars`` and total degree ``degree``, grlex-descending."""
    if nvars == 0:
        return [()] if degree == 0 else []
    out = []
    for first in range(degree, -1, -1):
        for rest in _exponents(nvars - 1, degree - first):
            out.append((first,) + rest)
    return out


def multi_indices(nvars, degree):
    return _exponents(nvars, degree)


def parse_rational(text: str):
    """Parse ``p``, ``-p/q`` or decimal literal into an exact rational."""
    text = text.strip()
    try:
        return _q(Fraction(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational: {text!r}") from exc


def format_rational(c) -> str:
    c = Fraction(c)
    if c.denominator == 1:
        return str(c.numerator)
    return f"{c.numerator}/{c.denominator}"


def as_polymatrix(rows: Iterable[Iterable[Poly]]):
    return PolyMatrix(list(rows))
