"""Homogeneous constant-coefficient differential operators.

An operator of order ``k`` from ``R^dim_from`` to ``R^dim_to`` on ``R^n`` is

    A w = sum_{|alpha| = k} d^alpha A_alpha w

stored as ``{alpha: A_alpha}`` with exact rational ``dim_to x dim_from``
matrices.  Its symbol replaces ``d^alpha`` by the monomial ``xi^alpha`` (no
``2*pi*i`` factors; those are applied by the spectral layer).

Built-in operators and their conventions:

==================  ========  ==================  ==========================================
name                order     fields              convention
==================  ========  ==================  ==========================================
``grad_scalar``     1         R -> R^n            ``(grad u)_i = d_i u``
``grad_vector``     1         R^n -> R^(n x n)    ``(grad u)_{ij} = d_j u_i``, row-major
``div``             1         R^n -> R            ``div u = sum_i d_i u_i``
``curl3d``          1         R^3 -> R^3          right-handed: ``(d2 u3 - d3 u2, ...)``
``curl2d_rowwise``  1         R^(2x2) -> R^2      ``(d1 F_i2 - d2 F_i1)_i``, row-major F
``symgrad``         1         R^n -> R^(n x n)    ``(d_j u_i + d_i u_j) / 2``, row-major
``laplacian``       2         R -> R              ``sum_i d_i^2 u``
``zero``            1         R -> R              no terms
==================  ========  ==================  ==========================================
"""

from __future__ import annotations

from fractions import Fraction

from .polymat import Poly, PolyMatrix, _q, multi_indices


class NonHomogeneous(ValueError):
    pass


class DegreeMismatch(ValueError):
    pass


def _unit(n, i, scale=1):
    a = [0] * n
    a[i] = scale
    return tuple(a)


class DiffOp:
    """k-homogeneous linear operator with constant rational coefficients."""

    __slots__ = ("n", "k", "dim_from", "dim_to", "coeffs")

    def __init__(self, n, k, dim_from, dim_to, coeffs=None):
        if n < 1 or k < 0 or dim_from < 1 or dim_to < 1:
            raise ValueError("invalid operator dimensions")
        self.n = n
        self.k = k
        self.dim_from = dim_from
        self.dim_to = dim_to
        clean = {}
        for alpha, mat in (coeffs or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != n:
                raise ValueError(f"multi-index {alpha} has length {len(alpha)}, expected {n}")
            if any(a < 0 for a in alpha) or sum(alpha) != k:
                raise DegreeMismatch(f"|alpha| = {sum(alpha)} for alpha {alpha}, order is {k}")
            mat = tuple(tuple(_q(x) for x in row) for row in mat)
            if len(mat) != dim_to or any(len(r) != dim_from for r in mat):
                raise ValueError(
                    f"coefficient at {alpha} is not {dim_to} x {dim_from}")
            if any(x for r in mat for x in r):
                clean[alpha] = mat
        self.coeffs = dict(sorted(clean.items(), key=lambda t: (sum(t[0]), t[0]), reverse=True))

    @classmethod
    def identity(cls, n, dim):
        eye = [[1 if i == j else 0 for j in range(dim)] for i in range(dim)]
        return cls(n, 0, dim, dim, {(0,) * n: eye})

    @classmethod
    def zero(cls, n, k, dim_from, dim_to):
        return cls(n, k, dim_from, dim_to, {})

    def is_zero(self):
        return not self.coeffs

    def __eq__(self, other):
        if not isinstance(other, DiffOp):
            return NotImplemented
        return (self.n, self.k, self.dim_from, self.dim_to, self.coeffs) == (
            other.n, other.k, other.dim_from, other.dim_to, other.coeffs)

    def __hash__(self):
        return hash((self.n, self.k, self.dim_from, self.dim_to, tuple(self.coeffs.items())))

    def __repr__(self):
        return (f"DiffOp(n={self.n}, k={self.k}, {self.dim_from}->{self.dim_to}, "
                f"{len(self.coeffs)} terms)")

    def symbol(self):
        return symbol_of(self)


def symbol_of(op: DiffOp) -> PolyMatrix:
    """Symbol matrix: entry ``(i, j)`` is ``sum_alpha (A_alpha)_ij xi^alpha``."""
    n = op.n
    rows = [[{} for _ in range(op.dim_from)] for _ in range(op.dim_to)]
    for alpha, mat in op.coeffs.items():
        for i, r in enumerate(mat):
            for j, c in enumerate(r):
                if c:
                    rows[i][j][alpha] = c
    return PolyMatrix([[Poly(t, n) for t in r] for r in rows], n)


def op_from_symbol(m: PolyMatrix, expected_degree=None) -> DiffOp:
    """Inverse of :func:`symbol_of`.

    Every entry must be homogeneous of one common degree.  The zero matrix is
    accepted and given order ``expected_degree`` (or 0).
    """
    degs = set()
    for i in range(m.rows):
        for j in range(m.cols):
            e = m[i, j]
            d = e.degrees()
            if len(d) > 1:
                raise NonHomogeneous(f"entry ({i}, {j}) mixes degrees {sorted(d)}")
            degs |= d
    if len(degs) > 1:
        raise NonHomogeneous(f"entries have different degrees {sorted(degs)}")
    if degs:
        k = degs.pop()
        if expected_degree is not None and k != expected_degree:
            raise DegreeMismatch(f"symbol has degree {k}, expected {expected_degree}")
    else:
        k = expected_degree if expected_degree is not None else 0
    coeffs = {}
    for i in range(m.rows):
        for j in range(m.cols):
            for alpha, c in m[i, j]._terms.items():
                mat = coeffs.setdefault(alpha, [[0] * m.cols for _ in range(m.rows)])
                mat[i][j] = c
    return DiffOp(m.nvars, k, m.cols, m.rows, coeffs)


def compose(a: DiffOp, b: DiffOp) -> DiffOp:
    """``a o b`` via symbol multiplication."""
    if a.dim_from != b.dim_to or a.n != b.n:
        raise ValueError("operators are not composable")
    return op_from_symbol(symbol_of(a) @ symbol_of(b), expected_degree=a.k + b.k)


BUILTINS = ("grad_scalar", "grad_vector", "div", "curl3d", "curl2d_rowwise",
            "symgrad", "laplacian", "zero")


def builtin(name: str, n: int) -> DiffOp:
    if name not in BUILTINS:
        raise ValueError(f"unknown builtin operator {name!r}; choose from {', '.join(BUILTINS)}")
    if n < 1:
        raise ValueError("dimension must be positive")
    if name == "grad_scalar":
        return DiffOp(n, 1, 1, n, {
            _unit(n, i): [[1 if r == i else 0] for r in range(n)] for i in range(n)})
    if name == "grad_vector":
        coeffs = {}
        for j in range(n):
            mat = [[0] * n for _ in range(n * n)]
            for i in range(n):
                mat[i * n + j][i] = 1
            coeffs[_unit(n, j)] = mat
        return DiffOp(n, 1, n, n * n, coeffs)
    if name == "div":
        return DiffOp(n, 1, n, 1, {
            _unit(n, i): [[1 if c == i else 0 for c in range(n)]] for i in range(n)})
    if name == "curl3d":
        if n != 3:
            raise ValueError("curl3d requires n = 3")
        # (curl u)_i = eps_ijk d_j u_k
        coeffs = {}
        for j in range(3):
            mat = [[0] * 3 for _ in range(3)]
            for i in range(3):
                for k in range(3):
                    s = _levi_civita(i, j, k)
                    if s:
                        mat[i][k] = s
            coeffs[_unit(3, j)] = mat
        return DiffOp(3, 1, 3, 3, coeffs)
    if name == "curl2d_rowwise":
        if n != 2:
            raise ValueError("curl2d_rowwise requires n = 2")
        # F row-major: F_i1 at 2i, F_i2 at 2i+1
        d1 = [[0] * 4 for _ in range(2)]
        d2 = [[0] * 4 for _ in range(2)]
        for i in range(2):
            d1[i][2 * i + 1] = 1
            d2[i][2 * i] = -1
        return DiffOp(2, 1, 4, 2, {(1, 0): d1, (0, 1): d2})
    if name == "symgrad":
        half = Fraction(1, 2)
        coeffs = {}
        for j in range(n):
            mat = [[0] * n for _ in range(n * n)]
            for i in range(n):
                # (i, j) entry gets d_j u_i / 2, (j, i) entry gets d_j u_i / 2
                mat[i * n + j][i] += half
                mat[j * n + i][i] += half
            coeffs[_unit(n, j)] = mat
        return DiffOp(n, 1, n, n * n, coeffs)
    if name == "laplacian":
        return DiffOp(n, 2, 1, 1, {_unit(n, i, 2): [[1]] for i in range(n)})
    return DiffOp.zero(n, 1, 1, 1)


def _levi_civita(i, j, k):
    if len({i, j, k}) < 3:
        return 0
    return 1 if (i, j, k) in ((0, 1, 2), (1, 2, 0), (2, 0, 1)) else -1


def diag_operator(n: int) -> DiffOp:
    """``diag(d_1, ..., d_n)``: the standard example of a rank-dropping symbol."""
    return DiffOp(n, 1, n, n, {
        _unit(n, i): [[1 if r == c == i else 0 for c in range(n)] for r in range(n)]
        for i in range(n)})


def all_multi_indices(n, k):
    return multi_indices(n, k)
