"""Upper bounds on the B-quasiconvex envelope by direct search over test potentials.

For a potential operator ``B`` of order ``l`` the envelope is

    Q f(eta) = inf { mean over the cube of f(eta + B u) : u compactly supported },

so every admissible ``u`` gives an upper bound.  Test potentials are cut-off
trigonometric polynomials sampled on the midpoint grid; ``B u`` is taken by
spectral differentiation and the cube mean by the midpoint rule.

Integrand grammar (whitespace ignored)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" ["-"] INT)?
    atom    := NUMBER | "w" INT | BUILTIN | "quadratic" "(" matrix ")" | "(" expr ")"
    matrix  := "[" row ("," row)* "]"
    row     := "[" signed ("," signed)* "]"
    BUILTIN := "sqnorm" | "neg_sqnorm" | "det2"

Numbers are integers, decimals or ``p/q`` written with the division operator.
Division is only allowed by constant subexpressions, so every integrand is a
polynomial in ``w1 .. wd``.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

import numpy as np

from .afree import CutoffProfile, band_mask
from .diffop import DiffOp
from .polymat import multi_indices
from .spectral import apply_diffop, freq_grid, inverse, nyquist_mask, transform


# -- integrands ------------------------------------------------------------

class IntegrandSyntaxError(ValueError):
    def __init__(self, msg, offset):
        super().__init__(f"{msg} at offset {offset}")
        self.offset = offset


class UnknownIdentifier(IntegrandSyntaxError):
    pass


BUILTIN_INTEGRANDS = ("sqnorm", "neg_sqnorm", "det2")

_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d*)?|\.\d+)|([A-Za-z_][A-Za-z_0-9]*)|(.))")


def _tokenize(text):
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m.end() == pos or (m.group(0).strip() == "" and m.end() >= len(text)):
            break
        start = m.start(m.lastindex) if m.lastindex else m.end()
        if m.group(1) is not None:
            toks.append(("num", m.group(1), start))
        elif m.group(2) is not None:
            toks.append(("id", m.group(2), start))
        elif m.group(3) is not None:
            ch = m.group(3)
            if ch not in "+-*/^()[],":
                raise IntegrandSyntaxError(f"unexpected character {ch!r}", start)
            toks.append(("op", ch, start))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value, opener=None):
        t = self.take()
        if t[1] != value or t[0] == "end" and value:
            if opener is not None and t[0] == "end":
                raise IntegrandSyntaxError(f"unclosed {opener[1]!r}", opener[2])
            got = "end of input" if t[0] == "end" else repr(t[1])
            raise IntegrandSyntaxError(f"expected {value!r}, got {got}", t[2])
        return t

    def parse(self):
        node = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise IntegrandSyntaxError(f"unexpected {t[1]!r}", t[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = ("add" if op == "+" else "sub", node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            t = self.take()
            rhs = self.unary()
            if t[1] == "/":
                if not _is_constant(rhs):
                    raise IntegrandSyntaxError("division by a non-constant expression", t[2])
                if _const_value(rhs) == 0:
                    raise IntegrandSyntaxError("division by zero", t[2])
                node = ("div", node, rhs)
            else:
                node = ("mul", node, rhs)
        return node

    def unary(self):
        t = self.peek()
        if t[0] == "op" and t[1] == "-":
            self.take()
            return ("neg", self.unary())
        if t[0] == "op" and t[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        t = self.peek()
        if t[0] == "op" and t[1] == "^":
            self.take()
            sign = 1
            if self.peek()[1] == "-" and self.peek()[0] == "op":
                self.take()
                sign = -1
            e = self.take()
            if e[0] != "num" or not e[1].isdigit():
                raise IntegrandSyntaxError("exponent must be an integer", e[2])
            k = sign * int(e[1])
            if k < 0 and not _is_constant(base):
                raise IntegrandSyntaxError("negative power of a non-constant expression", e[2])
            return ("pow", base, k)
        return base

    def atom(self):
        t = self.take()
        kind, val, off = t
        if kind == "num":
            return ("const", Fraction(val))
        if kind == "op" and val == "(":
            try:
                node = self.expr()
            except IntegrandSyntaxError as exc:
                # running out of input inside parentheses is reported at the '('
                if exc.offset >= len(self.text.rstrip()):
                    raise IntegrandSyntaxError("unclosed '('", off) from None
                raise
            self.expect(")", opener=t)
            return node
        if kind == "id":
            m = re.fullmatch(r"w(\d+)", val)
            if m and int(m.group(1)) >= 1:
                return ("var", int(m.group(1)) - 1)
            if val in BUILTIN_INTEGRANDS:
                return ("builtin", val)
            if val == "quadratic":
                op = self.expect("(")
                mat = self.matrix()
                self.expect(")", opener=op)
                return ("quadratic", mat)
            raise UnknownIdentifier(f"unknown identifier {val!r}", off)
        if kind == "end":
            raise IntegrandSyntaxError("unexpected end of input", off)
        raise IntegrandSyntaxError(f"unexpected {val!r}", off)

    def signed(self):
        t = self.take()
        sign = 1
        if t[0] == "op" and t[1] in "+-":
            sign = -1 if t[1] == "-" else 1
            t = self.take()
        if t[0] != "num":
            raise IntegrandSyntaxError("expected a number", t[2])
        val = Fraction(t[1])
        if self.peek()[1] == "/" and self.peek()[0] == "op":
            self.take()
            q = self.take()
            if q[0] != "num" or Fraction(q[1]) == 0:
                raise IntegrandSyntaxError("expected a nonzero denominator", q[2])
            val /= Fraction(q[1])
        return sign * val

    def matrix(self):
        opener = self.expect("[")
        rows = [self.row()]
        while self.peek()[1] == ",":
            self.take()
            rows.append(self.row())
        self.expect("]", opener=opener)
        if len({len(r) for r in rows}) != 1:
            raise IntegrandSyntaxError("ragged matrix literal", opener[2])
        if len(rows) != len(rows[0]):
            raise IntegrandSyntaxError("quadratic form matrix must be square", opener[2])
        return tuple(rows)

    def row(self):
        opener = self.expect("[")
        vals = [self.signed()]
        while self.peek()[1] == ",":
            self.take()
            vals.append(self.signed())
        self.expect("]", opener=opener)
        return tuple(vals)


def _is_constant(node):
    tag = node[0]
    if tag == "const":
        return True
    if tag in ("var", "builtin", "quadratic"):
        return False
    if tag in ("neg",):
        return _is_constant(node[1])
    if tag == "pow":
        return _is_constant(node[1])
    return _is_constant(node[1]) and _is_constant(node[2])


def _const_value(node):
    return _eval(node, ())


def _degree(node):
    tag = node[0]
    if tag == "const":
        return 0
    if tag == "var":
        return 1
    if tag in ("builtin", "quadratic"):
        return 2
    if tag == "neg":
        return _degree(node[1])
    if tag == "pow":
        return _degree(node[1]) * node[2] if node[2] > 0 else 0
    if tag in ("add", "sub"):
        return max(_degree(node[1]), _degree(node[2]))
    if tag == "mul":
        return _degree(node[1]) + _degree(node[2])
    return _degree(node[1])


def _fiber_dim(node):
    tag = node[0]
    if tag == "var":
        return node[1] + 1
    if tag == "builtin":
        return 4 if node[1] == "det2" else 0
    if tag == "quadratic":
        return len(node[1])
    if tag == "const":
        return 0
    if tag in ("neg", "pow"):
        return _fiber_dim(node[1])
    return max(_fiber_dim(node[1]), _fiber_dim(node[2]))


def _eval(node, w):
    tag = node[0]
    if tag == "const":
        return node[1]
    if tag == "var":
        return w[node[1]]
    if tag == "neg":
        return -_eval(node[1], w)
    if tag == "add":
        return _eval(node[1], w) + _eval(node[2], w)
    if tag == "sub":
        return _eval(node[1], w) - _eval(node[2], w)
    if tag == "mul":
        return _eval(node[1], w) * _eval(node[2], w)
    if tag == "div":
        return _eval(node[1], w) * (1 / _const_value(node[2]))
    if tag == "pow":
        base = _eval(node[1], w)
        return base ** node[2] if node[2] >= 0 else 1 / base ** (-node[2])
    if tag == "quadratic":
        q = node[1]
        total = 0
        for i, row in enumerate(q):
            for j, c in enumerate(row):
                if c:
                    total = total + _coef(c, w[i]) * w[i] * w[j]
        return total
    name = node[1]
    if name in ("sqnorm", "neg_sqnorm"):
        total = 0
        for x in w:
            total = total + x * x
        return total if name == "sqnorm" else -total
    if len(w) != 4:
        raise ValueError(f"det2 needs a 4-component fiber, got {len(w)}")
    return w[0] * w[3] - w[1] * w[2]


def _coef(c, like):
    # keep exact arithmetic on rationals, floats on arrays
    return c if isinstance(like, (int, Fraction)) else float(c)


def _to_str(node):
    tag = node[0]
    if tag == "const":
        return str(node[1])
    if tag == "var":
        return f"w{node[1] + 1}"
    if tag == "builtin":
        return node[1]
    if tag == "quadratic":
        return "quadratic([" + ",".join(
            "[" + ",".join(str(c) for c in r) + "]" for r in node[1]) + "])"
    if tag == "neg":
        return f"(-{_to_str(node[1])})"
    if tag == "pow":
        return f"{_to_str(node[1])}^{node[2]}"
    sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[tag]
    return f"({_to_str(node[1])} {sym} {_to_str(node[2])})"


@dataclass(frozen=True)
class Integrand:
    """Polynomial integrand ``f(w)`` with declared growth exponent ``p``.

    Calling with a sequence of Fractions is exact; calling with an array of
    shape ``(d, ...)`` evaluates pointwise in floating point.  Built-ins that
    sum over the fiber (``sqnorm``) use the full fiber they are given.
    """

    name: str
    tree: tuple
    p: int
    min_dim: int

    def __call__(self, w):
        if len(w) < self.min_dim:
            raise ValueError(f"integrand {self.name!r} needs at least {self.min_dim} components")
        if isinstance(w, np.ndarray):
            w = [np.asarray(c, dtype=float) for c in w]
            out = _eval(self.tree, w)
            return np.broadcast_to(np.asarray(out, dtype=float), w[0].shape) if w else out
        return _eval(self.tree, [Fraction(x) for x in w])

    def expression(self):
        return _to_str(self.tree)

    def growth_constant(self, radius):
        """Crude ``c`` with ``|f(w)| <= c (1 + |w|^p)`` on ``|w| <= radius``, by sampling."""
        d = max(self.min_dim, 1)
        rng = np.random.default_rng(0)
        pts = rng.standard_normal((d, 4096))
        pts *= radius * rng.random(4096) / np.maximum(np.linalg.norm(pts, axis=0), 1e-300)
        vals = np.abs(self(pts))
        return float(np.max(vals / (1.0 + np.linalg.norm(pts, axis=0) ** self.p)))


def parse_integrand(text: str) -> Integrand:
    tree = _Parser(text).parse()
    return Integrand(text.strip(), tree, _degree(tree), _fiber_dim(tree))


# -- test potentials -------------------------------------------------------

MIN_OVERSAMPLING = 4


def half_lattice(n, m_max):
    """Nonzero ``m`` with ``|m|_inf <= m_max`` whose first nonzero entry is positive."""
    out = []
    for m in itertools.product(range(-m_max, m_max + 1), repeat=n):
        nz = [x for x in m if x]
        if nz and nz[0] > 0:
            out.append(m)
    return out


def _check_resolution(shape, m_max):
    need = MIN_OVERSAMPLING * 2 * max(m_max, 1)
    if any(s < need for s in shape):
        raise ValueError(
            f"grid {tuple(shape)} does not resolve modes up to {m_max} with "
            f"{MIN_OVERSAMPLING}x oversampling (need {need} points per axis)")


@dataclass(frozen=True)
class TestPotential:
    """``u = amplitude * scale * rho * sum_m (a_m cos 2 pi m.x + b_m sin 2 pi m.x)``,
    tiled ``tiles`` times per axis.

    ``coeffs`` has shape ``(dim, 1 + 2 * len(modes))``: the constant mode then
    cosine/sine pairs.  The base grid is ``shape``; the realized grid is
    ``shape * tiles``.
    """

    __test__ = False

    shape: tuple
    m_max: int
    coeffs: np.ndarray
    margin: float = 0.125
    order: int = 3
    amplitude: float = 1.0
    seed: Optional[int] = None
    tiles: int = 1
    scale: float = 1.0

    @property
    def n(self):
        return len(self.shape)

    @property
    def dim(self):
        return self.coeffs.shape[0]

    @property
    def grid(self):
        return tuple(s * self.tiles for s in self.shape)

    def modes(self):
        return half_lattice(self.n, self.m_max)

    def profile(self):
        return CutoffProfile(self.margin, self.order)

    def base_samples(self):
        x = [(np.arange(s) + 0.5) / s for s in self.shape]
        xs = np.meshgrid(*x, indexing="ij")
        basis = [np.ones(self.shape)]
        for m in self.modes():
            phase = 2 * math.pi * sum(mi * xi for mi, xi in zip(m, xs))
            basis.append(np.cos(phase))
            basis.append(np.sin(phase))
        basis = np.stack(basis)
        u = np.tensordot(self.coeffs, basis, axes=(1, 0)) * self.amplitude
        return u * self.profile().values(self.shape)

    def samples(self):
        u = self.base_samples()
        if self.tiles > 1:
            u = np.tile(u, (1,) + (self.tiles,) * self.n)
        return u * self.scale if self.scale != 1.0 else u

    def field(self, b: DiffOp):
        """Samples of ``B u`` by spectral differentiation."""
        if b.dim_from != self.dim or b.n != self.n:
            raise ValueError("operator does not act on this potential")
        return inverse(apply_diffop(b, transform(self.samples(), real=True)))


def _basis_size(n, m_max):
    return 1 + 2 * len(half_lattice(n, m_max))


def _normalization(n, m_max, l):
    # keeps |B u| of order amplitude regardless of m_max and operator order
    return 1.0 / ((2 * math.pi * max(m_max, 1)) ** l * math.sqrt(_basis_size(n, m_max)))


def gen_test_potential(shape, m_max, amplitude=1.0, seed=0, dim=1, order_l=1,
                       margin=0.125, cutoff_order=None) -> TestPotential:
    shape = tuple(int(s) for s in shape)
    _check_resolution(shape, m_max)
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((dim, _basis_size(len(shape), m_max)))
    c *= _normalization(len(shape), m_max, order_l)
    order = cutoff_order if cutoff_order is not None else order_l + 2
    return TestPotential(shape, m_max, c, margin, order, float(amplitude), seed)


def rescale_potential(u: TestPotential, n_tiles: int, l: int) -> TestPotential:
    """``u_N(x) = N^-l u(N x)`` realized as an N-fold tiling of the sample grid."""
    if n_tiles < 1:
        raise ValueError("N must be a positive integer")
    if n_tiles == 1:
        return u
    return replace(u, tiles=u.tiles * n_tiles, scale=u.scale * float(n_tiles) ** (-l))


def spectral_derivatives(samples, j):
    """All partial derivatives of order ``j``: array ``(dim, #alpha, ...)``."""
    samples = np.asarray(samples, dtype=float)
    shape = samples.shape[1:]
    n = len(shape)
    if j == 0:
        return samples[:, None]
    hat = transform(samples, real=True).coeffs
    ks = freq_grid(shape)
    nyq = nyquist_mask(shape)
    out = []
    for alpha in multi_indices(n, j):
        mult = np.ones(shape, dtype=complex)
        for k, a in zip(ks, alpha):
            if a:
                mult = mult * (2j * math.pi * k) ** a
        mult[nyq] = 0
        axes = tuple(range(1, n + 1))
        vals = np.fft.ifftn(hat * mult, axes=axes).real * float(np.prod(shape))
        out.append(vals)
    return np.stack(out, axis=1)


def _tensor_norm(derivs, j):
    # Frobenius norm of the full symmetric j-tensor, counting each alpha with
    # its multinomial multiplicity
    n = derivs.ndim - 2
    weights = np.array([math.factorial(j) / math.prod(math.factorial(a) for a in alpha)
                        for alpha in multi_indices(n, j)])
    w = weights.reshape((1, -1) + (1,) * n)
    return np.sqrt(np.sum(derivs ** 2 * w, axis=(0, 1)))


def sup_norms(u: TestPotential, max_order):
    """Discrete ``||grad^j u||_inf`` for ``j = 0..max_order`` on the realized grid."""
    s = u.samples()
    return [float(np.max(_tensor_norm(spectral_derivatives(s, j), j)))
            for j in range(max_order + 1)]


def holder_quotient(u: TestPotential, l: int, alpha=0.5, radius=None):
    """Discrete Hoelder quotient of ``grad^(l-1) u`` over grid pairs with offsets up to ``radius`` cells."""
    s = u.samples()
    g = spectral_derivatives(s, l - 1)
    grid = s.shape[1:]
    n = len(grid)
    h = 1.0 / grid[0]
    if radius is None:
        radius = max(1, grid[0] // (2 * u.tiles))
    best = 0.0
    for off in itertools.product(range(-radius, radius + 1), repeat=n):
        nz = [x for x in off if x]
        if not nz or nz[0] < 0:
            continue
        shifted = g
        for ax, o in enumerate(off):
            if o:
                shifted = np.roll(shifted, -o, axis=ax + 2)
        # drop pairs that wrap around the torus
        valid = np.ones(grid, dtype=bool)
        for ax, o in enumerate(off):
            idx = np.arange(grid[ax])
            ok = (idx + o >= 0) & (idx + o < grid[ax])
            sh = [1] * n
            sh[ax] = grid[ax]
            valid &= ok.reshape(sh)
        diff = np.sqrt(np.sum((shifted - g) ** 2, axis=(0, 1)))
        dist = h * math.sqrt(sum(o * o for o in off))
        q = float(np.max(np.where(valid, diff, 0.0))) / dist ** alpha
        best = max(best, q)
    return best


def holder_bound(u_base: TestPotential, n_tiles, l, alpha=0.5):
    """``2^(1-alpha) (sqrt(n) / N)^(1-alpha) ||grad^l u||_inf`` for the rescaled ``u_N``."""
    top = sup_norms(u_base, l)[l]
    return 2 ** (1 - alpha) * (math.sqrt(u_base.n) / n_tiles) ** (1 - alpha) * top


# -- envelope search -------------------------------------------------------

def cube_average(f: Integrand, eta, bu):
    eta = np.asarray(eta, dtype=float).reshape((-1,) + (1,) * (bu.ndim - 1))
    return float(np.mean(f(eta + bu)))


@dataclass
class EnvelopeResult:
    value: float
    f_eta: float
    best: Optional[TestPotential]
    best_amplitude: float
    best_seed: Optional[int]
    diverged: bool
    evaluations: int
    trace: list = field(default_factory=list)

    def trace_csv(self):
        lines = ["eval,phase,amplitude,value,best"]
        for row in self.trace:
            lines.append(",".join(_csv(x) for x in row))
        return "\n".join(lines) + "\n"


def _csv(x):
    return format(x, ".17g") if isinstance(x, float) else str(x)


@dataclass
class SearchParams:
    shape: tuple = (32, 32)
    m_max: int = 2
    margin: float = 0.125
    amplitudes: tuple = (0.01, 0.1, 1.0, 10.0, 100.0, 1000.0)
    starts_per_amplitude: int = 2
    escalation_tol: float = 1e-3
    max_amplitude: float = 1e12
    floor: float = -1e9
    fd_step: float = 0.25
    min_step: float = 1e-6


def _candidates(f, eta, b, params: SearchParams, seed):
    """Deterministic stream of ``(phase, potential, value)``; prefix-consistent in the budget."""
    shape = tuple(params.shape)
    l = b.k
    dim = b.dim_from
    rng = np.random.default_rng(seed)

    def evaluate(tp):
        return cube_average(f, eta, tp.field(b))

    zero = TestPotential(shape, params.m_max, np.zeros((dim, _basis_size(len(shape), params.m_max))),
                         params.margin, l + 2, 0.0, None)
    # the zero potential gives f(eta) exactly; no quadrature needed
    f_eta = best_val = float(f(np.asarray(eta, dtype=float).reshape(-1, 1))[0])
    best = zero
    yield "zero", zero, best_val

    round_best = [None, math.inf]

    def random_round(amps):
        nonlocal best, best_val
        round_best[:] = [None, math.inf]
        for amp in amps:
            for _ in range(params.starts_per_amplitude):
                sub = int(rng.integers(2 ** 63))
                tp = gen_test_potential(shape, params.m_max, amp, sub, dim, l, params.margin)
                v = evaluate(tp)
                if v < best_val:
                    best, best_val = tp, v
                if v < round_best[1]:
                    round_best[:] = [tp, v]
                yield "random", tp, v

    # multistart over the ladder, escalating while the top amplitude keeps winning
    ladder = list(params.amplitudes)
    per_amp = {}
    for phase, tp, v in random_round(ladder):
        per_amp[tp.amplitude] = min(per_amp.get(tp.amplitude, math.inf), v)
        yield phase, tp, v
    first = list(round_best)
    tol = params.escalation_tol * (abs(f_eta) + 1.0)
    top = ladder[-1]
    while top * 10 <= params.max_amplitude:
        others = min(val for a, val in per_amp.items() if a != top)
        if not per_amp[top] < others - tol:
            break
        top *= 10
        for phase, tp, v in random_round([top]):
            per_amp[top] = min(per_amp.get(top, math.inf), v)
            yield "escalate", tp, v

    # coordinate descent with central finite differences; the zero potential
    # is a critical point, so descent starts from a random candidate then
    start = best if best.amplitude > 0 else first[0]
    start_val = best_val if best.amplitude > 0 else first[1]
    unit = _normalization(len(shape), params.m_max, l)
    while True:
        cur, cur_val = start, start_val
        step = params.fd_step * unit
        while step > params.min_step * unit:
            improved = False
            for idx in np.ndindex(cur.coeffs.shape):
                base = cur.coeffs
                trial = []
                for sgn in (1.0, -1.0):
                    c = base.copy()
                    c[idx] += sgn * step
                    tp = replace(cur, coeffs=c, seed=None)
                    v = evaluate(tp)
                    yield "descent", tp, v
                    trial.append((v, tp))
                vp, vm = trial[0][0], trial[1][0]
                curv = vp - 2 * cur_val + vm
                if curv > 0:
                    # minimizer of the parabola through the three samples
                    t = -0.5 * (vp - vm) / curv
                    if 0 < abs(t) <= 4:
                        c = base.copy()
                        c[idx] += t * step
                        tp = replace(cur, coeffs=c, seed=None)
                        v = evaluate(tp)
                        yield "descent", tp, v
                        trial.append((v, tp))
                v, tp = min(trial, key=lambda t: t[0])
                if v < cur_val:
                    cur, cur_val = tp, v
                    improved = True
                if cur_val < best_val:
                    best, best_val = cur, cur_val
            if not improved:
                step *= 0.5
        for phase, tp, v in random_round(ladder):
            yield phase, tp, v
        start, start_val = round_best


def estimate_envelope(f: Integrand, eta, b: DiffOp, budget=200, seed=0,
                      params: Optional[SearchParams] = None) -> EnvelopeResult:
    """Upper bound on ``Q f(eta)`` from the best of ``budget`` test potentials.

    The zero potential is always evaluated first (it does not count against
    the budget), so the value never exceeds ``f(eta)``.  The search stops early
    and sets ``diverged`` once a value drops below
    ``floor * (|f(eta)| + 1)``.
    """
    params = params or SearchParams()
    eta = [float(x) for x in eta]
    if len(eta) != b.dim_to:
        raise ValueError(f"eta has {len(eta)} components, operator targets {b.dim_to}")
    if len(params.shape) != b.n:
        params = replace(params, shape=(params.shape[0],) * b.n)
    f_eta = float(f(np.asarray(eta).reshape(-1, 1))[0])
    floor = params.floor * (abs(f_eta) + 1.0)
    stream = _candidates(f, eta, b, params, seed)
    best_val, best_tp, diverged = math.inf, None, False
    trace = []
    count = 0
    for phase, tp, v in stream:
        if v < best_val:
            best_val, best_tp = v, tp
        trace.append((count, phase, float(tp.amplitude), float(v), float(best_val)))
        if best_val < floor:
            diverged = True
            break
        if count >= budget:
            break
        count += 1
    return EnvelopeResult(best_val, f_eta, best_tp, float(best_tp.amplitude), best_tp.seed,
                          diverged, count, trace)


# -- domain reduction ------------------------------------------------------

@dataclass
class DomainReport:
    box: tuple
    box_estimate: float
    cube_estimate: float
    f_eta: float
    scaling_lhs: float
    scaling_rhs: float

    @property
    def scaling_error(self):
        return abs(self.scaling_lhs - self.scaling_rhs)


def _embed(b, v_samples, box, grid):
    """``u(x) = eps^l v((x - x0) / eps)`` on a uniform grid; returns ``B u`` samples.

    The box must be a cube whose corner and side are multiples of the grid
    spacing, with side ``eps`` spanning exactly ``v_samples.shape[1]`` cells.
    """
    (lo, hi) = box
    n = len(lo)
    eps = hi[0] - lo[0]
    m = v_samples.shape[1]
    big = np.zeros((v_samples.shape[0],) + (grid,) * n)
    starts = [int(round(x * grid)) for x in lo]
    sl = tuple(slice(s, s + m) for s in starts)
    big[(slice(None),) + sl] = v_samples * eps ** b.k
    return inverse(apply_diffop(b, transform(big, real=True)))


def check_domain_invariance(f: Integrand, eta, b: DiffOp, box, budget=100, seed=0,
                            params: Optional[SearchParams] = None) -> DomainReport:
    """Compare envelope estimates over potentials supported in ``box`` and in the cube.

    ``box`` is ``((x0_1, ..), (x1_1, ..))``, an axis-aligned cube inside the unit
    cube.  Box candidates are embedded cube candidates ``eps^l v((x - x0)/eps)``;
    the scaling identity ``mean_cube f(eta + B u) = (1 - eps^n) f(eta) +
    eps^n mean_cube f(eta + B v)`` is checked on the best cube candidate.
    """
    params = params or SearchParams()
    lo, hi = (tuple(float(x) for x in c) for c in box)
    n = b.n
    if len(lo) != n or len(hi) != n:
        raise ValueError("box dimension does not match the operator")
    if any(a < 0 or c > 1 or a >= c for a, c in zip(lo, hi)):
        raise ValueError(f"box {box} is empty or exceeds the unit cube")
    sides = {round(c - a, 12) for a, c in zip(lo, hi)}
    if len(sides) != 1:
        raise ValueError("only cubic boxes are supported")
    eps = hi[0] - lo[0]
    base = params.shape[0]
    grid = int(round(base / eps))
    if abs(grid * eps - base) > 1e-9 or any(abs(x * grid - round(x * grid)) > 1e-9 for x in lo):
        raise ValueError("box corners and side must align with the refined grid")
    eta = [float(x) for x in eta]
    cube = estimate_envelope(f, eta, b, budget, seed, params)
    f_eta = cube.f_eta
    # box search: the same candidate stream, embedded
    best_box = f_eta
    for _, tp, _ in itertools.islice(_candidates(f, eta, b, params, seed), budget + 1):
        bu = _embed(b, tp.samples(), (lo, hi), grid)
        best_box = min(best_box, cube_average(f, eta, bu))
    v = cube.best
    bu = _embed(b, v.samples(), (lo, hi), grid)
    lhs = cube_average(f, eta, bu)
    rhs = (1 - eps ** n) * f_eta + eps ** n * cube_average(f, eta, v.field(b))
    return DomainReport((lo, hi), best_box, cube.value, f_eta, lhs, rhs)
