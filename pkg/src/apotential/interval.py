"""Exact rational interval arithmetic for polynomial range enclosures."""

from __future__ import annotations

from fractions import Fraction


class Interval:
    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        lo = Fraction(lo)
        hi = lo if hi is None else Fraction(hi)
        if lo > hi:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        self.lo = lo
        self.hi = hi

    def __repr__(self):
        return f"Interval({self.lo}, {self.hi})"

    def __eq__(self, other):
        return isinstance(other, Interval) and (self.lo, self.hi) == (other.lo, other.hi)

    def __hash__(self):
        return hash((self.lo, self.hi))

    @property
    def width(self):
        return self.hi - self.lo

    @property
    def mid(self):
        return (self.lo + self.hi) / 2

    def __contains__(self, x):
        return self.lo <= x <= self.hi

    def __add__(self, other):
        if not isinstance(other, Interval):
            other = Interval(other)
        return Interval(self.lo + other.lo, self.hi + other.hi)

    __radd__ = __add__

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other):
        if not isinstance(other, Interval):
            other = Interval(other)
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, Interval):
            c = Fraction(other)
            return Interval(min(c * self.lo, c * self.hi), max(c * self.lo, c * self.hi))
        p = (self.lo * other.lo, self.lo * other.hi, self.hi * other.lo, self.hi * other.hi)
        return Interval(min(p), max(p))

    __rmul__ = __mul__

    def __pow__(self, k):
        # exact range of x^k, tighter than repeated multiplication for even k
        if k == 0:
            return Interval(1)
        a, b = self.lo ** k, self.hi ** k
        if k % 2 == 1:
            return Interval(a, b)
        if self.lo >= 0:
            return Interval(a, b)
        if self.hi <= 0:
            return Interval(b, a)
        return Interval(0, max(a, b))


def poly_range(p, box):
    """Enclosure of ``p`` over ``box`` (a sequence of Intervals), natural extension."""
    total = Interval(0)
    for alpha, c in p._terms.items():
        t = Interval(1)
        for iv, e in zip(box, alpha):
            if e:
                t = t * (iv ** e)
        total = total + t * c
    return total
