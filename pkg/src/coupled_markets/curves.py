"""Exact monotone piecewise-affine curves on ``[0, inf)``.

A :class:`Curve` is stored as a list of breakpoints ``xs`` (always starting at
0).  Each breakpoint carries its own value (``at``) and the value just to its
right (``start``); the open piece that follows a breakpoint is affine with
slope ``slope``.  Keeping the breakpoint value separate from both one-sided
limits lets the same type describe left-continuous demand curves, offer
curves built with a strict inequality and right-continuous staircases.

All arithmetic is done with :class:`fractions.Fraction`.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Iterator, Sequence, Union

Rational = Fraction
Number = Union[int, str, Decimal, Fraction]

ZERO = Fraction(0)


class CurveError(ValueError):
    """Raised when a curve is malformed or violates a required shape."""


def q(x: Number) -> Fraction:
    """Coerce ``x`` to an exact rational.  Binary floats are refused."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        raise TypeError(f"refusing binary float {x!r}; pass a str, int or Fraction")
    return Fraction(x)


@dataclass(frozen=True)
class Curve:
    xs: tuple[Fraction, ...]
    at: tuple[Fraction, ...]
    start: tuple[Fraction, ...]
    slope: tuple[Fraction, ...]
    domain_end: Fraction | None = None

    def __post_init__(self) -> None:
        n = len(self.xs)
        if n == 0 or not (len(self.at) == len(self.start) == len(self.slope) == n):
            raise CurveError("breakpoint arrays must be non-empty and of equal length")
        if self.xs[0] != 0:
            raise CurveError("first breakpoint must be 0")
        if any(b <= a for a, b in zip(self.xs, self.xs[1:])):
            raise CurveError("breakpoints must be strictly increasing")
        if self.slope[-1] != 0:
            raise CurveError("the tail beyond the last breakpoint must be flat")
        if self.domain_end is not None and self.domain_end < 0:
            raise CurveError("domain_end must be non-negative")

    # -- construction -----------------------------------------------------

    @classmethod
    def build(
        cls,
        xs: Sequence[Fraction],
        at: Sequence[Fraction],
        start: Sequence[Fraction],
        slope: Sequence[Fraction],
        domain_end: Fraction | None = None,
    ) -> "Curve":
        """Build a curve and drop redundant breakpoints (canonical form)."""
        keep = [0]
        for i in range(1, len(xs)):
            j = keep[-1]
            left = start[j] + slope[j] * (xs[i] - xs[j])
            if not (left == at[i] == start[i] and slope[j] == slope[i]):
                keep.append(i)
        return cls(
            tuple(xs[i] for i in keep),
            tuple(at[i] for i in keep),
            tuple(start[i] for i in keep),
            tuple(slope[i] for i in keep),
            domain_end,
        )

    @classmethod
    def constant(cls, value: Number, domain_end: Number | None = None) -> "Curve":
        v = q(value)
        end = None if domain_end is None else q(domain_end)
        return cls((ZERO,), (v,), (v,), (ZERO,), end)

    @classmethod
    def step_right(cls, points: Iterable[tuple[Number, Number]]) -> "Curve":
        """Right-continuous staircase: ``y_i`` on ``[x_i, x_{i+1})``, ``x_0 = 0``."""
        pts = [(q(x), q(y)) for x, y in points]
        if not pts or pts[0][0] != 0:
            raise CurveError("step_right needs a first point at x = 0")
        xs = [x for x, _ in pts]
        ys = [y for _, y in pts]
        return cls.build(xs, ys, ys, [ZERO] * len(xs))

    @classmethod
    def step_left(
        cls,
        points: Iterable[tuple[Number, Number]],
        tail: Number,
        domain_end: Number | None = None,
    ) -> "Curve":
        """Left-continuous staircase.

        ``points`` lists ``(x_i, y_i)`` with ``x_i > 0`` increasing; the curve
        equals ``y_1`` on ``[0, x_1]``, ``y_i`` on ``(x_{i-1}, x_i]`` and
        ``tail`` beyond the last ``x``.
        """
        pts = [(q(x), q(y)) for x, y in points]
        if not pts:
            return cls.constant(tail, domain_end)
        if pts[0][0] <= 0:
            raise CurveError("step_left points must have x > 0")
        xs = [ZERO] + [x for x, _ in pts]
        ys = [y for _, y in pts]
        at = [ys[0]] + ys
        start = ys + [q(tail)]
        end = None if domain_end is None else q(domain_end)
        return cls.build(xs, at, start, [ZERO] * len(xs), end)

    @classmethod
    def piecewise_linear(
        cls, points: Iterable[tuple[Number, Number]], tail: Number | None = None
    ) -> "Curve":
        """Continuous polyline through ``points`` (first at x = 0).

        Beyond the last point the curve is flat at ``tail`` (default: the last
        y); a different tail introduces a jump just after the last point.
        """
        pts = [(q(x), q(y)) for x, y in points]
        if not pts or pts[0][0] != 0:
            raise CurveError("piecewise_linear needs a first point at x = 0")
        xs = [x for x, _ in pts]
        ys = [y for _, y in pts]
        slopes = [(y1 - y0) / (x1 - x0) for (x0, y0), (x1, y1) in zip(pts, pts[1:])]
        last = ys[-1] if tail is None else q(tail)
        return cls.build(xs, ys, ys[:-1] + [last], slopes + [ZERO])

    # -- evaluation -------------------------------------------------------

    def piece_index(self, x: Fraction) -> int:
        return bisect_right(self.xs, x) - 1

    def eval(self, x: Number) -> Fraction:
        x = q(x)
        if x < 0:
            raise CurveError(f"curves are defined on [0, inf); got {x}")
        i = self.piece_index(x)
        if self.xs[i] == x:
            return self.at[i]
        return self.start[i] + self.slope[i] * (x - self.xs[i])

    __call__ = eval

    def eval_right(self, x: Number) -> Fraction:
        x = q(x)
        if x < 0:
            raise CurveError(f"curves are defined on [0, inf); got {x}")
        i = self.piece_index(x)
        return self.start[i] + self.slope[i] * (x - self.xs[i])

    def eval_left(self, x: Number) -> Fraction:
        """Left limit at ``x``; at ``x = 0`` this is the value at 0."""
        x = q(x)
        if x < 0:
            raise CurveError(f"curves are defined on [0, inf); got {x}")
        if x == 0:
            return self.at[0]
        i = bisect_left(self.xs, x) - 1
        return self.start[i] + self.slope[i] * (x - self.xs[i])

    def slope_right(self, x: Fraction) -> Fraction:
        return self.slope[self.piece_index(x)]

    def left_limit_at(self, i: int) -> Fraction:
        """Left limit at breakpoint ``i`` (``i >= 1``)."""
        return self.start[i - 1] + self.slope[i - 1] * (self.xs[i] - self.xs[i - 1])

    def pieces(self) -> Iterator[tuple[Fraction, Fraction | None, Fraction, Fraction]]:
        """Yield ``(lo, hi, value_right_of_lo, slope)`` for each open piece."""
        n = len(self.xs)
        for i in range(n):
            hi = self.xs[i + 1] if i + 1 < n else None
            yield self.xs[i], hi, self.start[i], self.slope[i]

    @property
    def tail(self) -> Fraction:
        return self.start[-1]

    # -- shape predicates -------------------------------------------------

    @property
    def is_step(self) -> bool:
        return all(s == 0 for s in self.slope)

    @property
    def is_increasing(self) -> bool:
        if self.at[0] > self.start[0] or any(s < 0 for s in self.slope):
            return False
        return all(
            self.left_limit_at(i) <= self.at[i] <= self.start[i]
            for i in range(1, len(self.xs))
        )

    @property
    def is_decreasing(self) -> bool:
        if self.at[0] < self.start[0] or any(s > 0 for s in self.slope):
            return False
        return all(
            self.left_limit_at(i) >= self.at[i] >= self.start[i]
            for i in range(1, len(self.xs))
        )

    @property
    def is_left_continuous(self) -> bool:
        return all(self.at[i] == self.left_limit_at(i) for i in range(1, len(self.xs)))

    @property
    def is_right_continuous(self) -> bool:
        return all(a == s for a, s in zip(self.at, self.start))

    # -- algebra ----------------------------------------------------------

    def __add__(self, other: "Curve") -> "Curve":
        if not isinstance(other, Curve):
            return NotImplemented
        if self.domain_end != other.domain_end:
            raise CurveError("cannot add curves with different domains")
        xs = sorted(set(self.xs) | set(other.xs))
        return Curve.build(
            xs,
            [self.eval(x) + other.eval(x) for x in xs],
            [self.eval_right(x) + other.eval_right(x) for x in xs],
            [self.slope_right(x) + other.slope_right(x) for x in xs],
            self.domain_end,
        )

    def __neg__(self) -> "Curve":
        return Curve(
            self.xs,
            tuple(-v for v in self.at),
            tuple(-v for v in self.start),
            tuple(-v for v in self.slope),
            self.domain_end,
        )

    def __sub__(self, other: "Curve") -> "Curve":
        return self + (-other)

    def shifted(self, amount: Number) -> "Curve":
        """The curve plus a constant."""
        a = q(amount)
        return Curve(
            self.xs,
            tuple(v + a for v in self.at),
            tuple(v + a for v in self.start),
            self.slope,
            self.domain_end,
        )

    def with_tail(self, tail: Number, domain_end: Number) -> "Curve":
        """Restrict to ``[0, domain_end]`` and continue flat at ``tail``."""
        end = q(domain_end)
        xs = [x for x in self.xs if x <= end]
        at = [self.eval(x) for x in xs]
        start = [self.eval_right(x) for x in xs]
        slope = [self.slope_right(x) for x in xs]
        if xs[-1] == end:
            start[-1] = q(tail)
            slope[-1] = ZERO
        else:
            xs.append(end)
            at.append(self.eval(end))
            start.append(q(tail))
            slope.append(ZERO)
        return Curve.build(xs, at, start, slope, end)


def level_pieces(curve: Curve) -> list[tuple[Fraction, Fraction]]:
    """``(value, sup of abscissae)`` for every piece of a staircase on its domain.

    Points and open intervals are listed separately; the sup of an open
    interval is its right end clipped to ``domain_end``.
    """
    if curve.domain_end is None:
        raise CurveError("level sets need a bounded domain")
    if not curve.is_step:
        raise CurveError("level sets are only computed for staircases")
    end = curve.domain_end
    out: list[tuple[Fraction, Fraction]] = []
    for i, (lo, hi, value, _) in enumerate(curve.pieces()):
        if lo > end:
            break
        out.append((curve.at[i], lo))
        right = end if hi is None else min(hi, end)
        if right > lo:
            out.append((value, right))
    return out


def generalized_inverse(ask: Curve) -> Curve:
    """Ask size ``p -> sup{q in [0, kappa] : ask(q) < p}`` with ``sup {} = 0``.

    The result is increasing, 0 at ``p = 0`` and left-continuous: at an ask
    level the strict inequality still excludes the stair priced there.
    """
    best: dict[Fraction, Fraction] = {}
    for value, sup in level_pieces(ask):
        if value < 0:
            raise CurveError("asks must be non-negative")
        best[value] = max(best.get(value, ZERO), sup)
    xs: list[Fraction] = [ZERO]
    at: list[Fraction] = [ZERO]
    start: list[Fraction] = [ZERO]
    running = ZERO
    for level in sorted(best):
        running = max(running, best[level])
        if level == 0:
            start[0] = running
            continue
        xs.append(level)
        at.append(start[-1])
        start.append(running)
    return Curve.build(xs, at, start, [ZERO] * len(xs))


def aggregate(curves: Sequence[Curve]) -> Curve:
    """Pointwise sum of a non-empty list of curves."""
    if not curves:
        raise CurveError("aggregate needs at least one curve")
    total = curves[0]
    for c in curves[1:]:
        total = total + c
    return total
