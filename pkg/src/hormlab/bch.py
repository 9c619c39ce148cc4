"""Truncated free associative algebra on two letters and the CBH correction terms.

Elements are dicts mapping words (tuples over {1, 2}) to ``Fraction``
coefficients; everything above the truncation degree is discarded.  The
correction terms Z_2..Z_N are the Lie polynomials making

    log( e^{t(a+b)} e^{-ta} e^{-tb} e^{-t^2 Z_2} ... e^{-t^N Z_N} )

vanish through degree N.  Since Z_j carries t^j and is homogeneous of degree
j in the letters, the t-grading coincides with the word-length grading and t
is dropped.

Flow convention
---------------
For flows, ``phi(F1(F2(x)))`` expands as ``e^{F2} e^{F1} phi`` (the pullbacks
compose in reverse).  Instantiating the free Lie polynomials on vector fields
therefore goes through the anti-homomorphism ``[a, b] -> [Y_b, Y_a]``, which
multiplies a bracket of length j by ``(-1)^(j-1)``.  ``bch_correction_fields``
applies that sign, so its output plugs directly into the flow product
``exp(t(Y1+Y2)) exp(-tY1) exp(-tY2) exp(-t^2 Z_2) ...`` read as a composition
of maps whose rightmost factor acts first.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import factorial

from .vecfield import FieldSystem, VectorField, multi_commutator

MAX_ORDER = 6

Poly = dict  # dict[tuple[int, ...], Fraction]


def _clean(p: Poly) -> Poly:
    return {w: c for w, c in p.items() if c != 0}


def add(p: Poly, q: Poly, scale=1) -> Poly:
    out = dict(p)
    for w, c in q.items():
        out[w] = out.get(w, Fraction(0)) + scale * c
    return _clean(out)


def mul(p: Poly, q: Poly, order: int) -> Poly:
    out: Poly = {}
    for w1, c1 in p.items():
        for w2, c2 in q.items():
            if len(w1) + len(w2) <= order:
                w = w1 + w2
                out[w] = out.get(w, Fraction(0)) + c1 * c2
    return _clean(out)


def scale(p: Poly, s) -> Poly:
    return _clean({w: s * c for w, c in p.items()})


def homogeneous(p: Poly, degree: int) -> Poly:
    return {w: c for w, c in p.items() if len(w) == degree}


def min_degree(p: Poly) -> int | None:
    return min((len(w) for w in p), default=None)


def exp(p: Poly, order: int) -> Poly:
    """Truncated exponential of an element without constant term."""
    if () in p:
        raise ValueError("exp needs an element with zero constant term")
    out: Poly = {(): Fraction(1)}
    power: Poly = {(): Fraction(1)}
    for k in range(1, order + 1):
        power = mul(power, p, order)
        if not power:
            break
        out = add(out, power, Fraction(1, factorial(k)))
    return out


def log(p: Poly, order: int) -> Poly:
    """Truncated logarithm of an element with constant term 1."""
    if p.get((), 0) != 1:
        raise ValueError("log needs an element with constant term 1")
    q = {w: c for w, c in p.items() if w != ()}
    out: Poly = {}
    power: Poly = {(): Fraction(1)}
    for k in range(1, order + 1):
        power = mul(power, q, order)
        if not power:
            break
        out = add(out, power, Fraction((-1) ** (k + 1), k))
    return out


@lru_cache(maxsize=None)
def bracket_word(word: tuple) -> tuple:
    """Expand the right-nested commutator ``[w1, [w2, ..., [w(n-1), wn]]]``.

    Returned as a tuple of (word, coefficient) pairs so it can be cached.
    """
    if len(word) == 1:
        return ((word, Fraction(1)),)
    inner = dict(bracket_word(word[1:]))
    a = word[0]
    out: Poly = {}
    for w, c in inner.items():
        out[(a,) + w] = out.get((a,) + w, Fraction(0)) + c
        out[w + (a,)] = out.get(w + (a,), Fraction(0)) - c
    return tuple(sorted(_clean(out).items()))


def expand_brackets(combination: dict) -> Poly:
    """Polynomial of a combination ``{word: coef}`` of right-nested brackets."""
    out: Poly = {}
    for word, coef in combination.items():
        for w, c in bracket_word(word):
            out[w] = out.get(w, Fraction(0)) + coef * c
    return _clean(out)


def dynkin_projection(p: Poly) -> dict:
    """Dynkin-Specht-Wever map on a homogeneous element.

    For a homogeneous Lie polynomial ``P`` of degree n, ``P = (1/n) sum_w c_w [w]``
    with ``[w]`` the right-nested bracket.  Returns the combination
    ``{word: coef}``; combinations keep only nonzero coefficients.
    """
    degrees = {len(w) for w in p}
    if len(degrees) > 1:
        raise ValueError("Dynkin projection needs a homogeneous element")
    if not p:
        return {}
    n = degrees.pop()
    return normalize_combination({w: c / n for w, c in p.items()})


def normalize_combination(combination: dict) -> dict:
    """Reduce with innermost antisymmetry: ``[..,[a,a]] = 0``, ``[..,[b,a]] = -[..,[a,b]]``."""
    out: dict = {}
    for w, c in combination.items():
        if len(w) >= 2:
            if w[-1] == w[-2]:
                continue
            if w[-2] > w[-1]:
                w, c = w[:-2] + (w[-1], w[-2]), -c
        out[w] = out.get(w, Fraction(0)) + c
    return {w: c for w, c in sorted(out.items(), key=lambda wc: (len(wc[0]), wc[0])) if c != 0}


def is_lie(p: Poly) -> bool:
    """True if every homogeneous component is fixed by the Dynkin projection."""
    for n in {len(w) for w in p}:
        comp = homogeneous(p, n)
        if expand_brackets(dynkin_projection(comp)) != comp:
            return False
    return True


def _check_order(order: int):
    if order < 2:
        raise ValueError(f"truncation order must be >= 2, got {order}")
    if order > MAX_ORDER:
        raise ValueError(f"truncation order {order} exceeds the cap {MAX_ORDER}")


def corrected_product(corrections: list[Poly], order: int) -> Poly:
    """``e^{a+b} e^{-a} e^{-b} e^{-Z_2} ... e^{-Z_k}`` truncated at ``order``."""
    a, b = {(1,): Fraction(1)}, {(2,): Fraction(1)}
    prod = exp(add(a, b), order)
    prod = mul(prod, exp(scale(a, -1), order), order)
    prod = mul(prod, exp(scale(b, -1), order), order)
    for z in corrections:
        prod = mul(prod, exp(scale(z, -1), order), order)
    return prod


@lru_cache(maxsize=None)
def _corrections(order: int) -> tuple:
    zs: list[Poly] = []
    combos: list[dict] = []
    for j in range(2, order + 1):
        residual = log(corrected_product(zs, order), order)
        low = min_degree(residual)
        if low is not None and low < j:
            raise ArithmeticError(f"degree-{low} log component survived correction")
        comp = homogeneous(residual, j)
        combo = dynkin_projection(comp)
        if expand_brackets(combo) != comp:
            raise ArithmeticError(f"degree-{j} log component is not a Lie element")
        zs.append(comp)
        combos.append(combo)
    return tuple(zs), tuple(combos)


def bch_correction_lie(order: int) -> list[dict]:
    """Z_2..Z_N as combinations ``{word: Fraction}`` of right-nested brackets.

    Pure free-algebra result: ``Z_2 == {(1, 2): 1/2}``, i.e. ``(1/2)[a, b]``.
    """
    _check_order(order)
    return [dict(c) for c in _corrections(order)[1]]


def bch_correction_polys(order: int) -> list[Poly]:
    _check_order(order)
    return [dict(z) for z in _corrections(order)[0]]


def residual_log(order: int) -> Poly:
    """Log of the fully corrected product; identically zero through ``order``."""
    _check_order(order)
    zs, _ = _corrections(order)
    return log(corrected_product(list(zs), order), order)


def bch_correction_fields(Y1: VectorField, Y2: VectorField, order: int) -> list[VectorField]:
    """Vector fields Z_2..Z_N for the flow product (see module docstring for the sign)."""
    _check_order(order)
    if Y1.dimension != Y2.dimension:
        raise ValueError(f"dimension mismatch: {Y1.dimension} vs {Y2.dimension}")
    pair = FieldSystem((Y1, Y2))
    out = []
    for j, combo in enumerate(bch_correction_lie(order), start=2):
        sign = (-1) ** (j - 1)
        z = VectorField.zero(Y1.dimension)
        for word, coef in sorted(combo.items()):
            z = z + multi_commutator(pair, word).scaled(sign * coef)
        out.append(z)
    return out
