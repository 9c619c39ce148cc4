"""Coefficient expressions: AST, parser, printer, exact differentiation, evaluation.

The language is deliberately tiny::

    expr   := term (('+' | '-') term)*
    term   := factor ('*' factor)*
    factor := rational | 'x'k | 'sin(' expr ')' | 'cos(' expr ')' | '(' expr ')' | '-' factor

Every expression is C-infinity on all of R^d, the language is closed under
partial differentiation, and constants are kept as exact ``Fraction`` values
until evaluation.  Coordinates are 1-based (``x1`` is the first coordinate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Expr", "Const", "Coord", "Neg", "Sum", "Prod", "Sin", "Cos",
    "ParseError", "parse", "to_string", "differentiate", "evaluate",
    "simplify", "is_bounded", "is_periodic", "is_zero", "max_coordinate",
    "compile_exprs", "ZERO", "ONE",
]

# product expansion is skipped once the distributed term count would exceed this
_EXPAND_CAP = 256


class ParseError(ValueError):
    """Raised for malformed expression text; ``position`` is the 0-based offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class Expr:
    """Base class of the immutable expression nodes."""

    __slots__ = ()

    def __add__(self, other):
        return Sum((self, _lift(other)))

    def __radd__(self, other):
        return Sum((_lift(other), self))

    def __sub__(self, other):
        return Sum((self, Neg(_lift(other))))

    def __rsub__(self, other):
        return Sum((_lift(other), Neg(self)))

    def __mul__(self, other):
        return Prod((self, _lift(other)))

    def __rmul__(self, other):
        return Prod((_lift(other), self))

    def __neg__(self):
        return Neg(self)

    def __str__(self):
        return to_string(self)


def _lift(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, Fraction)):
        return Const(Fraction(value))
    raise TypeError(f"cannot combine Expr with {type(value).__name__}")


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: Fraction

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))

    @cached_property
    def _hash(self):
        return hash(("c", self.value))

    def __hash__(self):
        return self._hash


@dataclass(frozen=True, eq=True)
class Coord(Expr):
    k: int

    @cached_property
    def _hash(self):
        return hash(("x", self.k))

    def __hash__(self):
        return self._hash


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr

    @cached_property
    def _hash(self):
        return hash(("neg", self.arg))

    def __hash__(self):
        return self._hash


@dataclass(frozen=True, eq=True)
class Sum(Expr):
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    @cached_property
    def _hash(self):
        return hash(("sum", self.terms))

    def __hash__(self):
        return self._hash


@dataclass(frozen=True, eq=True)
class Prod(Expr):
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    @cached_property
    def _hash(self):
        return hash(("prod", self.factors))

    def __hash__(self):
        return self._hash


@dataclass(frozen=True, eq=True)
class Sin(Expr):
    arg: Expr

    @cached_property
    def _hash(self):
        return hash(("sin", self.arg))

    def __hash__(self):
        return self._hash


@dataclass(frozen=True, eq=True)
class Cos(Expr):
    arg: Expr

    @cached_property
    def _hash(self):
        return hash(("cos", self.arg))

    def __hash__(self):
        return self._hash


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


# ---------------------------------------------------------------------------
# parsing

class _Parser:
    def __init__(self, text: str, dimension: int):
        self.text = text
        self.d = dimension
        self.pos = 0

    def error(self, message: str, pos: int | None = None):
        raise ParseError(message, self.pos if pos is None else pos, self.text)

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            found = repr(self.text[self.pos]) if self.pos < len(self.text) else "end of input"
            self.error(f"expected {ch!r}, found {found}")
        self.pos += 1

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek():
            self.error(f"unexpected {self.text[self.pos]!r}")
        return e

    def expr(self) -> Expr:
        terms = [self.term()]
        while self.peek() in ("+", "-"):
            op = self.text[self.pos]
            self.pos += 1
            t = self.term()
            terms.append(t if op == "+" else Neg(t))
        return terms[0] if len(terms) == 1 else Sum(tuple(terms))

    def term(self) -> Expr:
        factors = [self.factor()]
        while self.peek() == "*":
            self.pos += 1
            factors.append(self.factor())
        return factors[0] if len(factors) == 1 else Prod(tuple(factors))

    def factor(self) -> Expr:
        ch = self.peek()
        start = self.pos
        if not ch:
            self.error("unexpected end of input")
        if ch == "-":
            self.pos += 1
            literal = self.peek()[:1].isdigit() or self.peek() == "."
            inner = self.factor()
            # a negated bare literal is a negative constant, so printed constants round-trip
            if literal and isinstance(inner, Const):
                return Const(-inner.value)
            return Neg(inner)
        if ch == "(":
            self.pos += 1
            e = self.expr()
            self.expect(")")
            return e
        if ch.isdigit() or ch == ".":
            return self.number()
        if ch == "x":
            self.pos += 1
            j = self.pos
            while j < len(self.text) and self.text[j].isdigit():
                j += 1
            if j == self.pos:
                self.error("expected coordinate index after 'x'")
            k = int(self.text[self.pos:j])
            if not 1 <= k <= self.d:
                self.error(f"coordinate x{k} out of range [1, {self.d}]", start)
            self.pos = j
            return Coord(k)
        for name, node in (("sin", Sin), ("cos", Cos)):
            if self.text.startswith(name, self.pos):
                self.pos += len(name)
                self.expect("(")
                e = self.expr()
                self.expect(")")
                return node(e)
        self.error(f"unexpected {ch!r}")

    def number(self) -> Const:
        j = self.pos
        while j < len(self.text) and (self.text[j].isdigit() or self.text[j] == "."):
            j += 1
        literal = self.text[self.pos:j]
        if j < len(self.text) and self.text[j] == "/":
            k = j + 1
            while k < len(self.text) and self.text[k].isdigit():
                k += 1
            if k == j + 1:
                self.error("expected denominator after '/'", j + 1)
            literal = self.text[self.pos:k]
            j = k
        try:
            value = Fraction(literal)
        except (ValueError, ZeroDivisionError):
            self.error(f"malformed number {literal!r}")
        self.pos = j
        return Const(value)


def parse(text: str, dimension: int) -> Expr:
    """Parse ``text`` into an expression over coordinates ``x1..x<dimension>``."""
    return _Parser(text, dimension).parse()


# ---------------------------------------------------------------------------
# printing

def _const_str(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    return f"{c.numerator}/{c.denominator}"


@lru_cache(maxsize=None)
def to_string(e: Expr) -> str:
    """Render ``e`` in the input grammar; ``parse(to_string(e))`` reproduces parsed trees."""
    if isinstance(e, Const):
        return _const_str(e.value)
    if isinstance(e, Coord):
        return f"x{e.k}"
    if isinstance(e, Sin):
        return f"sin({to_string(e.arg)})"
    if isinstance(e, Cos):
        return f"cos({to_string(e.arg)})"
    if isinstance(e, Neg):
        if isinstance(e.arg, Const):
            return f"-({to_string(e.arg)})"
        return "-" + _factor_str(e.arg)
    if isinstance(e, Sum):
        parts = [_term_str(e.terms[0])]
        for t in e.terms[1:]:
            if isinstance(t, Neg):
                parts.append(" - " + _factor_str(t.arg))
            else:
                parts.append(" + " + _term_str(t))
        return "".join(parts)
    if isinstance(e, Prod):
        return "*".join(_factor_str(f) for f in e.factors)
    raise TypeError(f"not an expression: {e!r}")


def _term_str(e: Expr) -> str:
    return f"({to_string(e)})" if isinstance(e, Sum) else to_string(e)


def _factor_str(e: Expr) -> str:
    if isinstance(e, (Sum, Prod)):
        return f"({to_string(e)})"
    if isinstance(e, Const) and e.value < 0:
        # "-(-3)" must not fold into the literal 3 on re-parse
        return f"({to_string(e)})"
    return to_string(e)


# ---------------------------------------------------------------------------
# simplification

def _sort_key(e: Expr) -> str:
    return to_string(e)


def _product_parts(e: Expr) -> tuple[Fraction, tuple]:
    """Split a simplified expression into (coefficient, sorted non-constant factors)."""
    if isinstance(e, Const):
        return e.value, ()
    if isinstance(e, Neg):
        c, fs = _product_parts(e.arg)
        return -c, fs
    if isinstance(e, Prod):
        coef = Fraction(1)
        fs = []
        for f in e.factors:
            c, sub = _product_parts(f)
            coef *= c
            fs.extend(sub)
        return coef, tuple(sorted(fs, key=_sort_key))
    return Fraction(1), (e,)


def _build_monomial(coef: Fraction, factors: tuple) -> Expr:
    if coef == 0:
        return ZERO
    if not factors:
        return Const(coef)
    body = factors[0] if len(factors) == 1 else Prod(factors)
    if coef == 1:
        return body
    if coef == -1:
        return Neg(body)
    return Prod((Const(coef),) + factors)


def _combine(terms: Iterable[tuple[Fraction, tuple]]) -> Expr:
    acc: dict[tuple, Fraction] = {}
    for coef, factors in terms:
        if coef != 0:
            acc[factors] = acc.get(factors, Fraction(0)) + coef
    items = [(f, c) for f, c in acc.items() if c != 0]
    if not items:
        return ZERO
    items.sort(key=lambda fc: (len(fc[0]), "*".join(_sort_key(x) for x in fc[0])))
    out = [_build_monomial(c, f) for f, c in items]
    return out[0] if len(out) == 1 else Sum(tuple(out))


def _linear_terms(e: Expr) -> list[tuple[Fraction, tuple]]:
    if isinstance(e, Sum):
        out = []
        for t in e.terms:
            out.extend(_linear_terms(t))
        return out
    if isinstance(e, Neg) and isinstance(e.arg, Sum):
        return [(-c, f) for c, f in _linear_terms(e.arg)]
    return [_product_parts(e)]


@lru_cache(maxsize=None)
def simplify(e: Expr) -> Expr:
    """Best-effort simplification: folding, flattening, like-term collection.

    The result is pointwise equal to ``e``.  It is not a canonical form, but a
    tree that vanishes identically through cancellation of like terms reduces
    to ``Const(0)``.
    """
    if isinstance(e, (Const, Coord)):
        return e
    if isinstance(e, Neg):
        inner = simplify(e.arg)
        return _combine((-c, f) for c, f in _linear_terms(inner))
    if isinstance(e, Sum):
        terms = []
        for t in e.terms:
            terms.extend(_linear_terms(simplify(t)))
        return _combine(terms)
    if isinstance(e, Prod):
        return _simplify_product([simplify(f) for f in e.factors])
    if isinstance(e, (Sin, Cos)):
        arg = simplify(e.arg)
        coef, factors = _product_parts(arg) if not isinstance(arg, Sum) else (Fraction(1), None)
        if isinstance(arg, Const) and arg.value == 0:
            return ZERO if isinstance(e, Sin) else ONE
        if factors is not None and coef < 0:
            # sin(-u) = -sin(u), cos(-u) = cos(u)
            pos = _build_monomial(-coef, factors)
            return simplify(Neg(Sin(pos))) if isinstance(e, Sin) else Cos(pos)
        if isinstance(arg, Sum) and all(c < 0 for c, _ in _linear_terms(arg)):
            pos = _combine((-c, f) for c, f in _linear_terms(arg))
            return simplify(Neg(Sin(pos))) if isinstance(e, Sin) else Cos(pos)
        return type(e)(arg)
    raise TypeError(f"not an expression: {e!r}")


def _simplify_product(factors: list[Expr]) -> Expr:
    # each factor becomes a list of (coef, monomial-factors) summands
    expanded = [_linear_terms(f) for f in factors]
    if any(len(s) == 1 and s[0][0] == 0 for s in expanded):
        return ZERO
    count = 1
    for s in expanded:
        count *= max(len(s), 1)
    if count <= _EXPAND_CAP:
        acc = [(Fraction(1), ())]
        for summands in expanded:
            acc = [(c1 * c2, f1 + f2) for c1, f1 in acc for c2, f2 in summands]
        return _combine((c, tuple(sorted(f, key=_sort_key))) for c, f in acc)
    coef = Fraction(1)
    rest = []
    for f, summands in zip(factors, expanded):
        if len(summands) == 1:
            c, fs = summands[0]
            coef *= c
            rest.extend(fs)
        else:
            rest.append(f)
    return _build_monomial(coef, tuple(sorted(rest, key=_sort_key)))


def is_zero(e: Expr) -> bool:
    """True iff ``e`` simplifies to the constant zero."""
    s = simplify(e)
    return isinstance(s, Const) and s.value == 0


# ---------------------------------------------------------------------------
# differentiation

@lru_cache(maxsize=None)
def _raw_derivative(e: Expr, k: int) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Coord):
        return ONE if e.k == k else ZERO
    if isinstance(e, Neg):
        return Neg(_raw_derivative(e.arg, k))
    if isinstance(e, Sum):
        return Sum(tuple(_raw_derivative(t, k) for t in e.terms))
    if isinstance(e, Prod):
        fs = e.factors
        return Sum(tuple(
            Prod(fs[:i] + (_raw_derivative(fs[i], k),) + fs[i + 1:]) for i in range(len(fs))
        ))
    if isinstance(e, Sin):
        return Prod((Cos(e.arg), _raw_derivative(e.arg, k)))
    if isinstance(e, Cos):
        return Neg(Prod((Sin(e.arg), _raw_derivative(e.arg, k))))
    raise TypeError(f"not an expression: {e!r}")


def differentiate(e: Expr, k: int) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``x<k>`` (simplified)."""
    if k < 1:
        raise ValueError(f"coordinate index must be >= 1, got {k}")
    return simplify(_raw_derivative(e, k))


# ---------------------------------------------------------------------------
# evaluation

def evaluate(e: Expr, x: Sequence[float]) -> float:
    """Evaluate ``e`` at the point ``x`` (``x[0]`` is the value of ``x1``)."""
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Coord):
        if e.k > len(x):
            raise ValueError(f"point has dimension {len(x)} but expression uses x{e.k}")
        return float(x[e.k - 1])
    if isinstance(e, Neg):
        return -evaluate(e.arg, x)
    if isinstance(e, Sum):
        return math.fsum(evaluate(t, x) for t in e.terms)
    if isinstance(e, Prod):
        out = 1.0
        for f in e.factors:
            out *= evaluate(f, x)
        return out
    if isinstance(e, Sin):
        return math.sin(evaluate(e.arg, x))
    if isinstance(e, Cos):
        return math.cos(evaluate(e.arg, x))
    raise TypeError(f"not an expression: {e!r}")


def compile_exprs(exprs: Sequence[Expr]) -> Callable[[np.ndarray], np.ndarray]:
    """Compile expressions into one vectorised numpy function.

    The returned ``f(x)`` takes ``x`` of shape ``(d, *batch)`` and returns an
    array of shape ``(len(exprs), *batch)``.  Shared subtrees are evaluated once.
    """
    names: dict[Expr, str] = {}
    lines: list[str] = []

    def emit(e: Expr) -> str:
        if e in names:
            return names[e]
        if isinstance(e, Const):
            code = repr(float(e.value))
        elif isinstance(e, Coord):
            code = f"x[{e.k - 1}]"
        elif isinstance(e, Neg):
            code = f"-{emit(e.arg)}"
        elif isinstance(e, Sum):
            code = " + ".join(emit(t) for t in e.terms)
        elif isinstance(e, Prod):
            code = " * ".join(emit(f) for f in e.factors)
        elif isinstance(e, Sin):
            code = f"_sin({emit(e.arg)})"
        elif isinstance(e, Cos):
            code = f"_cos({emit(e.arg)})"
        else:
            raise TypeError(f"not an expression: {e!r}")
        name = f"t{len(names)}"
        names[e] = name
        lines.append(f"    {name} = {code}")
        return name

    outs = [emit(e) for e in exprs]
    body = "\n".join(lines)
    src = (
        "def _f(x):\n"
        f"{body}\n"
        "    shape = _np.shape(x)[1:]\n"
        f"    out = _np.empty(({len(outs)},) + shape)\n"
        + "".join(f"    out[{i}] = {name}\n" for i, name in enumerate(outs))
        + "    return out\n"
    )
    namespace = {"_np": np, "_sin": np.sin, "_cos": np.cos}
    exec(compile(src, "<hormlab.symexpr>", "exec"), namespace)
    return namespace["_f"]


# ---------------------------------------------------------------------------
# structural predicates

def is_bounded(e: Expr) -> bool:
    """Syntactic boundedness: every coordinate sits below some sin/cos node."""

    def walk(node: Expr, guarded: bool) -> bool:
        if isinstance(node, Coord):
            return guarded
        if isinstance(node, Const):
            return True
        if isinstance(node, (Sin, Cos)):
            return walk(node.arg, True)
        if isinstance(node, Neg):
            return walk(node.arg, guarded)
        children = node.terms if isinstance(node, Sum) else node.factors
        return all(walk(c, guarded) for c in children)

    return walk(e, False)


def max_coordinate(e: Expr) -> int:
    """Largest coordinate index used in ``e`` (0 for constants)."""
    if isinstance(e, Coord):
        return e.k
    if isinstance(e, Const):
        return 0
    if isinstance(e, (Neg, Sin, Cos)):
        return max_coordinate(e.arg)
    children = e.terms if isinstance(e, Sum) else e.factors
    return max((max_coordinate(c) for c in children), default=0)


def is_periodic(e: Expr, dimension: int, atol: float = 1e-9) -> bool:
    """Sampled test that ``e`` is 2*pi-periodic in every coordinate."""
    f = compile_exprs([e])
    rng = np.random.default_rng(12345)
    x = rng.uniform(-np.pi, np.pi, size=(dimension, 64))
    base = f(x)[0]
    scale = 1.0 + np.max(np.abs(base))
    for k in range(dimension):
        shifted = x.copy()
        shifted[k] += 2 * np.pi
        if np.max(np.abs(f(shifted)[0] - base)) > atol * scale:
            return False
    return True
