"""Vector fields with expression coefficients, Lie brackets and multi-commutators.

Bracket convention
------------------
``lie_bracket(X, Y)`` is the commutator of first-order differential operators,
``[X, Y] = XY - YX = sum_k (X b_k - Y a_k) d_k`` for ``X = sum a_k d_k`` and
``Y = sum b_k d_k``.  Multi-commutators are RIGHT-nested::

    X_[(i1, i2, ..., in)] = [X_i1, [X_i2, ..., [X_i(n-1), X_in] ...]]

Reversing the nesting flips signs at every even length, so keep it in mind
when comparing against other sources.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from itertools import product
from typing import Sequence

import numpy as np

from . import symexpr as se

MultiIndex = tuple  # tuple[int, ...] with 1-based entries


@dataclass(frozen=True)
class VectorField:
    """``X = sum_k coeffs[k-1] * d/dx_k``."""

    coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(self.coeffs))
        if not self.coeffs:
            raise ValueError("a vector field needs at least one coefficient")
        for c in self.coeffs:
            if se.max_coordinate(c) > len(self.coeffs):
                raise ValueError(
                    f"coefficient {se.to_string(c)!r} uses a coordinate beyond dimension {len(self.coeffs)}"
                )

    @cached_property
    def _hash(self):
        return hash(self.coeffs)

    def __hash__(self):
        return self._hash

    @property
    def dimension(self) -> int:
        return len(self.coeffs)

    @classmethod
    def from_strings(cls, texts: Sequence[str]) -> "VectorField":
        d = len(texts)
        return cls(tuple(se.parse(t, d) for t in texts))

    @classmethod
    def coordinate(cls, k: int, d: int) -> "VectorField":
        """The constant field d/dx_k in R^d."""
        return cls(tuple(se.ONE if j == k else se.ZERO for j in range(1, d + 1)))

    @classmethod
    def zero(cls, d: int) -> "VectorField":
        return cls((se.ZERO,) * d)

    def is_zero(self) -> bool:
        return all(se.is_zero(c) for c in self.coeffs)

    def is_bounded(self) -> bool:
        return all(se.is_bounded(c) for c in self.coeffs)

    def is_periodic(self) -> bool:
        return all(se.is_periodic(c, self.dimension) for c in self.coeffs)

    def scaled(self, s) -> "VectorField":
        return VectorField(tuple(se.simplify(se.Prod((se.Const(s), c))) for c in self.coeffs))

    def __add__(self, other: "VectorField") -> "VectorField":
        _check_dims(self, other)
        return VectorField(tuple(se.simplify(se.Sum((a, b))) for a, b in zip(self.coeffs, other.coeffs)))

    def __neg__(self) -> "VectorField":
        return self.scaled(-1)

    def __sub__(self, other: "VectorField") -> "VectorField":
        return self + (-other)

    @cached_property
    def _compiled(self):
        return se.compile_exprs(self.coeffs)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Coefficient vector at ``x`` of shape ``(d, *batch)``."""
        return self._compiled(np.asarray(x, dtype=float))

    def to_strings(self) -> list[str]:
        return [se.to_string(c) for c in self.coeffs]

    def __str__(self):
        parts = [f"({se.to_string(c)})*d{k}" for k, c in enumerate(self.coeffs, 1) if not se.is_zero(c)]
        return " + ".join(parts) if parts else "0"


@dataclass(frozen=True)
class FieldSystem:
    """Fields ``X_1..X_N`` on R^d plus a domain descriptor.

    ``domain`` is ``"torus"`` (period 2*pi in every coordinate) or ``"box"``,
    in which case samples are drawn from ``[-box_bound, box_bound]^d``.
    """

    fields: tuple
    domain: str = "torus"
    box_bound: float = 1.0
    name: str = field(default="system", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        if not self.fields:
            raise ValueError("a field system needs N >= 1 fields")
        dims = {f.dimension for f in self.fields}
        if len(dims) != 1:
            raise ValueError(f"fields have mismatched dimensions {sorted(dims)}")
        if self.domain not in ("torus", "box"):
            raise ValueError(f"unknown domain {self.domain!r}")

    @cached_property
    def _hash(self):
        return hash((self.fields, self.domain, self.box_bound))

    def __hash__(self):
        return self._hash

    @property
    def dimension(self) -> int:
        return self.fields[0].dimension

    @property
    def count(self) -> int:
        return len(self.fields)

    @classmethod
    def from_strings(cls, fields: Sequence[Sequence[str]], **kw) -> "FieldSystem":
        return cls(tuple(VectorField.from_strings(f) for f in fields), **kw)


def _check_dims(X: VectorField, Y: VectorField):
    if X.dimension != Y.dimension:
        raise ValueError(f"dimension mismatch: {X.dimension} vs {Y.dimension}")


def apply_field(X: VectorField, phi: se.Expr) -> se.Expr:
    """The function ``X phi = sum_k a_k d_k phi``."""
    terms = [se.Prod((a, se.differentiate(phi, k))) for k, a in enumerate(X.coeffs, 1)]
    return se.simplify(se.Sum(tuple(terms)))


@lru_cache(maxsize=4096)
def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """``[X, Y] = XY - YX`` as a vector field (coefficients simplified)."""
    _check_dims(X, Y)
    return VectorField(tuple(
        se.simplify(se.Sum((apply_field(X, b), se.Neg(apply_field(Y, a)))))
        for a, b in zip(X.coeffs, Y.coeffs)
    ))


def _check_index(alpha: MultiIndex, n_fields: int):
    if len(alpha) < 1:
        raise ValueError("multi-index must have length >= 1")
    for i in alpha:
        if not 1 <= i <= n_fields:
            raise ValueError(f"multi-index entry {i} outside [1, {n_fields}]")


def multi_commutator(system: FieldSystem, alpha: Sequence[int]) -> VectorField:
    """Right-nested multi-commutator ``X_[alpha]``."""
    alpha = tuple(alpha)
    _check_index(alpha, system.count)
    return _nested(system.fields, alpha)


@lru_cache(maxsize=8192)
def _nested(fields: tuple, alpha: tuple) -> VectorField:
    if len(alpha) == 1:
        return fields[alpha[0] - 1]
    return lie_bracket(fields[alpha[0] - 1], _nested(fields, alpha[1:]))


def enumerate_multiindices(n_fields: int, r: int) -> list[MultiIndex]:
    """All multi-indices of length 1..r over {1..N}, ordered by (length, entries)."""
    if n_fields < 1 or r < 1:
        raise ValueError("need N >= 1 and r >= 1")
    out: list[MultiIndex] = []
    for length in range(1, r + 1):
        out.extend(product(range(1, n_fields + 1), repeat=length))
    return out
