"""Fourier discretization of sum-of-squares operators on the torus.

Spectral differentiation ``D_k`` is the multiplier ``i k_k`` on every mode,
Nyquist included, so ``D_k^* = -D_k`` exactly and ``sum_k D_k^* D_k`` equals
the multiplier ``|k|^2`` of ``Delta``.  The operator built from a system of
fields is ``H = sum_i M_i^* M_i`` with ``M_i = sum_k diag(a_ik) D_k``; it is
complex Hermitian and positive semidefinite by construction.

Grid functions have shape ``grid.shape`` (optionally with leading batch axes);
dense matrices act on the C-order flattening of that shape.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, cg, eigsh

from . import symexpr as se
from .grid import TorusGrid
from .vecfield import FieldSystem, VectorField

DENSE_CAP = 4096
SELF_ADJOINT_TOL = 1e-10
PSD_TOL = 1e-8
BOUNDED_RATIO = 1.2
GROWING_RATIO = 1.5


class SpectralError(RuntimeError):
    """Eigensolver / iteration failure."""


class CapExceeded(ValueError):
    pass


# ---------------------------------------------------------------------------
# operators

@dataclass(eq=False)
class GridOperator:
    """Linear operator on grid functions.

    ``kind`` is ``"multiplier"`` (diagonal in Fourier, ``symbol`` set),
    ``"composite"`` (matrix-free ``apply_fn``) or ``"dense"`` (``matrix`` set).
    """

    grid: TorusGrid
    kind: str
    self_adjoint: bool = False
    psd: bool = False
    symbol: np.ndarray | None = None
    apply_fn: Callable | None = None
    matrix: np.ndarray | None = None
    name: str = ""
    _dense: np.ndarray | None = field(default=None, repr=False)
    _eig: tuple | None = field(default=None, repr=False)

    def apply(self, phi: np.ndarray) -> np.ndarray:
        if self.kind == "multiplier":
            return self.grid.ifft(self.symbol * self.grid.fft(phi))
        if self.kind == "dense":
            flat = phi.reshape(phi.shape[: phi.ndim - self.grid.d] + (-1,))
            return (flat @ self.matrix.T).reshape(phi.shape)
        return self.apply_fn(phi)

    __call__ = apply

    @property
    def size(self) -> int:
        return self.grid.size

    def dense(self) -> np.ndarray:
        """Dense matrix of the operator (cached)."""
        if self.kind == "dense":
            return self.matrix
        if self._dense is None:
            if self.size > DENSE_CAP:
                raise CapExceeded(f"grid size {self.size} exceeds the dense cap {DENSE_CAP}")
            basis = np.eye(self.size, dtype=complex).reshape((self.size,) + self.grid.shape)
            cols = self.apply(basis).reshape(self.size, self.size)
            self._dense = np.ascontiguousarray(cols.T)
        return self._dense

    def adjoint(self) -> "GridOperator":
        if self.self_adjoint:
            return self
        if self.kind == "multiplier":
            return multiplier_from_symbol(self.grid, np.conj(self.symbol), name=f"({self.name})*")
        return dense_op(self.grid, self.dense().conj().T, name=f"({self.name})*")

    def eigh(self):
        """Eigenpairs of a self-adjoint operator (cached, dense)."""
        if not self.self_adjoint:
            raise ValueError("eigendecomposition needs a self-adjoint operator")
        if self._eig is None:
            w, v = sla.eigh(self.dense(), driver="evd")
            self._eig = (w, v)
        return self._eig

    # algebra -----------------------------------------------------------
    def __matmul__(self, other: "GridOperator") -> "GridOperator":
        if self.kind == "multiplier" and other.kind == "multiplier":
            return multiplier_from_symbol(self.grid, self.symbol * other.symbol)
        return GridOperator(self.grid, "composite", apply_fn=lambda phi: self.apply(other.apply(phi)),
                            name=f"{self.name}{other.name}")

    def __add__(self, other: "GridOperator") -> "GridOperator":
        if self.kind == "multiplier" and other.kind == "multiplier":
            return multiplier_from_symbol(self.grid, self.symbol + other.symbol)
        return GridOperator(self.grid, "composite", self_adjoint=self.self_adjoint and other.self_adjoint,
                            psd=self.psd and other.psd,
                            apply_fn=lambda phi: self.apply(phi) + other.apply(phi))

    def __sub__(self, other: "GridOperator") -> "GridOperator":
        return self + other.scaled(-1.0)

    def scaled(self, s: complex) -> "GridOperator":
        if self.kind == "multiplier":
            return multiplier_from_symbol(self.grid, s * self.symbol)
        real = np.isreal(s)
        return GridOperator(self.grid, "composite", self_adjoint=self.self_adjoint and real,
                            psd=self.psd and real and np.real(s) >= 0,
                            apply_fn=lambda phi: s * self.apply(phi))


def commutator(a: GridOperator, b: GridOperator) -> GridOperator:
    if a.kind == "multiplier" and b.kind == "multiplier":
        return multiplier_from_symbol(a.grid, np.zeros(a.grid.shape))
    return GridOperator(a.grid, "composite", apply_fn=lambda phi: a.apply(b.apply(phi)) - b.apply(a.apply(phi)))


def dense_op(grid: TorusGrid, matrix: np.ndarray, self_adjoint=False, psd=False, name="") -> GridOperator:
    return GridOperator(grid, "dense", self_adjoint=self_adjoint, psd=psd, matrix=matrix, name=name)


def multiplier_from_symbol(grid: TorusGrid, symbol: np.ndarray, name: str = "") -> GridOperator:
    symbol = np.broadcast_to(symbol, grid.shape)
    if not np.all(np.isfinite(symbol)):
        raise ValueError("symbol is not finite on the frequency lattice")
    real = bool(np.all(np.imag(symbol) == 0))
    if real:
        symbol = np.real(symbol)
    return GridOperator(grid, "multiplier", self_adjoint=real, psd=real and bool(np.all(symbol >= 0)),
                        symbol=symbol, name=name)


def fourier_multiplier_op(grid: TorusGrid, symbol) -> GridOperator:
    """Multiplier with ``symbol(k)``; ``k`` is the integer wavevector array ``(d, n, ..., n)``."""
    values = symbol(grid.wavevectors) if callable(symbol) else np.asarray(symbol)
    return multiplier_from_symbol(grid, values)


def _abs_power(k2: np.ndarray, p: float) -> np.ndarray:
    """``|k|^(2p)`` with ``|0|^0 = 1``."""
    if p == 0:
        return np.ones_like(k2, dtype=float)
    return k2.astype(float) ** p


def laplacian(grid: TorusGrid) -> GridOperator:
    return multiplier_from_symbol(grid, grid.k2.astype(float), "Delta")


def fractional_laplacian(grid: TorusGrid, gamma: float) -> GridOperator:
    """``Delta^gamma``: multiplier ``|k|^(2 gamma)``."""
    return multiplier_from_symbol(grid, _abs_power(grid.k2, gamma), f"Delta^{gamma}")


def bessel_power(grid: TorusGrid, s: float) -> GridOperator:
    """``L^s = (I + Delta)^s``."""
    return multiplier_from_symbol(grid, (1.0 + grid.k2) ** s, f"L^{s}")


def semigroup(grid: TorusGrid, t: float) -> GridOperator:
    """``S_t = exp(-t L)``."""
    return multiplier_from_symbol(grid, np.exp(-t * (1.0 + grid.k2)), f"S_{t}")


def translation(grid: TorusGrid, a) -> GridOperator:
    a = np.asarray(a, dtype=float).reshape((grid.d,) + (1,) * grid.d)
    return multiplier_from_symbol(grid, np.exp(1j * np.sum(grid.wavevectors * a, axis=0)), "T_a")


def derivative(grid: TorusGrid, k: int) -> GridOperator:
    """``D_k`` (1-based axis), multiplier ``i k_k``."""
    if not 1 <= k <= grid.d:
        raise ValueError(f"axis {k} out of range for dimension {grid.d}")
    return multiplier_from_symbol(grid, 1j * grid.wavevectors[k - 1], f"D{k}")


def identity(grid: TorusGrid) -> GridOperator:
    return multiplier_from_symbol(grid, np.ones(grid.shape), "I")


# ---------------------------------------------------------------------------
# assembly

def _derivatives(grid: TorusGrid, phi: np.ndarray) -> list[np.ndarray]:
    phi_hat = grid.fft(phi)
    return [grid.ifft(1j * grid.wavevectors[k] * phi_hat) for k in range(grid.d)]


def _require_periodic(X: VectorField):
    if not X.is_periodic():
        raise ValueError(f"field {X} is not 2*pi-periodic; torus assembly needs trigonometric coefficients")


def assemble_field_matrix(grid: TorusGrid, X: VectorField) -> GridOperator:
    """``M(X) = sum_k diag(a_k) D_k`` as a matrix-free operator."""
    if X.dimension != grid.d:
        raise ValueError(f"field dimension {X.dimension} != grid dimension {grid.d}")
    _require_periodic(X)
    coef = np.stack([grid.sample(c) for c in X.coeffs])

    def apply(phi):
        return np.sum(coef * np.stack(_derivatives(grid, phi), axis=-grid.d - 1), axis=-grid.d - 1)

    return GridOperator(grid, "composite", apply_fn=apply, name=f"M({X})")


def _field_adjoint_apply(grid: TorusGrid, coef: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """``M^* psi = -sum_k D_k (a_k psi)`` for real coefficients ``a_k``."""
    out = 0
    for k in range(grid.d):
        out = out - grid.ifft(1j * grid.wavevectors[k] * grid.fft(coef[k] * psi))
    return out


def assemble_hormander_operator(grid: TorusGrid, system: FieldSystem, verify: bool = True) -> GridOperator:
    """``H = sum_i M_i^* M_i`` with the grid L2 adjoint."""
    if system.dimension != grid.d:
        raise ValueError(f"system dimension {system.dimension} != grid dimension {grid.d}")
    for X in system.fields:
        _require_periodic(X)
    coefs = [np.stack([grid.sample(c) for c in X.coeffs]) for X in system.fields]

    def apply(phi):
        ders = _derivatives(grid, phi)
        out = 0
        for coef in coefs:
            m_phi = sum(coef[k] * ders[k] for k in range(grid.d))
            out = out + _field_adjoint_apply(grid, coef, m_phi)
        return out

    op = GridOperator(grid, "composite", self_adjoint=True, psd=True, apply_fn=apply,
                      name=f"H[{system.name or 'system'}]")
    if verify:
        verify_flags(op)
    return op


def _sample_coefficient(grid: TorusGrid, e) -> np.ndarray:
    e = se.parse(e, grid.d) if isinstance(e, str) else e
    if not se.is_periodic(e, grid.d):
        raise ValueError(f"coefficient {se.to_string(e)} is not 2*pi-periodic")
    return np.broadcast_to(grid.sample(e), grid.shape)


def assemble_divergence_form(grid: TorusGrid, C: Sequence[Sequence]) -> GridOperator:
    """``H = -sum_{i,j=0}^d d_i c_ij d_j`` with ``d_0 = i I`` and ``d_j = D_j``."""
    d = grid.d
    if len(C) != d + 1 or any(len(row) != d + 1 for row in C):
        raise ValueError(f"coefficient matrix must be {d + 1}x{d + 1}")
    exprs = [[se.parse(e, d) if isinstance(e, str) else e for e in row] for row in C]
    for i in range(d + 1):
        for j in range(i + 1, d + 1):
            if not se.is_zero(se.simplify(exprs[i][j] - exprs[j][i])):
                raise ValueError(f"coefficient matrix is not symmetric at ({i}, {j})")
    c = np.stack([np.stack([_sample_coefficient(grid, e) for e in row]) for row in exprs])
    pts = np.moveaxis(c.reshape(d + 1, d + 1, -1), -1, 0)
    lam = np.linalg.eigvalsh(pts)
    if lam[:, 0].min() < -PSD_TOL * max(1.0, np.abs(lam).max()):
        raise ValueError(f"coefficient matrix is not positive semidefinite (min eigenvalue {lam[:, 0].min():.3e})")

    def partial(i, phi):
        if i == 0:
            return 1j * phi
        return grid.ifft(1j * grid.wavevectors[i - 1] * grid.fft(phi))

    def apply(phi):
        ders = [partial(j, phi) for j in range(d + 1)]
        out = 0
        for i in range(d + 1):
            flux = sum(c[i, j] * ders[j] for j in range(d + 1))
            out = out - partial(i, flux)
        return out

    op = GridOperator(grid, "composite", self_adjoint=True, psd=True, apply_fn=apply, name="H[div]")
    verify_flags(op)
    return op


def verify_flags(op: GridOperator, probes: int = 4, seed: int = 0) -> dict:
    """Probe-based check of the self-adjoint / PSD flags; raises if violated."""
    rng = np.random.default_rng(seed)
    shape = (probes,) + op.grid.shape
    u = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    au, av = op.apply(u), op.apply(v)
    axes = tuple(range(1, u.ndim))
    scale = np.sqrt(np.sum(np.abs(au) ** 2, axis=axes) * np.sum(np.abs(v) ** 2, axis=axes))
    sa = np.abs(np.sum(np.conj(v) * au, axis=axes) - np.sum(np.conj(av) * u, axis=axes))
    sa_err = float(np.max(sa / np.maximum(scale, 1e-300)))
    quad = np.real(np.sum(np.conj(u) * au, axis=axes))
    psd_err = float(np.max(-quad / np.maximum(np.sqrt(np.sum(np.abs(au) ** 2, axis=axes) * np.sum(np.abs(u) ** 2, axis=axes)), 1e-300)))
    if op.self_adjoint and sa_err > SELF_ADJOINT_TOL:
        raise ArithmeticError(f"operator flagged self-adjoint fails the probe check ({sa_err:.2e})")
    if op.psd and psd_err > PSD_TOL:
        raise ArithmeticError(f"operator flagged PSD has a negative Rayleigh quotient ({psd_err:.2e})")
    return {"self_adjoint_error": sa_err, "psd_violation": max(psd_err, 0.0)}


def dense_flag_errors(op: GridOperator) -> tuple[float, float]:
    """(||A - A*|| / ||A||, lambda_min / lambda_max) of the densified operator."""
    a = op.dense()
    norm = max(np.linalg.norm(a, 2), 1e-300)
    sym = np.linalg.norm(a - a.conj().T, 2) / norm
    lam = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
    return float(sym), float(lam[0] / max(lam[-1], 1e-300))


# ---------------------------------------------------------------------------
# double commutators

def _as_apply(op):
    if isinstance(op, GridOperator):
        return op.apply
    m = np.asarray(op)
    return lambda v: m @ v


def _ip(u, v) -> complex:
    return complex(np.vdot(u, v))


def double_commutator_form(A, B1, B2, psi: np.ndarray, phi: np.ndarray) -> complex:
    """Four-term form equal to ``(psi, [B1, [B2, A]] phi)`` for self-adjoint A, B1, B2."""
    a, b1, b2 = _as_apply(A), _as_apply(B1), _as_apply(B2)
    return (_ip(b2(b1(psi)), a(phi)) - _ip(a(b1(psi)), b2(phi))
            - _ip(a(b2(psi)), b1(phi)) + _ip(a(psi), b2(b1(phi))))


def random_hermitian(n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (z + z.conj().T)


def identity_errors(A: np.ndarray, B1: np.ndarray, B2: np.ndarray, phi: np.ndarray) -> tuple[float, float]:
    """Relative errors of the two form identities for self-adjoint matrices.

    * ``Re(B2 phi, [B1, A] phi) = 1/2 (phi, [B2, [B1, A]] phi)``
    * ``Re(A phi, B^2 phi) = (B phi, A B phi) + 1/2 (phi, [B, [B, A]] phi)`` with ``B = B1``

    Both are normalized by ``||A|| ||B1|| ||B2|| ||phi||^2`` (``||B1||^2`` for the second).
    """
    nA, n1, n2 = (np.linalg.norm(M, 2) for M in (A, B1, B2))
    nphi = np.vdot(phi, phi).real
    c1 = B1 @ A - A @ B1
    lhs1 = _ip(B2 @ phi, c1 @ phi).real
    rhs1 = 0.5 * _ip(phi, (B2 @ c1 - c1 @ B2) @ phi)
    e1 = abs(lhs1 - rhs1) / (nA * n1 * n2 * nphi)
    B = B1
    lhs2 = _ip(A @ phi, B @ (B @ phi)).real
    rhs2 = _ip(B @ phi, A @ (B @ phi)) + 0.5 * double_commutator_form(A, B, B, phi, phi)
    e2 = abs(lhs2 - rhs2) / (nA * n1 * n1 * nphi)
    return float(e1), float(e2)


# ---------------------------------------------------------------------------
# norm estimation

def operator_norm(apply: Callable, grid: TorusGrid, tol: float = 1e-6, seed: int = 0) -> float:
    """Largest |eigenvalue| of a Hermitian grid operator (implicitly restarted Lanczos)."""
    N = grid.size
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(N) + 1j * rng.standard_normal(N)

    def mv(v):
        return apply(np.asarray(v).reshape(grid.shape)).reshape(-1)

    probe = mv(v0)
    if np.linalg.norm(probe) <= 1e-14 * np.linalg.norm(v0):
        return float(np.linalg.norm(probe) / np.linalg.norm(v0))
    if N <= 64:
        basis = np.eye(N, dtype=complex)
        m = np.stack([mv(b) for b in basis], axis=1)
        return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T)))))
    op = LinearOperator((N, N), matvec=mv, dtype=complex)
    try:
        w = eigsh(op, k=1, which="LM", tol=tol, v0=v0, return_eigenvectors=False, maxiter=20 * N)
    except ArpackNoConvergence as exc:
        raise SpectralError(f"norm iteration did not converge: {exc}") from exc
    return float(np.abs(w[0]))


def _system_operator(H, grid: TorusGrid) -> GridOperator:
    if isinstance(H, FieldSystem):
        return assemble_hormander_operator(grid, H)
    if isinstance(H, GridOperator):
        if H.grid != grid:
            raise ValueError("operator lives on a different grid")
        return H
    return H(grid)


def _double_commutator_apply(T: GridOperator, H: GridOperator):
    """``[T, [T, H]] = T^2 H - 2 T H T + H T^2`` for a multiplier T."""
    if T.kind == "multiplier" and H.kind == "multiplier":
        return commutator(T, commutator(T, H)).apply  # diagonal operators commute exactly

    def apply(phi):
        t_phi = T.apply(phi)
        return T.apply(T.apply(H.apply(phi))) - 2 * T.apply(H.apply(t_phi)) + H.apply(T.apply(t_phi))
    return apply


def _sandwich(left: GridOperator, inner: Callable, right: GridOperator):
    return lambda phi: left.apply(inner(right.apply(phi)))


def coefficient_bandwidth(system: FieldSystem, grid: TorusGrid, rel_tol: float = 1e-12) -> int:
    """Largest frequency (max-norm) present in any sampled coefficient of the system."""
    band = 0
    for X in system.fields:
        for c in X.coeffs:
            hat = np.abs(grid.fft(np.broadcast_to(grid.sample(c), grid.shape)))
            if hat.max() == 0:
                continue
            mask = hat > rel_tol * hat.max()
            band = max(band, int(np.abs(grid.wavevectors[:, mask]).max()))
    return band


def band_projection(grid: TorusGrid, band: int) -> GridOperator:
    """Orthogonal projection onto modes with ``max_j |k_j| <= band``."""
    if band < 0:
        raise ValueError("grid too coarse for the coefficient bandwidth")
    inside = np.all(np.abs(grid.wavevectors) <= band, axis=0)
    return multiplier_from_symbol(grid, inside.astype(float), f"P_{band}")


def galerkin_operator(system: FieldSystem, grid: TorusGrid) -> GridOperator:
    """Compression of the continuous ``H`` onto modes with ``max_j |k_j| <= n/2 - 1``.

    Coefficient products are formed on the doubled grid, where they are exact,
    and the result is truncated back; the Nyquist lines are mapped to zero.
    Unlike collocation, commutators with multipliers see no aliasing.
    """
    K = coefficient_bandwidth(system, TorusGrid(grid.d, 2 * grid.n))
    if 2 * K > grid.n // 2:
        raise ValueError(f"coefficient bandwidth {K} too large for n={grid.n}")
    fine = TorusGrid(grid.d, 2 * grid.n)
    H2 = assemble_hormander_operator(fine, system, verify=False)
    keep = np.arange(-(grid.n // 2) + 1, grid.n // 2)
    coarse_idx = np.ix_(*([keep % grid.n] * grid.d))
    fine_idx = np.ix_(*([keep % fine.n] * grid.d))
    ratio = fine.size / grid.size
    d = grid.d

    def apply(phi):
        batch = phi.shape[: phi.ndim - d]
        hat = grid.fft(phi)
        padded = np.zeros(batch + fine.shape, dtype=complex)
        padded[(Ellipsis,) + fine_idx] = hat[(Ellipsis,) + coarse_idx]
        out_fine = fine.fft(H2.apply(fine.ifft(padded) * ratio)) / ratio
        out = np.zeros(batch + grid.shape, dtype=complex)
        out[(Ellipsis,) + coarse_idx] = out_fine[(Ellipsis,) + fine_idx]
        return grid.ifft(out)

    return GridOperator(grid, "composite", self_adjoint=True, psd=True, apply_fn=apply,
                        name=f"H_G[{system.name or 'system'}]")


def _compressed(H, grid: TorusGrid):
    """Operator for commutator estimates: Galerkin for systems, as given otherwise."""
    if isinstance(H, FieldSystem):
        return galerkin_operator(H, grid), band_projection(grid, grid.n // 2 - 1)
    return _system_operator(H, grid), identity(grid)


def commutator_bound_estimate(H, grids: Sequence[int], m: int = 1, d: int | None = None,
                              seed: int = 0, tol: float = 1e-6) -> list[float]:
    """Per grid: ``sum_k || L^{-m/2} [D_k^m, [D_k^m, H]] L^{-m/2} ||``.

    ``H`` is a FieldSystem, a GridOperator factory ``grid -> GridOperator``
    (then ``d`` is required) or -- for a single grid -- a GridOperator.  For a
    FieldSystem the Galerkin operator is used (see ``galerkin_operator``):
    collocation aliasing at the band edge makes grid commutators with ``D_k``
    grow like ``n^2`` even though the continuous commutator is bounded.
    """
    if not 1 <= m <= 3:
        raise ValueError("commutator order m must be in 1..3")
    d = H.dimension if isinstance(H, FieldSystem) else d
    out = []
    for n in grids:
        grid = TorusGrid(d, n)
        op, proj = _compressed(H, grid)
        lm = proj @ bessel_power(grid, -m / 2)
        total = 0.0
        for k in range(1, d + 1):
            dk = derivative(grid, k)
            dm = dk
            for _ in range(m - 1):
                dm = dm @ dk
            total += operator_norm(_sandwich(lm, _double_commutator_apply(dm, op), lm), grid, tol, seed)
        out.append(total)
    return out


def fractional_commutator_estimate(H, grids: Sequence[int], rho: float = 1.0, delta: float = 0.6,
                                   d: int | None = None, seed: int = 0, tol: float = 1e-6) -> list[float]:
    """Per grid: ``|| L^{-(rho+delta)} [L^rho, [L^rho, H]] L^{-(rho+delta)} ||``."""
    d = H.dimension if isinstance(H, FieldSystem) else d
    out = []
    for n in grids:
        grid = TorusGrid(d, n)
        op, proj = _compressed(H, grid)
        outer = proj @ bessel_power(grid, -(rho + delta))
        out.append(operator_norm(_sandwich(outer, _double_commutator_apply(bessel_power(grid, rho), op), outer),
                                 grid, tol, seed))
    return out


@dataclass
class SemigroupBound:
    grids: list
    plain: list  # sup_t ||[S_t,[S_t,H]]|| per grid
    refined: list  # sup_t ||(I-S_t)^{-1} [S_t,[S_t,H]] (I-S_t)^{-1}|| per grid
    per_t: dict = field(default_factory=dict)


def semigroup_commutator_bound(H, t_list: Sequence[float], grids: Sequence[int], d: int | None = None,
                               seed: int = 0, tol: float = 1e-6) -> SemigroupBound:
    """Sup over ``t`` of the double commutator of ``S_t`` with ``H``, and its ``(I-S_t)^{-1}``-sandwiched variant.

    ``I - S_t`` has symbol ``1 - exp(-t(1+|k|^2)) > 0``, so the refined variant is
    defined on the whole grid space (constants included).
    """
    d = H.dimension if isinstance(H, FieldSystem) else d
    plain, refined, per_t = [], [], {}
    for n in grids:
        grid = TorusGrid(d, n)
        op, proj = _compressed(H, grid)
        rows = []
        for t in t_list:
            st = semigroup(grid, t)
            dc = _double_commutator_apply(st, op)
            inv = proj @ multiplier_from_symbol(grid, 1.0 / (1.0 - st.symbol))
            rows.append((operator_norm(_sandwich(proj, dc, proj), grid, tol, seed),
                         operator_norm(_sandwich(inv, dc, inv), grid, tol, seed)))
        per_t[n] = rows
        plain.append(max(r[0] for r in rows))
        refined.append(max(r[1] for r in rows))
    return SemigroupBound(list(grids), plain, refined, per_t)


def successive_ratios(values: Sequence[float]) -> list[float]:
    return [values[i + 1] / values[i] for i in range(len(values) - 1)]


# ---------------------------------------------------------------------------
# improvement lemma

@dataclass
class ImprovementCheck:
    hypotheses_hold: bool
    form_margin: float  # lambda_min(A - B^2)
    commutator_margin: float  # min over signs of lambda_min(eps B^4 + c I -/+ K)
    worst_margin: float  # min over probes of ||A phi|| - (1-eps)||B^2 phi|| + sqrt(c)||phi||
    conclusion_holds: bool


def improvement_lemma_check(A: np.ndarray, B: np.ndarray, eps: float, c: float, probes: int = 50,
                            seed: int = 0, tol: float = 1e-9) -> ImprovementCheck:
    """Hypotheses by eigen-analysis, conclusion on random probes (normalized to unit norm)."""
    A = np.asarray(A)
    B = np.asarray(B)
    B2 = B @ B
    K = B @ (B @ A - A @ B) - (B @ A - A @ B) @ B
    K = 0.5 * (K + K.conj().T)
    scale = max(1.0, np.linalg.norm(A, 2), np.linalg.norm(B2, 2) ** 2)
    form = float(np.linalg.eigvalsh(0.5 * (A + A.conj().T) - B2)[0])
    base = eps * (B2 @ B2) + c * np.eye(len(A))
    comm = float(min(np.linalg.eigvalsh(base - K)[0], np.linalg.eigvalsh(base + K)[0]))
    hyp = form >= -tol * scale and comm >= -tol * scale

    rng = np.random.default_rng(seed)
    n = len(A)
    phis = rng.standard_normal((probes, n)) + 1j * rng.standard_normal((probes, n))
    phis /= np.linalg.norm(phis, axis=1, keepdims=True)
    lhs = np.linalg.norm(phis @ A.T, axis=1)
    rhs = (1 - eps) * np.linalg.norm(phis @ B2.T, axis=1) - np.sqrt(c) * np.linalg.norm(phis, axis=1)
    worst = float(np.min(lhs - rhs))
    return ImprovementCheck(bool(hyp), form, comm, worst, worst >= -tol)


def minimal_commutator_constant(A: np.ndarray, B: np.ndarray, eps: float) -> float:
    """Least ``c >= 0`` with ``|(phi, [B,[B,A]] phi)| <= eps ||B^2 phi||^2 + c ||phi||^2``."""
    B2 = B @ B
    K = B @ (B @ A - A @ B) - (B @ A - A @ B) @ B
    K = 0.5 * (K + K.conj().T)
    B4 = B2 @ B2
    return max(float(np.linalg.eigvalsh(K - eps * B4)[-1]), float(np.linalg.eigvalsh(-K - eps * B4)[-1]), 0.0)


def pencil_instance(system: FieldSystem, n: int, t: float, r: int, eps: float = 0.5):
    """``A = c1 (I + H)``, ``B = t^{-1/(2r)} (I - S_t)`` with the least ``c1`` making ``A >= B^2``."""
    grid = TorusGrid(system.dimension, n)
    H = assemble_hormander_operator(grid, system).dense()
    H = 0.5 * (H + H.conj().T)
    B = t ** (-1.0 / (2 * r)) * (np.eye(grid.size) - semigroup(grid, t).dense())
    B = 0.5 * (B + B.conj().T)
    M = np.eye(grid.size) + H
    c1 = float(sla.eigh(B @ B, M, eigvals_only=True, subset_by_index=[grid.size - 1, grid.size - 1])[0])
    A = c1 * M
    c = minimal_commutator_constant(A, B, eps)
    return A, B, eps, c


# ---------------------------------------------------------------------------
# subelliptic constants

def best_subelliptic_constant(H: GridOperator, gamma: float, method: str = "auto", cap: int = DENSE_CAP,
                              seed: int = 0, tol: float = 1e-8) -> float:
    """Least ``c`` with ``c (phi, (I+H) phi) >= ||Delta^{gamma/2} phi||^2`` on the grid.

    ``method="dense"`` solves the generalized problem ``Delta^gamma v = c (I+H) v``;
    ``"lanczos"`` runs ARPACK on ``Delta^{gamma/2} (I+H)^{-1} Delta^{gamma/2}`` with CG solves.
    ``"auto"`` picks dense when ``n^d <= cap``.
    """
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must lie in [0, 1]")
    grid = H.grid
    if method == "auto":
        method = "dense" if grid.size <= cap else "lanczos"
    half = fractional_laplacian(grid, gamma / 2)
    if method == "dense":
        hd = H.dense()
        M = np.eye(grid.size) + 0.5 * (hd + hd.conj().T)
        G = fractional_laplacian(grid, gamma).dense()
        G = 0.5 * (G + G.conj().T)
        return float(sla.eigh(G, M, eigvals_only=True, subset_by_index=[grid.size - 1, grid.size - 1])[0])
    if method != "lanczos":
        raise ValueError(f"unknown method {method!r}")
    N = grid.size
    shift = GridOperator(grid, "composite", apply_fn=lambda p: p + H.apply(p))
    solve_op = LinearOperator((N, N), dtype=complex,
                              matvec=lambda v: shift.apply(np.asarray(v).reshape(grid.shape)).reshape(-1))

    def mv(v):
        rhs = half.apply(np.asarray(v).reshape(grid.shape)).reshape(-1)
        x, info = cg(solve_op, rhs, rtol=1e-13, atol=0.0, maxiter=10 * N)
        if info != 0:
            raise SpectralError(f"CG solve did not converge (info={info})")
        return half.apply(x.reshape(grid.shape)).reshape(-1)

    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    try:
        w = eigsh(LinearOperator((N, N), matvec=mv, dtype=complex), k=1, which="LA", tol=tol, v0=v0,
                  return_eigenvectors=False, maxiter=20 * N)
    except ArpackNoConvergence as exc:
        raise SpectralError(f"Lanczos iteration did not converge: {exc}") from exc
    return float(np.real(w[0]))


def _power_constant_from_symbol(H: GridOperator, symbol: np.ndarray, alpha: float) -> float:
    """``|| diag_F(symbol) (I+H)^{-alpha} ||`` through the eigendecomposition of H."""
    grid = H.grid
    if grid.size > DENSE_CAP:
        raise CapExceeded(f"grid size {grid.size} exceeds the eigendecomposition cap {DENSE_CAP}")
    lam, V = H.eigh()
    lam = np.maximum(lam, 0.0)
    # Fourier coefficients of the eigenvectors (unitary normalization)
    G = np.fft.fftn(V.T.reshape((-1,) + grid.shape), axes=grid.axes, norm="ortho").reshape(grid.size, -1).T
    T = (symbol.reshape(-1)[:, None] * G) * ((1.0 + lam) ** (-alpha))[None, :]
    Q = T.conj().T @ T
    Q = 0.5 * (Q + Q.conj().T)
    top = sla.eigh(Q, eigvals_only=True, subset_by_index=[grid.size - 1, grid.size - 1])[0]
    return float(np.sqrt(max(top, 0.0)))


def power_constant(H: GridOperator, gamma: float, alpha: float) -> float:
    """``|| Delta^{alpha gamma} (I+H)^{-alpha} ||`` -- the least grid-level constant of the power inequality."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if alpha == 0:
        return 1.0
    return _power_constant_from_symbol(H, _abs_power(H.grid.k2, alpha * gamma), alpha)


@dataclass
class OrderRelation:
    constant: float  # c_L = || L^gamma (I+H)^{-1} ||
    squared_margin: float  # lambda_min(c_L^2 (I+H)^2 - L^{2 gamma}), relative to lambda_max(L^{2 gamma})
    root_margin: float  # lambda_min(c_L (I+H) - L^gamma), relative to lambda_max(L^gamma)

    @property
    def holds(self) -> bool:
        return self.squared_margin >= -PSD_TOL and self.root_margin >= -PSD_TOL


def order_relation_check(H: GridOperator, gamma: float) -> OrderRelation:
    """``c^2 (I+H)^2 >= L^{2 gamma}`` with ``c = ||L^gamma (I+H)^{-1}||``, and its operator square root."""
    grid = H.grid
    cL = _power_constant_from_symbol(H, (1.0 + grid.k2.astype(float)) ** gamma, 1.0)
    lam, V = H.eigh()
    M = (V * (1.0 + lam)) @ V.conj().T
    L2 = bessel_power(grid, 2 * gamma).dense()
    L1 = bessel_power(grid, gamma).dense()
    sq = cL ** 2 * (M @ M) - L2
    rt = cL * M - L1
    s_margin = np.linalg.eigvalsh(0.5 * (sq + sq.conj().T))[0] / (1.0 + grid.k2.max()) ** (2 * gamma)
    r_margin = np.linalg.eigvalsh(0.5 * (rt + rt.conj().T))[0] / (1.0 + grid.k2.max()) ** gamma
    return OrderRelation(cL, float(s_margin), float(r_margin))


# ---------------------------------------------------------------------------
# refinement sweeps

@dataclass
class SubellipticityReport:
    system: str
    gamma: float
    alpha: float
    grids: list
    constants: list
    ratios: list
    verdict: str
    runtime: float = 0.0

    def to_dict(self) -> dict:
        """JSON form; runtime is left out so identical inputs serialize identically."""
        return {"system": self.system, "gamma": self.gamma, "alpha": self.alpha,
                "grids": [{"n": n, "constant": c} for n, c in zip(self.grids, self.constants)],
                "ratios": self.ratios, "verdict": self.verdict}


def classify(ratios: Sequence[float], bounded: float = BOUNDED_RATIO, growing: float = GROWING_RATIO) -> str:
    if bounded > growing:
        raise ValueError(f"bounded threshold {bounded} exceeds growing threshold {growing}")
    if all(r <= bounded for r in ratios):
        return "bounded"
    if ratios and ratios[-1] >= growing:
        return "growing"
    return "inconclusive"


class _OperatorCache:
    """Per-(system, n) operator cache so eigendecompositions are shared across (gamma, alpha)."""

    def __init__(self):
        self._ops: dict = {}

    def get(self, system: FieldSystem, n: int) -> GridOperator:
        key = (system, n)
        if key not in self._ops:
            self._ops[key] = (system, assemble_hormander_operator(TorusGrid(system.dimension, n), system))
        return self._ops[key][1]


_CACHE = _OperatorCache()


def system_operator(system: FieldSystem, n: int) -> GridOperator:
    return _CACHE.get(system, n)


def refinement_sweep(system: FieldSystem, gamma: float, alpha: float, grids: Sequence[int],
                     bounded: float = BOUNDED_RATIO, growing: float = GROWING_RATIO,
                     jobs: int = 1) -> SubellipticityReport:
    """Power constants across ascending grids and the bounded/growing verdict."""
    if list(grids) != sorted(grids):
        raise ValueError("grids must be ascending")
    start = time.perf_counter()
    ops = [system_operator(system, n) for n in grids]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            constants = list(pool.map(lambda op: power_constant(op, gamma, alpha), ops))
    else:
        constants = [power_constant(op, gamma, alpha) for op in ops]
    ratios = successive_ratios(constants)
    return SubellipticityReport(system.name or "system", gamma, alpha, list(grids), constants, ratios,
                                classify(ratios, bounded, growing), time.perf_counter() - start)


@dataclass
class OrderScan:
    gamma_star: float | None
    reports: list

    def to_dict(self) -> dict:
        return {"gamma_star": self.gamma_star, "table": [r.to_dict() for r in self.reports]}


def default_gamma_grid() -> list[float]:
    return [round(0.1 * i, 1) for i in range(1, 11)]


def order_scan(system: FieldSystem, grids: Sequence[int], gammas: Sequence[float] | None = None,
               alpha: float = 1.0, bounded: float = BOUNDED_RATIO, growing: float = GROWING_RATIO,
               jobs: int = 1) -> OrderScan:
    """Largest gamma whose refinement sweep is "bounded" (None if there is none)."""
    gammas = default_gamma_grid() if gammas is None else list(gammas)
    if any(not 0 < g <= 1 for g in gammas):
        raise ValueError("gammas must lie in (0, 1]")
    for n in grids:  # build (and eigendecompose) each operator once, up front
        system_operator(system, n).eigh()

    def run(g):
        return refinement_sweep(system, g, alpha, grids, bounded, growing)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            reports = list(pool.map(run, gammas))
    else:
        reports = [run(g) for g in gammas]
    ok = [r.gamma for r in reports if r.verdict == "bounded"]
    return OrderScan(max(ok) if ok else None, reports)
