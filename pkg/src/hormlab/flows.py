"""Flows exp(tX), flow-product remainders and Hoelder-type norms on the torus.

Flows are integrated with an embedded Dormand-Prince 5(4) pair under PI step
control, vectorised over batches of starting points (all grid nodes at once
for the semi-Lagrangian transport).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from . import symexpr as se
from .bch import MAX_ORDER, bch_correction_fields
from .grid import TorusGrid
from .vecfield import FieldSystem, VectorField, apply_field

DEFAULT_TOL = 1e-10
NOISE_FLOOR = 1e-14


class IntegrationError(RuntimeError):
    """Step-size underflow or step budget exhausted."""


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_LOW = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B_LOW

# PI controller (Hairer-Wanner DOPRI5 defaults)
_BETA = 0.04
_EXPO = 0.2 - 0.75 * _BETA
_SAFE = 0.9
_FAC_MIN, _FAC_MAX = 0.2, 10.0


@dataclass
class FlowResult:
    endpoint: np.ndarray
    error_estimate: float  # largest accepted local error (absolute, max-norm)
    steps: int
    rejected: int = 0


def _dopri(rhs, y0: np.ndarray, t: float, tol: float, max_steps: int = 200_000) -> FlowResult:
    y = np.array(y0, dtype=float)
    if t == 0:
        return FlowResult(y, 0.0, 0)
    direction = 1.0 if t > 0 else -1.0
    remaining = abs(t)
    h = remaining
    err_old = 1e-4
    err_max = 0.0
    steps = rejected = 0
    k = [None] * 7
    k[0] = rhs(y)
    while remaining > 0:
        if steps + rejected >= max_steps:
            raise IntegrationError(f"step budget of {max_steps} exhausted")
        if h < 1e-14 * max(1.0, abs(t)) and h < remaining:
            raise IntegrationError(f"step size underflow (h={h:.3e}) at t={direction * (abs(t) - remaining):.6g}")
        h = min(h, remaining)
        hs = direction * h
        for s in range(1, 7):
            acc = y + hs * sum(a * ks for a, ks in zip(_A[s], k[:s]) if a != 0.0)
            k[s] = rhs(acc)
        y_new = acc  # stage 7 is evaluated at the 5th-order solution (FSAL)
        err_vec = hs * sum(e * ks for e, ks in zip(_E, k) if e != 0.0)
        err_abs = float(np.max(np.abs(err_vec))) if err_vec.size else 0.0
        err = err_abs / tol
        if err <= 1.0:
            y = y_new
            k[0] = k[6]
            remaining -= h
            steps += 1
            err_max = max(err_max, err_abs)
            fac = _SAFE * max(err, 1e-10) ** (-_EXPO) * err_old ** _BETA
            h *= min(_FAC_MAX, max(_FAC_MIN, fac))
            err_old = max(err, 1e-4)
        else:
            rejected += 1
            h *= max(_FAC_MIN, _SAFE * err ** (-_EXPO))
    return FlowResult(y, err_max, steps, rejected)


def integrate_flow(X: VectorField, x, t: float, tol: float = DEFAULT_TOL) -> FlowResult:
    """``exp(tX)(x)``: solve ``y' = a(y)``, ``y(0) = x`` up to time ``t``.

    ``x`` is a point of shape ``(d,)`` or a batch of shape ``(d, M)``.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    x = np.asarray(x, dtype=float)
    if x.shape[0] != X.dimension:
        raise ValueError(f"point dimension {x.shape[0]} does not match field dimension {X.dimension}")
    return _dopri(X, x, float(t), tol)


def flow(X: VectorField, x, t: float, tol: float = DEFAULT_TOL) -> np.ndarray:
    return integrate_flow(X, x, t, tol).endpoint


def check_group_law(X: VectorField, x, s: float, t: float, tol: float = DEFAULT_TOL) -> float:
    """``|exp(tX)(exp(sX)(x)) - exp((t+s)X)(x)|``."""
    two_step = flow(X, flow(X, x, s, tol), t, tol)
    one_step = flow(X, x, s + t, tol)
    return float(np.linalg.norm(two_step - one_step))


def taylor_remainder(X: VectorField, phi: se.Expr, x, n: int, t: float, tol: float = 1e-13) -> float:
    """``|phi(exp(tX)(x)) - sum_{j<=n} t^j/j! (X^j phi)(x)|``."""
    if not 0 <= n <= 8:
        raise ValueError(f"Taylor order must be in [0, 8], got {n}")
    x = np.asarray(x, dtype=float)
    series = 0.0
    term = phi
    for j in range(n + 1):
        series += t ** j / math.factorial(j) * se.evaluate(term, x)
        if j < n:
            term = apply_field(X, term)
    return abs(se.evaluate(phi, flow(X, x, t, tol)) - series)


def cbh_product_map(Y1: VectorField, Y2: VectorField, order: int, x, t: float,
                    tol: float = DEFAULT_TOL, corrections=None) -> np.ndarray:
    """``exp(t(Y1+Y2)) exp(-tY1) exp(-tY2) exp(-t^2 Z_2) ... exp(-t^N Z_N)(x)``.

    Composition of maps: the rightmost factor is applied to ``x`` first.
    """
    if order > MAX_ORDER:
        raise ValueError(f"truncation order {order} exceeds the cap {MAX_ORDER}")
    zs = bch_correction_fields(Y1, Y2, order) if corrections is None else corrections
    y = np.asarray(x, dtype=float)
    for j in range(len(zs) + 1, 1, -1):
        z = zs[j - 2]
        if not z.is_zero():
            y = flow(z, y, -t ** j, tol)
    y = flow(Y2, y, -t, tol)
    y = flow(Y1, y, -t, tol)
    return flow(Y1 + Y2, y, t, tol)


def cbh_product_defect(Y1: VectorField, Y2: VectorField, order: int, x, t: float,
                       tol: float = DEFAULT_TOL, corrections=None) -> float:
    """``|Phi(x, t) - x|`` for the corrected flow product (bounded by ``c t^(N+1)``)."""
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(cbh_product_map(Y1, Y2, order, x, t, tol, corrections) - x))


@dataclass
class OrderFit:
    t: np.ndarray
    defects: np.ndarray
    slope: float
    residual: float
    used: int = 0

    @property
    def exact(self) -> bool:
        """All defects sit below the noise floor, i.e. no measurable remainder."""
        return self.used == 0

    def rows(self):
        return [(float(a), float(b)) for a, b in zip(self.t, self.defects)]


def fit_order(t: Sequence[float], defects: Sequence[float], floor: float = NOISE_FLOOR) -> OrderFit:
    """Least-squares slope of log(defect) against log(t), ignoring defects <= floor."""
    t = np.asarray(t, dtype=float)
    defects = np.asarray(defects, dtype=float)
    keep = defects > floor
    if keep.sum() < 2:
        return OrderFit(t, defects, math.inf, 0.0, int(keep.sum()))
    lt, ld = np.log(t[keep]), np.log(defects[keep])
    coef, res, *_ = np.polyfit(lt, ld, 1, full=True)
    residual = float(np.sqrt(res[0] / keep.sum())) if res.size else 0.0
    return OrderFit(t, defects, float(coef[0]), residual, int(keep.sum()))


def log_times(t_min: float = 1e-3, t_max: float = 1e-1, points: int = 12) -> np.ndarray:
    return np.geomspace(t_min, t_max, points)


def cbh_order_fit(Y1: VectorField, Y2: VectorField, order: int, x, *,
                  t_min: float = 1e-3, t_max: float = 1e-1, points: int = 12,
                  tol: float = DEFAULT_TOL) -> OrderFit:
    zs = bch_correction_fields(Y1, Y2, order)
    ts = log_times(t_min, t_max, points)
    defects = [cbh_product_defect(Y1, Y2, order, x, t, tol, corrections=zs) for t in ts]
    return fit_order(ts, defects)


def taylor_order_fit(X: VectorField, phi: se.Expr, x, n: int, *, t_min: float = 1e-3,
                     t_max: float = 1e-1, points: int = 12, tol: float = 1e-13) -> OrderFit:
    ts = log_times(t_min, t_max, points)
    return fit_order(ts, [taylor_remainder(X, phi, x, n, t, tol) for t in ts])


# ---------------------------------------------------------------------------
# transport of grid functions

def _require_periodic(X: VectorField):
    if not X.is_periodic():
        raise ValueError(f"field {X} is not 2*pi-periodic; torus transport is undefined")


def transported_nodes(X: VectorField, t: float, grid: TorusGrid, tol: float = DEFAULT_TOL) -> np.ndarray:
    """``exp(tX)`` applied to every grid node, shape ``(d, n^d)``."""
    return flow(X, grid.points, t, tol)


def pullback_transport(X: VectorField, phi: np.ndarray, t: float, grid: TorusGrid, *,
                       method: str = "trig", tol: float = DEFAULT_TOL,
                       nodes: np.ndarray | None = None) -> np.ndarray:
    """Semi-Lagrangian ``(e^{tX} phi)(x) = phi(exp(tX)(x))`` at the grid nodes.

    ``phi`` may carry leading batch axes.  ``method`` is ``"trig"`` (spectral
    interpolation) or ``"cubic"`` (periodic cubic splines).
    """
    _require_periodic(X)
    if t == 0:
        return np.array(phi, dtype=float, copy=True)
    pts = transported_nodes(X, t, grid, tol) if nodes is None else nodes
    if method == "trig":
        out = grid.interpolate(phi, pts)
    elif method == "cubic":
        coords = np.mod(pts, 2 * np.pi) / grid.spacing
        flat = phi.reshape((-1,) + grid.shape)
        out = np.stack([
            ndimage.map_coordinates(f, coords, order=3, mode="grid-wrap") for f in flat
        ]).reshape(phi.shape[: phi.ndim - grid.d] + (pts.shape[1],))
    else:
        raise ValueError(f"unknown interpolation method {method!r}")
    return out.reshape(phi.shape)


def transport_growth(X: VectorField, phi: np.ndarray, grid: TorusGrid,
                     t_list: Sequence[float], method: str = "trig") -> float:
    """``max_t ||e^{tX} phi||_2 / ||phi||_2`` over ``t_list`` (all batch members)."""
    base = grid.norm(phi)
    worst = 0.0
    for t in t_list:
        moved = pullback_transport(X, phi, t, grid, method=method)
        worst = max(worst, float(np.max(grid.norm(moved) / base)))
    return worst


def default_t_samples(count: int = 24, t_min: float = 1e-3) -> np.ndarray:
    return np.geomspace(t_min, 1.0, count)


def holder_norm_field(phi: np.ndarray, X: VectorField, gamma: float, grid: TorusGrid,
                      t_samples: Sequence[float] | None = None, *, method: str = "trig",
                      tol: float = DEFAULT_TOL) -> np.ndarray:
    """Sampled ``||phi||_2 + sup_{0<|t|<=1} |t|^-gamma ||e^{tX} phi - phi||_2``.

    The sup runs over ``+-t`` for ``t`` in ``t_samples``; the value is a lower
    bound for the true norm.  Batched over leading axes of ``phi``.
    """
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    ts = default_t_samples() if t_samples is None else np.asarray(t_samples, dtype=float)
    if np.any(ts <= 0) or np.any(ts > 1):
        raise ValueError("t samples must lie in (0, 1]")
    base = grid.norm(phi)
    if X.is_zero():
        return base
    sup = np.zeros_like(base)
    for t in ts:
        for signed in (t, -t):
            moved = pullback_transport(X, phi, signed, grid, method=method, tol=tol)
            sup = np.maximum(sup, grid.norm(moved - phi) / t ** gamma)
    return base + sup


def default_directions(d: int, count: int = 16) -> np.ndarray:
    """Unit vectors, shape ``(m, d)``: evenly spread angles for d=2, axes and diagonals otherwise."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        ang = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    dirs = [s * row for row in np.eye(d) for s in (1.0, -1.0)]
    for signs in np.ndindex(*(2,) * d):
        v = np.where(np.array(signs) == 0, 1.0, -1.0)
        dirs.append(v / np.sqrt(d))
    return np.array(dirs)


def holder_norm_universal(phi: np.ndarray, gamma: float, grid: TorusGrid,
                          radii: Sequence[float] | None = None,
                          directions: np.ndarray | None = None) -> np.ndarray:
    """Sampled ``||phi||_2 + sup_{0<|x|<=1} |x|^-gamma ||phi(. - x) - phi||_2``.

    Translations act exactly as Fourier phases.  Shifts are ``r * u`` for the
    given radii and unit directions.
    """
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    rs = default_t_samples() if radii is None else np.asarray(radii, dtype=float)
    us = default_directions(grid.d) if directions is None else np.asarray(directions, dtype=float)
    power = np.abs(grid.fft(phi)) ** 2 * grid.spacing ** grid.d / grid.size
    base = np.sqrt(np.sum(power, axis=grid.axes))
    k = grid.wavevectors.reshape(grid.d, -1)
    flat = power.reshape(power.shape[: power.ndim - grid.d] + (-1,))
    sup = np.zeros_like(base)
    for u in us:
        phase = u @ k  # (n^d,)
        for r in rs:
            weight = np.abs(np.exp(1j * r * phase) - 1.0) ** 2
            sup = np.maximum(sup, np.sqrt(flat @ weight) / r ** gamma)
    return base + sup


def holder_comparison_ratio(system: FieldSystem, r: int, gamma: float, phi: np.ndarray,
                            grid: TorusGrid, t_samples=None, radii=None, *,
                            method: str = "trig") -> float:
    """``max_phi ||phi||_{2;gamma/r} / (sum_j ||phi||_{2;X_j,gamma} + ||phi||_2)``.

    ``phi`` is a batch of test functions, shape ``(m, n, ..., n)``.
    """
    if r < 1:
        raise ValueError("order r must be >= 1")
    universal = holder_norm_universal(phi, gamma / r, grid, radii)
    denom = grid.norm(phi).copy()
    for X in system.fields:
        denom = denom + holder_norm_field(phi, X, gamma, grid, t_samples, method=method)
    return float(np.max(universal / denom))
