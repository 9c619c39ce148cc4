"""Sampled decision of the uniform Hoermander condition of order r.

Four quantitative forms are evaluated on a finite sample set:

* ``sigma_eig``  -- min over samples of lambda_min(C^(r)(x)), C^(r) = sum a_alpha a_alpha^T
* ``M_comb``     -- max over samples and axes of min ||lambda||_inf with sum lambda_alpha a_alpha = e_i
* ``vol_min``    -- min zonotope volume of {sum lambda_alpha a_alpha : |lambda_alpha| <= 1}
* ``sigma_det``  -- min over samples of max |det(a_alpha1, ..., a_alphad)|

together with the three per-sample inequalities linking them.  On the torus a
uniform grid over one period stands in for "all x"; box domains use
scrambled Sobol points and the report carries that caveat.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import combinations
from math import comb
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.stats import qmc

from . import symexpr as se
from .grid import TorusGrid
from .vecfield import FieldSystem, MultiIndex, enumerate_multiindices, multi_commutator

DEFAULT_SIGMA_TOL = 1e-6
SUBSET_CAP = 10 ** 6
CHAIN_TOL = 1e-9
MAX_RANK = 6


class CapExceeded(ValueError):
    pass


class LPFailure(RuntimeError):
    pass


@dataclass
class Samples:
    points: np.ndarray  # (d, S)
    descriptor: dict

    @property
    def count(self) -> int:
        return self.points.shape[1]


def torus_samples(d: int, n: int) -> Samples:
    grid = TorusGrid(d, n)
    return Samples(grid.points, {"kind": "torus-grid", "n": n, "count": grid.size})


def box_samples(d: int, bound: float, count: int, seed: int = 0) -> Samples:
    sobol = qmc.Sobol(d, scramble=True, seed=seed)
    pts = qmc.scale(sobol.random(count), -bound, bound).T
    return Samples(pts, {
        "kind": "box-sobol", "bound": bound, "count": count, "seed": seed,
        "caveat": "quasi-random samples of an unbounded domain; uniformity is not certified",
    })


def default_samples(system: FieldSystem, n: int = 64, count: int = 4096, seed: int = 0) -> Samples:
    if system.domain == "torus":
        return torus_samples(system.dimension, n)
    return box_samples(system.dimension, system.box_bound, count, seed)


def _points(samples) -> np.ndarray:
    pts = samples.points if isinstance(samples, Samples) else np.asarray(samples, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[1] == 0:
        raise ValueError("sample set is empty")
    return pts


def generator_values(system: FieldSystem, r: int, points: np.ndarray) -> tuple[list, np.ndarray]:
    """Multi-indices of J_r^+(N) and their coefficient vectors, shape ``(S, L, d)``."""
    if r < 1:
        raise ValueError("order r must be >= 1")
    alphas = enumerate_multiindices(system.count, r)
    exprs = [c for a in alphas for c in multi_commutator(system, a).coeffs]
    vals = se.compile_exprs(exprs)(points)  # (L*d, S)
    d = system.dimension
    return alphas, vals.reshape(len(alphas), d, -1).transpose(2, 0, 1)


@dataclass
class CrMatrix:
    point: np.ndarray
    order: int
    matrix: np.ndarray


def cr_matrices(values: np.ndarray) -> np.ndarray:
    return np.einsum("sli,slj->sij", values, values)


def assemble_cr_matrix(system: FieldSystem, r: int, x) -> CrMatrix:
    x = np.asarray(x, dtype=float)
    _, vals = generator_values(system, r, x[:, None])
    return CrMatrix(x, r, cr_matrices(vals)[0])


# ---------------------------------------------------------------------------
# criteria

@dataclass
class CriterionResult:
    value: float
    witness_point: list
    passed: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"value": _json_float(self.value), "witness_point": self.witness_point, "pass": self.passed}
        out.update(self.extra)
        return out


def _json_float(v: float):
    if np.isinf(v):
        return "inf"
    return float(v)


def _sigma_eig(values: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(cr_matrices(values))[:, 0]


def check_sigma_condition(system: FieldSystem, r: int, samples, sigma_tol: float = DEFAULT_SIGMA_TOL) -> CriterionResult:
    pts = _points(samples)
    _, vals = generator_values(system, r, pts)
    lam = _sigma_eig(vals)
    i = int(np.argmin(lam))
    return CriterionResult(float(lam[i]), pts[:, i].tolist(), bool(lam[i] >= sigma_tol))


def min_inf_norm_combination(gens: np.ndarray, target: np.ndarray) -> float:
    """``min ||lam||_inf`` s.t. ``gens.T @ lam = target``; ``inf`` if infeasible.

    ``gens`` has shape ``(L, d)``.  Solved as the LP: min s, -s <= lam <= s.
    """
    L, d = gens.shape
    c = np.zeros(L + 1)
    c[-1] = 1.0
    a_eq = np.hstack([gens.T, np.zeros((d, 1))])
    eye = np.eye(L)
    a_ub = np.vstack([np.hstack([eye, -np.ones((L, 1))]), np.hstack([-eye, -np.ones((L, 1))])])
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(2 * L), A_eq=a_eq, b_eq=target,
                  bounds=[(None, None)] * L + [(0, None)], method="highs")
    if res.status == 0:
        return float(res.x[-1])
    if res.status == 2:
        return np.inf
    raise LPFailure(f"LP solver failed: {res.message}")


def _unique_samples(values: np.ndarray):
    flat = np.ascontiguousarray(values.reshape(values.shape[0], -1))
    _, first, inverse = np.unique(flat, axis=0, return_index=True, return_inverse=True)
    return first, inverse.reshape(-1)


def _combination_bounds(values: np.ndarray) -> np.ndarray:
    """Per-sample ``max_i`` LP optimum, shape ``(S,)``; identical samples solved once."""
    first, inverse = _unique_samples(values)
    d = values.shape[2]
    eye = np.eye(d)
    per_unique = np.array([
        max(min_inf_norm_combination(values[s], eye[i]) for i in range(d)) for s in first
    ])
    return per_unique[inverse]


def check_bounded_combination(system: FieldSystem, r: int, samples,
                              sigma_tol: float = DEFAULT_SIGMA_TOL) -> CriterionResult:
    pts = _points(samples)
    _, vals = generator_values(system, r, pts)
    return _comb_result(pts, vals, _combination_bounds(vals), sigma_tol)


def _comb_result(pts, vals, bounds, sigma_tol) -> CriterionResult:
    i = int(np.argmax(bounds))
    feasible = bool(np.all(np.isfinite(bounds)))
    worst = float(bounds[i])
    # the worst axis at the witness point
    d = vals.shape[2]
    axes = [min_inf_norm_combination(vals[i], np.eye(d)[k]) for k in range(d)]
    return CriterionResult(worst, pts[:, i].tolist(), feasible and worst <= 1.0 / sigma_tol,
                           {"feasible": feasible, "witness_axis": int(np.argmax(axes)) + 1})


def _minor_stats(values: np.ndarray, chunk: int = 20000):
    """Sum and max of |det| over all d-subsets of generators, per sample."""
    S, L, d = values.shape
    n_sub = comb(L, d)
    if n_sub > SUBSET_CAP:
        raise CapExceeded(f"{n_sub} generator subsets exceed the cap {SUBSET_CAP}")
    subsets = np.array(list(combinations(range(L), d)), dtype=int).reshape(-1, d)
    if len(subsets) == 0:
        # fewer generators than dimensions: every minor vanishes
        return np.zeros(S), np.zeros(S), np.tile(np.arange(L), (S, 1))
    total = np.zeros(S)
    best = np.full(S, -1.0)
    best_idx = np.zeros(S, dtype=int)
    for start in range(0, len(subsets), chunk):
        sub = subsets[start:start + chunk]
        mats = values[:, sub, :]  # (S, C, d, d), rows are generators
        dets = np.abs(np.linalg.det(mats))
        total += dets.sum(axis=1)
        j = np.argmax(dets, axis=1)
        cand = dets[np.arange(S), j]
        better = cand > best
        best = np.where(better, cand, best)
        best_idx = np.where(better, j + start, best_idx)
    return total, best, subsets[best_idx]


def check_volume_condition(system: FieldSystem, r: int, samples,
                           sigma_tol: float = DEFAULT_SIGMA_TOL) -> CriterionResult:
    pts = _points(samples)
    _, vals = generator_values(system, r, pts)
    total, _, _ = _minor_stats(vals)
    vol = 2.0 ** vals.shape[2] * total
    i = int(np.argmin(vol))
    return CriterionResult(float(vol[i]), pts[:, i].tolist(), bool(vol[i] >= sigma_tol))


def zonotope_volume(gens: np.ndarray) -> float:
    """Volume of {sum lam_j g_j : |lam_j| <= 1} for generators ``gens`` of shape ``(L, d)``."""
    total, _, _ = _minor_stats(np.asarray(gens, dtype=float)[None])
    return float(2.0 ** gens.shape[1] * total[0])


def check_determinant_condition(system: FieldSystem, r: int, samples,
                                sigma_tol: float = DEFAULT_SIGMA_TOL) -> CriterionResult:
    pts = _points(samples)
    alphas, vals = generator_values(system, r, pts)
    _, best, tuples = _minor_stats(vals)
    i = int(np.argmin(best))
    witness = [list(alphas[j]) for j in tuples[i]]
    return CriterionResult(float(best[i]), pts[:, i].tolist(), bool(best[i] >= sigma_tol),
                           {"witness_tuple": witness})


# ---------------------------------------------------------------------------
# full report

@dataclass
class HormanderReport:
    order: int
    samples: dict
    sigma_eig: CriterionResult
    bounded_combination: CriterionResult
    volume: CriterionResult
    determinant: CriterionResult
    chain: dict
    sigma_tol: float

    @property
    def verdicts(self) -> list[bool]:
        return [self.sigma_eig.passed, self.bounded_combination.passed,
                self.volume.passed, self.determinant.passed]

    @property
    def agree(self) -> bool:
        return len(set(self.verdicts)) == 1

    @property
    def passed(self) -> bool:
        return all(self.verdicts)

    @property
    def chain_holds(self) -> bool:
        return all(c["holds"] for c in self.chain.values())

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "samples": self.samples,
            "sigma_tol": self.sigma_tol,
            "criteria": {
                "sigma_eig": self.sigma_eig.to_dict(),
                "bounded_combination": self.bounded_combination.to_dict(),
                "volume": self.volume.to_dict(),
                "determinant": self.determinant.to_dict(),
            },
            "proof_chain": self.chain,
            "agree": self.agree,
            "verdict": "pass" if self.passed else "fail",
        }


def proof_chain_margins(values: np.ndarray, comb_bounds: np.ndarray) -> dict:
    """Per-sample slack of the three inequalities linking the criteria (>= -CHAIN_TOL holds)."""
    S, L, d = values.shape
    lam = _sigma_eig(values)
    total, best, tuples = _minor_stats(values)
    vol = 2.0 ** d * total

    # determinant => eigenvalue: lambda_min(C) >= ||D||^-(d-1) det(a_1..a_d)^2
    chosen = values[np.arange(S)[:, None], tuples]  # (S, <=d, d)
    gram = np.einsum("ski,skj->sij", chosen, chosen)
    gnorm = np.linalg.norm(gram, ord=2, axis=(1, 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        bound_eig = np.where(gnorm > 0, gnorm ** (-(d - 1.0)) * best ** 2, 0.0)
    m_eig = lam - bound_eig

    # combination => volume: Vol >= (d M)^-d where the LP is feasible
    feasible = np.isfinite(comb_bounds) & (comb_bounds > 0)
    with np.errstate(divide="ignore", over="ignore"):
        bound_vol = np.where(feasible, (d * np.where(feasible, comb_bounds, 1.0)) ** (-float(d)), 0.0)
    m_vol = np.where(feasible, vol - bound_vol, np.inf)

    # volume => determinant: max |det| >= 2^-L L^-1 Vol
    m_det = best - vol / (2.0 ** L * L)

    def summary(m):
        j = int(np.argmin(m))
        return {"worst_margin": _json_float(float(m[j])), "holds": bool(m[j] >= -CHAIN_TOL)}

    return {"det_implies_eig": summary(m_eig), "comb_implies_vol": summary(m_vol),
            "vol_implies_det": summary(m_det)}


def hormander_report(system: FieldSystem, r: int, samples, sigma_tol: float = DEFAULT_SIGMA_TOL) -> HormanderReport:
    pts = _points(samples)
    descriptor = samples.descriptor if isinstance(samples, Samples) else {"kind": "explicit", "count": pts.shape[1]}
    alphas, vals = generator_values(system, r, pts)

    lam = _sigma_eig(vals)
    i = int(np.argmin(lam))
    sig = CriterionResult(float(lam[i]), pts[:, i].tolist(), bool(lam[i] >= sigma_tol))

    bounds = _combination_bounds(vals)
    comb_res = _comb_result(pts, vals, bounds, sigma_tol)

    total, best, tuples = _minor_stats(vals)
    vol = 2.0 ** system.dimension * total
    j = int(np.argmin(vol))
    vol_res = CriterionResult(float(vol[j]), pts[:, j].tolist(), bool(vol[j] >= sigma_tol))
    k = int(np.argmin(best))
    det_res = CriterionResult(float(best[k]), pts[:, k].tolist(), bool(best[k] >= sigma_tol),
                              {"witness_tuple": [list(alphas[a]) for a in tuples[k]]})

    chain = proof_chain_margins(vals, bounds)
    return HormanderReport(r, descriptor, sig, comb_res, vol_res, det_res, chain, sigma_tol)


def find_hormander_rank(system: FieldSystem, r_max: int, samples,
                        sigma_tol: float = DEFAULT_SIGMA_TOL) -> int | None:
    """Smallest r <= r_max with sigma_eig >= sigma_tol, else None."""
    if r_max > MAX_RANK:
        raise CapExceeded(f"r_max {r_max} exceeds the cap {MAX_RANK}")
    if sigma_tol <= 0:
        raise ValueError("sigma_tol must be positive")
    pts = _points(samples)
    for r in range(1, r_max + 1):
        if check_sigma_condition(system, r, pts, sigma_tol).passed:
            return r
    return None
