"""Config loading and the batch runs behind the command-line subcommands.

A config is an INI file.  ``[system]`` holds the field system::

    [system]
    name = grushin
    dimension = 2
    domain = torus
    X1 = "1", "0"
    X2 = "0", "sin(x1)"

and each run reads its own section (``[hormander]``, ``[bch]``, ``[flow]``,
``[holder]``, ``[subell]``, plus the self-check sections ``[identities]``,
``[brackets]``, ``[commutators]``, ``[improvement]``).  Every run returns a
``RunResult``: a JSON-ready payload, an exit code and optional CSV rows.
All randomness derives from the single ``seed`` (``[run]`` section or CLI).
"""

from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import bch, flows, hormander, spectral
from . import symexpr as se
from .grid import TorusGrid
from .vecfield import FieldSystem, VectorField, lie_bracket

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_ALARM = 3
EXIT_NUMERICAL = 4

SCHEMA_VERSION = 1
RATIO_TOL = 1.25
ORDER_SLACK = 0.2


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (exit code 2)."""


@dataclass
class RunConfig:
    system: FieldSystem | None
    field_names: list
    sections: dict
    seed: int = 0
    source: str = ""

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    def has(self, name: str) -> bool:
        return name in self.sections

    def require_system(self) -> FieldSystem:
        if self.system is None:
            raise ConfigError("config has no [system] section")
        return self.system

    def field(self, name: str) -> VectorField:
        system = self.require_system()
        if name not in self.field_names:
            raise ConfigError(f"unknown field {name!r}; known: {', '.join(self.field_names)}")
        return system.fields[self.field_names.index(name)]


@dataclass
class RunResult:
    command: str
    payload: dict
    exit_code: int
    header: tuple = ()
    rows: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# config parsing

def _split(value: str) -> list[str]:
    return next(csv.reader([value], skipinitialspace=True))


def _floats(value: str) -> list[float]:
    try:
        return [float(v) for v in _split(value)]
    except ValueError as exc:
        raise ConfigError(f"expected a list of numbers, got {value!r}") from exc


def _ints(value: str) -> list[int]:
    try:
        return [int(v) for v in _split(value)]
    except ValueError as exc:
        raise ConfigError(f"expected a list of integers, got {value!r}") from exc


def _get(sec: dict, key: str, default, kind: Callable = float):
    if key not in sec:
        return default
    try:
        return kind(sec[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {sec[key]!r}") from exc


def _expr(sec: dict, key: str, default: str, d: int) -> se.Expr:
    """Scalar expression, optionally quoted."""
    raw = _split(sec.get(key, default))
    if len(raw) != 1:
        raise ConfigError(f"{key} must be a single expression")
    try:
        return se.parse(raw[0], d)
    except se.ParseError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _grids(values: list[int]) -> list[int]:
    for n in values:
        if n < 4 or n & (n - 1):
            raise ConfigError(f"grid size {n} is not a power of two >= 4")
    if values != sorted(values):
        raise ConfigError("grids must be ascending")
    return values


def _gammas(values: list[float]) -> list[float]:
    for g in values:
        if not 0 < g <= 1:
            raise ConfigError(f"gamma {g} outside (0, 1]")
    return values


def parse_config_text(text: str, seed: int | None = None, source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # field labels are case-sensitive
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    sections = {name: dict(parser[name]) for name in parser.sections()}

    system, names = None, []
    if "system" in sections:
        sec = sections["system"]
        try:
            d = int(sec["dimension"])
        except (KeyError, ValueError) as exc:
            raise ConfigError("[system] needs an integer 'dimension'") from exc
        labels = sorted((k for k in sec if k[:1] == "X" and k[1:].isdigit()), key=lambda k: int(k[1:]))
        if not labels:
            raise ConfigError("[system] defines no fields (X1 = ..., X2 = ...)")
        fields = []
        for label in labels:
            comps = _split(sec[label])
            if len(comps) != d:
                raise ConfigError(f"{label} has {len(comps)} components, dimension is {d}")
            exprs = []
            for j, text_j in enumerate(comps, start=1):
                try:
                    exprs.append(se.parse(text_j, d))
                except se.ParseError as exc:
                    raise ConfigError(f"{label} component {j}: {exc}") from exc
            fields.append(VectorField(tuple(exprs)))
        domain = sec.get("domain", "torus")
        try:
            system = FieldSystem(tuple(fields), domain=domain, box_bound=float(sec.get("box_bound", 1.0)),
                                 name=sec.get("name", Path(source).stem))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        names = labels

    cfg_seed = _get(sections.get("run", {}), "seed", 0, int)
    return RunConfig(system, names, sections, cfg_seed if seed is None else seed, source)


def load_config(path, seed: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, seed, str(path))


def system_descriptor(system: FieldSystem) -> dict:
    return {"name": system.name, "dimension": system.dimension, "domain": system.domain,
            "fields": [X.to_strings() for X in system.fields]}


def _header(command: str, cfg: RunConfig) -> dict:
    out = {"schema": f"hormlab.{command}/{SCHEMA_VERSION}", "seed": cfg.seed}
    if cfg.system is not None:
        out["system"] = system_descriptor(cfg.system)
    return out


# ---------------------------------------------------------------------------
# check-hormander

def run_check_hormander(cfg: RunConfig, jobs: int = 1) -> RunResult:
    system = cfg.require_system()
    sec = cfg.section("hormander")
    r_max = _get(sec, "r_max", 3, int)
    if not 1 <= r_max <= hormander.MAX_RANK:
        raise ConfigError(f"r_max must lie in 1..{hormander.MAX_RANK}")
    sigma_tol = _get(sec, "sigma_tol", hormander.DEFAULT_SIGMA_TOL)
    if sigma_tol <= 0:
        raise ConfigError("sigma_tol must be positive")
    samples = hormander.default_samples(system, n=_get(sec, "grid", 64, int),
                                        count=_get(sec, "samples", 4096, int), seed=cfg.seed)
    rank = hormander.find_hormander_rank(system, r_max, samples, sigma_tol)
    report = hormander.hormander_report(system, rank or r_max, samples, sigma_tol)
    if not report.agree or not report.chain_holds:
        code = EXIT_ALARM
    elif rank is None or not report.passed:
        code = EXIT_FAIL
    else:
        code = EXIT_PASS
    payload = _header("check-hormander", cfg)
    payload.update({"r_max": r_max, "rank": rank, "report": report.to_dict()})
    rows = [(name, res["value"], res["pass"]) for name, res in payload["report"]["criteria"].items()]
    return RunResult("check-hormander", payload, code, ("criterion", "value", "pass"), rows)


# ---------------------------------------------------------------------------
# bch

def _combination_strings(combo: dict) -> dict:
    return {",".join(map(str, w)): str(c) for w, c in combo.items()}


def run_bch(cfg: RunConfig, jobs: int = 1) -> RunResult:
    sec = cfg.section("bch")
    order = _get(sec, "order", 2, int)
    if not 2 <= order <= bch.MAX_ORDER:
        raise ConfigError(f"truncation order {order} outside 2..{bch.MAX_ORDER}")
    names = _split(sec.get("fields", "X1, X2"))
    if len(names) != 2:
        raise ConfigError("[bch] fields must name exactly two fields")
    Y1, Y2 = (cfg.field(n) for n in names)
    x = _floats(sec.get("point", "0.7, 0.3"))
    if len(x) != Y1.dimension:
        raise ConfigError("[bch] point has the wrong dimension")
    fit = flows.cbh_order_fit(Y1, Y2, order, x, t_min=_get(sec, "t_min", 1e-3), t_max=_get(sec, "t_max", 1e-1),
                              points=_get(sec, "points", 12, int), tol=_get(sec, "tol", flows.DEFAULT_TOL))
    residual = bch.residual_log(order)
    target = order + 1 - ORDER_SLACK
    passed = fit.exact or fit.slope >= target
    payload = _header("bch", cfg)
    payload.update({
        "fields": names, "order": order, "point": x,
        "corrections": [_combination_strings(c) for c in bch.bch_correction_lie(order)],
        "free_residual_vanishes": not residual,
        "defects": [{"t": t, "defect": dd} for t, dd in fit.rows()],
        "slope": None if fit.exact else fit.slope,
        "exact": fit.exact, "target_slope": target, "pass": bool(passed),
    })
    code = EXIT_ALARM if residual else (EXIT_PASS if passed else EXIT_FAIL)
    return RunResult("bch", payload, code, ("t", "defect"), fit.rows())


# ---------------------------------------------------------------------------
# flow

def run_flow(cfg: RunConfig, jobs: int = 1) -> RunResult:
    sec = cfg.section("flow")
    name = sec.get("field", cfg.field_names[0] if cfg.field_names else "X1")
    X = cfg.field(name)
    x = _floats(sec.get("point", ", ".join(["0.7"] * X.dimension)))
    tol = _get(sec, "tol", flows.DEFAULT_TOL)
    s, t = _get(sec, "s", 0.3), _get(sec, "t", 0.4)
    n = _get(sec, "taylor_n", 2, int)
    if not 0 <= n <= 8:
        raise ConfigError("taylor_n must lie in 0..8")
    phi = _expr(sec, "phi", "cos(x2)" if X.dimension > 1 else "cos(x1)", X.dimension)
    group = flows.check_group_law(X, x, s, t, tol)
    forward = flows.flow(X, x, t, tol)
    inverse = float(np.linalg.norm(flows.flow(X, forward, -t, tol) - np.asarray(x)))
    fit = flows.taylor_order_fit(X, phi, x, n)
    ok_group = group <= 100 * tol and inverse <= 100 * tol
    ok_taylor = fit.exact or fit.slope >= n + 1 - ORDER_SLACK
    payload = _header("flow", cfg)
    payload.update({
        "field": name, "point": x, "tol": tol, "s": s, "t": t,
        "group_law_defect": group, "inverse_defect": inverse, "endpoint": forward.tolist(),
        "taylor": {"n": n, "phi": se.to_string(phi), "slope": None if fit.exact else fit.slope,
                   "remainders": [{"t": a, "remainder": b} for a, b in fit.rows()]},
        "pass": bool(ok_group and ok_taylor),
    })
    return RunResult("flow", payload, EXIT_PASS if ok_group and ok_taylor else EXIT_FAIL,
                     ("t", "remainder"), fit.rows())


# ---------------------------------------------------------------------------
# holder

def random_test_functions(grid: TorusGrid, count: int, max_freq: int, seed: int) -> np.ndarray:
    """Band-limited real test functions; the same ``seed`` gives the same functions on every grid."""
    rng = np.random.default_rng(seed)
    size = (count,) + (2 * max_freq + 1,) * grid.d
    coef = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    return grid.band_limited(coef, max_freq)


def holder_measurements(system: FieldSystem, r: int, gamma: float, grids: list[int], count: int,
                        max_freq: int, psi: se.Expr, seed: int) -> list[dict]:
    """Per grid: comparison ratio c_emp, the psi-scaling ratio and the field/universal ratio."""
    out = []
    for n in grids:
        grid = TorusGrid(system.dimension, n)
        phi = random_test_functions(grid, count, max_freq, seed)
        universal = flows.holder_norm_universal(phi, gamma, grid)
        scale_ratio, field_ratio = 0.0, 0.0
        for X in system.fields:
            plain = flows.holder_norm_field(phi, X, gamma, grid)
            scaled = flows.holder_norm_field(phi, VectorField(tuple(se.simplify(psi * c) for c in X.coeffs)),
                                             gamma, grid)
            scale_ratio = max(scale_ratio, float(np.max(scaled / plain)))
            field_ratio = max(field_ratio, float(np.max(plain / universal)))
        c_emp = flows.holder_comparison_ratio(system, r, gamma, phi, grid)
        out.append({"n": n, "c_emp": c_emp, "scaled_field_ratio": scale_ratio,
                    "field_universal_ratio": field_ratio})
    return out


def run_holder(cfg: RunConfig, jobs: int = 1) -> RunResult:
    system = cfg.require_system()
    sec = cfg.section("holder")
    gamma = _get(sec, "gamma", 1.0)
    _gammas([gamma])
    r = _get(sec, "r", 2, int)
    grids = _grids(_ints(sec.get("grids", "32, 64")))
    psi = _expr(sec, "psi", "2 + cos(x2)" if system.dimension > 1 else "2 + cos(x1)", system.dimension)
    rows = holder_measurements(system, r, gamma, grids, _get(sec, "test_functions", 20, int),
                               _get(sec, "max_freq", 4, int), psi, cfg.seed)
    growth = {key: spectral.successive_ratios([row[key] for row in rows])
              for key in ("c_emp", "scaled_field_ratio", "field_universal_ratio")}
    passed = all(np.isfinite(row["c_emp"]) for row in rows) and all(
        g <= RATIO_TOL for values in growth.values() for g in values)
    payload = _header("holder", cfg)
    payload.update({"gamma": gamma, "r": r, "psi": se.to_string(psi), "grids": rows,
                    "growth": growth, "pass": bool(passed)})
    return RunResult("holder", payload, EXIT_PASS if passed else EXIT_FAIL,
                     ("n", "c_emp"), [(row["n"], row["c_emp"]) for row in rows])


# ---------------------------------------------------------------------------
# subell

def run_subell(cfg: RunConfig, jobs: int = 1) -> RunResult:
    system = cfg.require_system()
    if system.domain != "torus":
        raise ConfigError("subellipticity sweeps need a torus system")
    sec = cfg.section("subell")
    gammas = _gammas(_floats(sec.get("gammas", ", ".join(map(str, spectral.default_gamma_grid())))))
    alphas = _floats(sec.get("alphas", "1"))
    if any(a < 0 for a in alphas):
        raise ConfigError("alphas must be >= 0")
    grids = _grids(_ints(sec.get("grids", "8, 16, 32")))
    if system.dimension * np.log2(grids[-1]) > np.log2(spectral.DENSE_CAP):
        raise ConfigError(f"grid {grids[-1]} exceeds the eigendecomposition cap {spectral.DENSE_CAP}")
    bounded = _get(sec, "bounded_ratio", spectral.BOUNDED_RATIO)
    growing = _get(sec, "growing_ratio", spectral.GROWING_RATIO)
    if bounded > growing:
        raise ConfigError(f"bounded_ratio {bounded} exceeds growing_ratio {growing}")
    tolerance = _get(sec, "order_tolerance", 0.1)
    scan_alpha = _get(sec, "scan_alpha", 1.0 if 1.0 in alphas else alphas[0])

    hsec = cfg.section("hormander")
    samples = hormander.default_samples(system, n=_get(hsec, "grid", 64, int),
                                        count=_get(hsec, "samples", 4096, int), seed=cfg.seed)
    rank = hormander.find_hormander_rank(system, _get(hsec, "r_max", 3, int), samples,
                                         _get(hsec, "sigma_tol", hormander.DEFAULT_SIGMA_TOL))
    scans = {a: spectral.order_scan(system, grids, gammas, a, bounded, growing, jobs) for a in alphas}
    if scan_alpha not in scans:
        scans[scan_alpha] = spectral.order_scan(system, grids, gammas, scan_alpha, bounded, growing, jobs)
    gamma_star = scans[scan_alpha].gamma_star
    if rank is None or gamma_star is None:
        consistent = rank is None and gamma_star is None
        code = EXIT_FAIL
    else:
        consistent = abs(gamma_star - 1.0 / rank) <= tolerance + 1e-12
        code = EXIT_PASS if consistent else EXIT_ALARM
    payload = _header("subell", cfg)
    payload.update({
        "grids": grids, "thresholds": {"bounded": bounded, "growing": growing},
        "rank": rank, "gamma_star": gamma_star, "scan_alpha": scan_alpha,
        "expected_gamma": None if rank is None else 1.0 / rank,
        "consistent": bool(consistent),
        "sweeps": [rep.to_dict() for a in sorted(scans) for rep in scans[a].reports],
    })
    rows = [(rep.gamma, rep.alpha, n, c) for a in sorted(scans) for rep in scans[a].reports
            for n, c in zip(rep.grids, rep.constants)]
    return RunResult("subell", payload, code, ("gamma", "alpha", "n", "constant"), rows)


# ---------------------------------------------------------------------------
# self-check sections

def identity_check(count: int = 100, n: int = 64, seed: int = 0) -> dict:
    """Worst relative errors of the two double-commutator form identities on random Hermitian matrices."""
    rng = np.random.default_rng(seed)
    e1 = e2 = e3 = 0.0
    for _ in range(count):
        A, B1, B2 = (spectral.random_hermitian(n, rng) for _ in range(3))
        phi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        psi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        a, b = spectral.identity_errors(A, B1, B2, phi)
        C = B1 @ (B2 @ A - A @ B2) - (B2 @ A - A @ B2) @ B1
        direct = np.vdot(psi, C @ phi)
        form = spectral.double_commutator_form(A, B1, B2, psi, phi)
        scale = np.linalg.norm(A, 2) * np.linalg.norm(B1, 2) * np.linalg.norm(B2, 2) \
            * np.linalg.norm(psi) * np.linalg.norm(phi)
        e1, e2, e3 = max(e1, a), max(e2, b), max(e3, abs(form - direct) / scale)
    return {"identity_first": e1, "identity_second": e2, "form_vs_direct": e3}


def random_trig_field(rng: np.random.Generator, d: int = 2, terms: int = 2) -> VectorField:
    """Field whose coefficients are sums of ``c sin(k.x)`` / ``c cos(k.x)`` with small integers."""
    coeffs = []
    for _ in range(d):
        total = se.ZERO
        for _ in range(terms):
            c = int(rng.choice([-3, -2, -1, 1, 2, 3]))
            ks = rng.integers(-2, 3, d)
            arg = se.ZERO
            for j, kj in enumerate(ks, start=1):
                arg = arg + se.Const(Fraction(int(kj))) * se.Coord(j)
            arg = se.simplify(arg)
            wave = se.Sin(arg) if rng.random() < 0.5 else se.Cos(arg)
            total = total + se.Const(Fraction(c)) * wave
        coeffs.append(se.simplify(total))
    return VectorField(tuple(coeffs))


def bracket_check(count: int = 50, points: int = 100, seed: int = 0, d: int = 2) -> dict:
    """Pointwise Jacobi and antisymmetry residuals over cyclic triples of random trig fields."""
    rng = np.random.default_rng(seed)
    fields = [random_trig_field(rng, d) for _ in range(count)]
    pts = rng.uniform(0, 2 * np.pi, (d, points))
    jac = anti = 0.0
    for i in range(count):
        X, Y, Z = fields[i], fields[(i + 1) % count], fields[(i + 2) % count]
        xy, yz, zx = lie_bracket(X, Y), lie_bracket(Y, Z), lie_bracket(Z, X)
        total = lie_bracket(X, yz)(pts) + lie_bracket(Y, zx)(pts) + lie_bracket(Z, xy)(pts)
        jac = max(jac, float(np.max(np.abs(total))))
        anti = max(anti, float(np.max(np.abs(xy(pts) + lie_bracket(Y, X)(pts)))))
    return {"jacobi": jac, "antisymmetry": anti}


def commutator_trends(system: FieldSystem, grids: list[int], m: int, t_list: list[float],
                      rho: float, delta: float, seed: int) -> dict:
    derivative = spectral.commutator_bound_estimate(system, grids, m, seed=seed)
    fractional = spectral.fractional_commutator_estimate(system, grids, rho, delta, seed=seed)
    semi = spectral.semigroup_commutator_bound(system, t_list, grids, seed=seed)
    values = {"derivative": derivative, "fractional": fractional,
              "semigroup": semi.plain, "semigroup_refined": semi.refined}
    return {key: {"values": v, "ratios": spectral.successive_ratios(v)} for key, v in values.items()}


def improvement_instances(system: FieldSystem, n: int, t: float, r: int, probes: int, seed: int) -> list[dict]:
    """Three (A, B, eps, c) instances: commuting equality, PSD perturbation, and the pencil instance."""
    rng = np.random.default_rng(seed)
    m = 24
    B = spectral.random_hermitian(m, rng)
    cases = [("commuting", B @ B, B, 0.0, 0.0)]
    Z = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    A = B @ B + 0.1 * (Z @ Z.conj().T)
    cases.append(("psd_perturbation", A, B, 0.5, spectral.minimal_commutator_constant(A, B, 0.5)))
    A, Bp, eps, c = spectral.pencil_instance(system, n, t, r)
    cases.append(("pencil", A, Bp, eps, c))
    out = []
    for name, A, B, eps, c in cases:
        res = spectral.improvement_lemma_check(A, B, eps, c, probes=probes, seed=seed)
        out.append({"instance": name, "eps": eps, "c": c, "hypotheses_hold": res.hypotheses_hold,
                    "worst_margin": res.worst_margin, "conclusion_holds": res.conclusion_holds})
    return out


def run_identities(cfg: RunConfig, jobs: int = 1) -> RunResult:
    sec = cfg.section("identities")
    res = identity_check(_get(sec, "count", 100, int), _get(sec, "n", 64, int), cfg.seed)
    tol = _get(sec, "tol", 1e-10)
    ok = all(v <= tol for v in res.values())
    payload = _header("identities", cfg)
    payload.update({"errors": res, "tol": tol, "pass": ok})
    return RunResult("identities", payload, EXIT_PASS if ok else EXIT_ALARM)


def run_brackets(cfg: RunConfig, jobs: int = 1) -> RunResult:
    sec = cfg.section("brackets")
    res = bracket_check(_get(sec, "count", 50, int), _get(sec, "points", 100, int), cfg.seed)
    tol = _get(sec, "tol", 1e-10)
    ok = all(v <= tol for v in res.values())
    payload = _header("brackets", cfg)
    payload.update({"residuals": res, "tol": tol, "pass": ok})
    return RunResult("brackets", payload, EXIT_PASS if ok else EXIT_ALARM)


def run_commutators(cfg: RunConfig, jobs: int = 1) -> RunResult:
    system = cfg.require_system()
    sec = cfg.section("commutators")
    grids = _grids(_ints(sec.get("grids", "8, 16, 32")))
    lo, hi = _ints(sec.get("log2_t_range", "-10, 0"))
    res = commutator_trends(system, grids, _get(sec, "m", 1, int), [2.0 ** k for k in range(lo, hi + 1)],
                            _get(sec, "rho", 1.0), _get(sec, "delta", 0.6), cfg.seed)
    ok = all(r <= RATIO_TOL for v in res.values() for r in v["ratios"])
    payload = _header("commutators", cfg)
    payload.update({"grids": grids, "estimates": res, "ratio_tol": RATIO_TOL, "pass": ok})
    return RunResult("commutators", payload, EXIT_PASS if ok else EXIT_FAIL)


def run_improvement(cfg: RunConfig, jobs: int = 1) -> RunResult:
    system = cfg.require_system()
    sec = cfg.section("improvement")
    res = improvement_instances(system, _get(sec, "n", 8, int), _get(sec, "t", 0.1), _get(sec, "r", 2, int),
                                _get(sec, "probes", 50, int), cfg.seed)
    ok = all(row["worst_margin"] >= -1e-9 for row in res)
    payload = _header("improvement", cfg)
    payload.update({"instances": res, "pass": ok})
    return RunResult("improvement", payload, EXIT_PASS if ok else EXIT_ALARM)


RUNNERS = {
    "check-hormander": (run_check_hormander, "hormander"),
    "bch": (run_bch, "bch"),
    "flow": (run_flow, "flow"),
    "holder": (run_holder, "holder"),
    "subell": (run_subell, "subell"),
    "identities": (run_identities, "identities"),
    "brackets": (run_brackets, "brackets"),
    "commutators": (run_commutators, "commutators"),
    "improvement": (run_improvement, "improvement"),
}


def run_report(cfg: RunConfig, jobs: int = 1) -> RunResult:
    """Every run whose section is present in the config; exit code is the worst one."""
    parts, code = {}, EXIT_PASS
    for name, (runner, section) in RUNNERS.items():
        if cfg.has(section):
            res = runner(cfg, jobs)
            body = {k: v for k, v in res.payload.items() if k not in ("schema", "seed", "system")}
            parts[name] = {"exit_code": res.exit_code, **body}
            code = max(code, res.exit_code)
    if not parts:
        raise ConfigError("config has no run sections")
    payload = _header("report", cfg)
    payload["runs"] = parts
    return RunResult("report", payload, code, ("run", "exit_code"),
                     [(name, part["exit_code"]) for name, part in parts.items()])
