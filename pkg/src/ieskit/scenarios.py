"""Scenario configs and action runners behind the command line.

Config files are flat sections of ``key = value`` pairs, parsed strictly:
unknown sections or keys are errors, and every diagnostic carries the line it
refers to.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numpy as np

from ieskit import __version__
from ieskit.dynsys import (
    IntegratorConfig,
    Interconnection,
    TimeVaryingField,
    assemble,
    integrate,
    linear_field,
)
from ieskit.estimator import (
    EnvelopeConfig,
    ensemble_ies,
    sample_pairs_box,
    write_distance_csv,
    write_summary_csv,
)
from ieskit.fhn import (
    FhnParams,
    assumption2_bounds,
    build_fc,
    fc_candidate,
    fhn_field,
    figure_params,
    write_fc_csv,
)
from ieskit.invariance import (
    OuterLyapunov,
    fhn_outer_lyapunov,
    find_invariant_level,
    write_invariant_report,
)
from ieskit.io_utils import atomic_write_text, fnum
from ieskit.polynomials import parse_polynomial_component, polynomial_coupling, polynomial_field
from ieskit.smallgain import certify

Array = np.ndarray

SYSTEMS = ("fhn", "builtin_linear", "user_polynomial")
ACTIONS = ("simulate", "certify", "estimate", "invariant_set", "fc_table", "figures")


class ConfigError(ValueError):
    """Configuration rejected; the message is line-anchored when possible."""


class BlowUpError(RuntimeError):
    """Integration hit non-finite values."""


_SCENARIO_KEYS = {
    "name", "system", "action", "horizon", "step", "seed", "tolerance",
    "initial", "out",
}
_FHN_KEYS = {"b", "epsilon", "rho1", "rho2", "c", "r", "alpha"}
_LINEAR_KEYS = {"matrix", "dim"}
_POLY_FIXED_KEYS = {"n", "m", "rho1", "rho2"}
_POLY_BLOCK_RE = re.compile(r"^(f1|f2|g1|g2)_(\d+)$")
_ESTIMATE_KEYS = {"pairs", "box", "transient_skip"}
_CERTIFY_KEYS = {"radius", "alpha", "alpha1", "alpha2", "rho1", "rho2"}
_INVARIANT_KEYS = {"level_min", "level_max", "levels", "box_halfwidth", "density",
                   "shell_width"}
_SECTIONS = {"scenario", "params", "estimate", "certify", "invariant"}


@dataclass
class Scenario:
    """A validated run request: which system, which action, and how."""

    system: str
    action: str
    name: str = "scenario"
    params: dict = dc_field(default_factory=dict)
    horizon: float = 100.0
    step: float = 0.01
    seed: int = 0
    tolerance: float = 1e-9
    initial_conditions: list = dc_field(default_factory=list)
    output_path: Path = Path("out")
    options: dict = dc_field(default_factory=dict)

    def echo(self) -> str:
        parts = [f"name={self.name}", f"system={self.system}",
                 f"action={self.action}", f"horizon={self.horizon:g}",
                 f"step={self.step:g}", f"seed={self.seed}",
                 f"tolerance={self.tolerance:g}"]
        for k in sorted(self.params):
            parts.append(f"{k}={self.params[k]}")
        return " ".join(parts)


def _parse_sections(path: Path) -> dict[str, dict[str, tuple[str, int]]]:
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current: Optional[str] = None
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in _SECTIONS:
                raise ConfigError(f"{path}:{lineno}: unknown section [{current}]")
            if current in sections:
                raise ConfigError(f"{path}:{lineno}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if current is None:
            raise ConfigError(f"{path}:{lineno}: key outside any [section]")
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        if key in sections[current]:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        sections[current][key] = (value.strip(), lineno)
    return sections


def _want_float(entries, key: str, path, default=None) -> Optional[float]:
    if key not in entries:
        if default is None:
            return None
        return default
    value, lineno = entries[key]
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{path}:{lineno}: {key} must be a number, got {value!r}")


def _want_int(entries, key: str, path, default=None) -> Optional[int]:
    if key not in entries:
        return default
    value, lineno = entries[key]
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{path}:{lineno}: {key} must be an integer, got {value!r}")


def _parse_vectors(text: str) -> list[Array]:
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if chunk:
            out.append(np.array([float(v) for v in chunk.split()]))
    return out


def parse_config(path) -> Scenario:
    """Parse and validate a scenario config; unknown keys are errors."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    sections = _parse_sections(path)
    if "scenario" not in sections:
        raise ConfigError(f"{path}: missing mandatory section [scenario]")
    sc = sections["scenario"]

    for key, (_, lineno) in sc.items():
        if key not in _SCENARIO_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r} in [scenario]")
    for mandatory in ("system", "action"):
        if mandatory not in sc:
            raise ConfigError(f"{path}: missing mandatory key {mandatory!r} in [scenario]")

    system, line_sys = sc["system"]
    if system not in SYSTEMS:
        raise ConfigError(
            f"{path}:{line_sys}: unknown system {system!r}; expected one of {SYSTEMS}"
        )
    action, line_act = sc["action"]
    if action not in ACTIONS:
        raise ConfigError(
            f"{path}:{line_act}: unknown action {action!r}; expected one of {ACTIONS}"
        )

    scenario = Scenario(system=system, action=action)
    if "name" in sc:
        scenario.name = sc["name"][0]
    scenario.horizon = _want_float(sc, "horizon", path, default=100.0)
    scenario.step = _want_float(sc, "step", path, default=0.01)
    scenario.seed = _want_int(sc, "seed", path, default=0)
    scenario.tolerance = _want_float(sc, "tolerance", path, default=1e-9)
    if scenario.horizon <= 0:
        raise ConfigError(f"{path}:{sc['horizon'][1]}: horizon must be positive")
    if scenario.step <= 0:
        raise ConfigError(f"{path}:{sc['step'][1]}: step must be positive")
    if "initial" in sc:
        try:
            scenario.initial_conditions = _parse_vectors(sc["initial"][0])
        except ValueError:
            raise ConfigError(f"{path}:{sc['initial'][1]}: malformed initial conditions")
    if "out" in sc:
        scenario.output_path = Path(sc["out"][0])

    params = sections.get("params", {})
    scenario.params = _validate_params(system, params, path)

    for extra in ("estimate", "certify", "invariant"):
        entries = sections.get(extra, {})
        known = {"estimate": _ESTIMATE_KEYS, "certify": _CERTIFY_KEYS,
                 "invariant": _INVARIANT_KEYS}[extra]
        for key, (_, lineno) in entries.items():
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r} in [{extra}]")
        scenario.options[extra] = {k: v[0] for k, v in entries.items()}

    if scenario.action == "simulate" and not scenario.initial_conditions:
        raise ConfigError(f"{path}: simulate requires at least one initial condition")
    return scenario


def _validate_params(system: str, entries, path) -> dict:
    params: dict = {}
    if system == "fhn":
        for key, (_, lineno) in entries.items():
            if key not in _FHN_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r} in [params]")
        b = _want_float(entries, "b", path, default=0.1)
        epsilon = _want_float(entries, "epsilon", path, default=1.0)
        rho1 = _want_float(entries, "rho1", path, default=1.0)
        rho2 = _want_float(entries, "rho2", path, default=1.0)
        alpha = _want_float(entries, "alpha", path, default=1.0)
        c = _want_float(entries, "c", path)
        r = _want_float(entries, "r", path)
        if epsilon is not None and epsilon <= 0:
            raise ConfigError(f"{path}:{entries['epsilon'][1]}: epsilon must be positive")
        if b is not None and b <= 0:
            raise ConfigError(f"{path}:{entries['b'][1]}: b must be positive")
        if c is not None and r is not None:
            raise ConfigError(
                f"{path}:{entries['c'][1]}: give either c or r, not both"
            )
        try:
            if r is not None:
                fp = FhnParams(b=b, rho1=rho1, rho2=rho2, epsilon=epsilon, r=r,
                               alpha=alpha)
            else:
                fp = FhnParams.from_c(c=1.0 if c is None else c, b=b, rho1=rho1,
                                      rho2=rho2, epsilon=epsilon, alpha=alpha)
        except ValueError as exc:
            anchor = entries.get("alpha", entries.get("r", entries.get("c", None)))
            where = f"{path}:{anchor[1]}: " if anchor else f"{path}: "
            raise ConfigError(where + str(exc))
        params["fhn"] = fp
        params.update({"b": f"{b:g}", "epsilon": f"{epsilon:g}",
                       "rho1": f"{rho1:g}", "rho2": f"{rho2:g}",
                       "c": f"{fp.c:g}", "alpha": f"{alpha:g}"})
    elif system == "builtin_linear":
        for key, (_, lineno) in entries.items():
            if key not in _LINEAR_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r} in [params]")
        if "matrix" in entries:
            rows = _parse_vectors(entries["matrix"][0])
            a = np.vstack(rows)
            if a.shape[0] != a.shape[1]:
                raise ConfigError(
                    f"{path}:{entries['matrix'][1]}: matrix must be square"
                )
        else:
            dim = _want_int(entries, "dim", path, default=1)
            a = -np.eye(dim)
        params["matrix"] = a
        params["dim"] = str(a.shape[0])
    elif system == "user_polynomial":
        blocks: dict[str, dict[int, str]] = {"f1": {}, "f2": {}, "g1": {}, "g2": {}}
        for key, (value, lineno) in entries.items():
            if key in _POLY_FIXED_KEYS:
                continue
            match = _POLY_BLOCK_RE.match(key)
            if not match:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r} in [params]")
            blocks[match.group(1)][int(match.group(2))] = value
        n = _want_int(entries, "n", path)
        m = _want_int(entries, "m", path)
        if n is None or m is None:
            raise ConfigError(f"{path}: user_polynomial requires n and m in [params]")
        rho1 = _want_float(entries, "rho1", path, default=0.0)
        rho2 = _want_float(entries, "rho2", path, default=0.0)
        try:
            ic = _polynomial_interconnection(n, m, rho1, rho2, blocks)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}")
        params["interconnection"] = ic
        params.update({"n": str(n), "m": str(m), "rho1": f"{rho1:g}",
                       "rho2": f"{rho2:g}"})
    return params


def _polynomial_interconnection(n, m, rho1, rho2, blocks) -> Interconnection:
    def components(name: str, count: int, in_dim: int):
        comp = []
        provided = blocks[name]
        for i in range(count):
            if i not in provided:
                raise ValueError(f"missing component {name}_{i}")
            comp.append(parse_polynomial_component(provided[i], in_dim))
        return tuple(comp)

    f1 = polynomial_field(components("f1", n, n))
    f2 = polynomial_field(components("f2", m, m))
    g1 = polynomial_coupling(m, components("g1", n, m))
    g2 = polynomial_coupling(n, components("g2", m, n))
    return Interconnection(f1=f1, f2=f2, g1=g1, g2=g2, rho1=rho1, rho2=rho2)


def build_field(scenario: Scenario) -> TimeVaryingField:
    if scenario.system == "fhn":
        return assemble(fhn_field(scenario.params["fhn"]))
    if scenario.system == "builtin_linear":
        return linear_field(scenario.params["matrix"])
    return assemble(scenario.params["interconnection"])


def _csv_header(scenario: Scenario, extra: str = "") -> str:
    tail = f" {extra}" if extra else ""
    return f"# ieskit {__version__} {scenario.echo()}{tail}"


def _check_blowup(*trajectories) -> None:
    if any(tr.blew_up for tr in trajectories):
        raise BlowUpError("integration hit non-finite values; partial output discarded")


def run_simulate(scenario: Scenario) -> list[Path]:
    field = build_field(scenario)
    config = IntegratorConfig(max_time=scenario.horizon, step=scenario.step)
    written = []
    for i, z0 in enumerate(scenario.initial_conditions):
        if len(z0) != field.dim:
            raise ConfigError(
                f"initial condition {i} has dimension {len(z0)}, field needs {field.dim}"
            )
        tr = integrate(field, 0.0, z0, config)
        _check_blowup(tr)
        cols = ",".join(f"z{k+1}" for k in range(field.dim))
        lines = [_csv_header(scenario, extra=f"ic={i}"), f"t,{cols}"]
        for t, state in zip(tr.times, tr.states):
            lines.append(fnum(t) + "," + ",".join(fnum(v) for v in state))
        out = scenario.output_path / f"trajectory_{i:02d}.csv"
        atomic_write_text(out, "\n".join(lines) + "\n")
        written.append(out)
    return written


DEFAULT_FIGURE_PAIR = (np.array([2.0, 0.0]), np.array([-2.0, 1.0]))


def run_figures(
    out_dir,
    horizon: float = 100.0,
    step: float = 0.01,
    pair=DEFAULT_FIGURE_PAIR,
    seed: int = 0,
) -> list[Path]:
    """Reproduce the three benchmark scenarios: one CSV per figure with
    columns (t, x1, y1, x2, y2, distance)."""
    out_dir = Path(out_dir)
    z1, z2 = (np.asarray(p, dtype=float) for p in pair)
    config = IntegratorConfig(max_time=horizon, step=step)
    written = []
    for fig in (1, 2, 3):
        p = figure_params(fig)
        field = assemble(fhn_field(p))
        tr1 = integrate(field, 0.0, z1, config)
        tr2 = integrate(field, 0.0, z2, config)
        _check_blowup(tr1, tr2)
        dist = np.linalg.norm(tr1.states - tr2.states, axis=1)
        header = (
            f"# ieskit {__version__} figure={fig} c={p.c:g} b={p.b:g} "
            f"epsilon={p.epsilon:g} rho1={p.rho1:g} rho2={p.rho2:g} "
            f"horizon={horizon:g} step={step:g} "
            f"z1={' '.join(f'{v:g}' for v in z1)} "
            f"z2={' '.join(f'{v:g}' for v in z2)} seed={seed}"
        )
        lines = [header, "t,x1,y1,x2,y2,distance"]
        for t, s1, s2, d in zip(tr1.times, tr1.states, tr2.states, dist):
            lines.append(
                ",".join(fnum(v) for v in (t, s1[0], s1[1], s2[0], s2[1], d))
            )
        out = out_dir / f"figure{fig}.csv"
        atomic_write_text(out, "\n".join(lines) + "\n")
        written.append(out)
    return written


def run_estimate(scenario: Scenario) -> list[Path]:
    field = build_field(scenario)
    opts = scenario.options.get("estimate", {})
    n_pairs = int(opts.get("pairs", 20))
    if n_pairs < 1:
        raise ConfigError("estimate requires pairs >= 1")
    if "box" in opts:
        box = np.vstack(_parse_vectors(opts["box"]))
        if box.shape != (field.dim, 2):
            raise ConfigError(
                f"estimate box needs {field.dim} rows of 'lo hi', got shape {box.shape}"
            )
    else:
        box = np.array([[-3.0, 3.0]] * field.dim)
    envelope = EnvelopeConfig(
        transient_skip=float(opts.get("transient_skip", 0.2))
    )
    pairs = []
    ics = scenario.initial_conditions
    for k in range(0, len(ics) - 1, 2):
        pairs.append((ics[k], ics[k + 1]))
    if len(pairs) < n_pairs:
        pairs += sample_pairs_box(box, n_pairs - len(pairs), scenario.seed)
    config = IntegratorConfig(max_time=scenario.horizon, step=scenario.step)
    report = ensemble_ies(field, pairs, scenario.horizon, config, envelope)
    if report.inconclusive and any(r.blew_up for r in report.results):
        raise BlowUpError("a trajectory pair blew up during estimation")
    out_d = scenario.output_path / "distances.csv"
    out_s = scenario.output_path / "summary.csv"
    write_distance_csv(out_d, report.results)
    write_summary_csv(out_s, report.results)
    return [out_d, out_s]


def run_invariant_set(scenario: Scenario):
    field = build_field(scenario)
    opts = scenario.options.get("invariant", {})
    if scenario.system == "fhn":
        w = fhn_outer_lyapunov(scenario.params["fhn"])
    else:
        w = OuterLyapunov(
            value=lambda t, z: 0.5 * float(z @ z),
            gradient=lambda t, z: (np.asarray(z, dtype=float), 0.0),
            class_lower=lambda s: 0.5 * s * s,
            class_upper=lambda s: 0.5 * s * s,
        )
    level_min = float(opts.get("level_min", 1.0))
    level_max = float(opts.get("level_max", 40.0))
    n_levels = int(opts.get("levels", 40))
    half = float(opts.get("box_halfwidth", 8.0))
    density = int(opts.get("density", 81))
    shell = float(opts.get("shell_width", 0.05))
    box = np.array([[-half, half]] * field.dim)
    est = find_invariant_level(
        w, field, (level_min, level_max), box,
        n_levels=n_levels, grid_density=density, shell_width=shell,
    )
    out = scenario.output_path / "invariant_set.txt"
    write_invariant_report(est, out)
    return est, [out]


def run_fc_table(scenario: Scenario) -> list[Path]:
    if scenario.system != "fhn":
        raise ConfigError("fc_table requires system = fhn")
    table = build_fc(scenario.params["fhn"])
    out = scenario.output_path / "fc_table.csv"
    write_fc_csv(table, out)
    return [out]


def run_certify(scenario: Scenario) -> list[Path]:
    if scenario.system != "fhn":
        raise ConfigError("certify requires system = fhn")
    params: FhnParams = scenario.params["fhn"]
    opts = scenario.options.get("certify", {})
    table = build_fc(params)
    cand1, cand2 = fc_candidate(table)
    bounds1, bounds2 = assumption2_bounds(table)
    alpha1 = float(opts.get("alpha1", params.alpha))
    alpha2 = float(opts.get("alpha2", params.b / params.epsilon))
    alpha = float(opts.get("alpha", 0.5 * min(alpha1, alpha2)))
    requested = None
    if "rho1" in opts or "rho2" in opts:
        requested = (float(opts.get("rho1", params.rho1)),
                     float(opts.get("rho2", params.rho2)))
    if "radius" in opts:
        radius = float(opts["radius"])
    else:
        # closed-form enclosure from the dissipation chain at equal gains
        kappa = min(0.125, params.b / params.epsilon)
        level = (2.0 + params.c**2 / 2.0) / (2.0 * kappa) * 1.05
        radius = math.sqrt(2.0 * level * max(1.0, 1.0 / params.epsilon)) * 1.05
    ic = fhn_field(params)
    cert = certify(
        ic, cand1, cand2, bounds1, bounds2, radius,
        alpha1=alpha1, alpha2=alpha2, alpha=alpha,
        requested_gains=requested, tol=scenario.tolerance,
    )
    out_rec = scenario.output_path / "certificate.rec"
    out_txt = scenario.output_path / "certificate.txt"
    cert.write_record(out_rec)
    cert.write_report(out_txt)
    return [out_rec, out_txt]


def run_scenario(scenario: Scenario) -> list[Path]:
    """Dispatch a scenario to its action runner and return the written files."""
    action = scenario.action
    if action == "simulate":
        return run_simulate(scenario)
    if action == "figures":
        pair = DEFAULT_FIGURE_PAIR
        if len(scenario.initial_conditions) >= 2:
            pair = (scenario.initial_conditions[0], scenario.initial_conditions[1])
        return run_figures(scenario.output_path, scenario.horizon, scenario.step,
                           pair, scenario.seed)
    if action == "estimate":
        return run_estimate(scenario)
    if action == "invariant_set":
        _, written = run_invariant_set(scenario)
        return written
    if action == "fc_table":
        return run_fc_table(scenario)
    if action == "certify":
        return run_certify(scenario)
    raise ConfigError(f"unknown action {action!r}")
