"""Experiment catalog: configs, runners and output files.

Each experiment reads one INI config (one section per concern, flat keys),
writes comma-separated data files with a single header line and a
``manifest.json`` describing the run. Budgets in the configs are the
published (paper-scale) ones; desk runs divide them by ``desk_divisor``.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import analysis as an
from . import dynamics as dy
from . import ergodicity as er
from . import sections as sc
from .integrators import IntegrationError, IntegratorSpec, integrate, reflect

TWO_PI = dy.TWO_PI


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# value parsers

def _number(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"{text!r} is not a finite number")
    return v


def _integer(text: str) -> int:
    v = _number(text)
    if v != int(v):
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _listof(conv):
    def parse(text: str):
        items = [t.strip() for t in text.replace("\n", ",").split(",") if t.strip()]
        if not items:
            raise ValueError("empty list")
        return [conv(t) for t in items]

    parse.__name__ = f"list of {conv.__name__.strip('_')}"
    return parse


def _boolean(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _choice(*options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"{text!r} is not one of {', '.join(options)}")
        return text

    parse.__name__ = "choice"
    return parse


def _positive(conv):
    def parse(text: str):
        v = conv(text)
        vals = v if isinstance(v, list) else [v]
        if any(x <= 0 for x in vals):
            raise ValueError("must be positive")
        return v

    parse.__name__ = conv.__name__
    return parse


floats = _listof(_number)
pos_float = _positive(_number)
pos_int = _positive(_integer)
pos_floats = _positive(floats)
pos_ints = _positive(_listof(_integer))
REQUIRED = object()


# ---------------------------------------------------------------------------
# config

@dataclass
class ExperimentConfig:
    id: str
    output: str
    desk_divisor: int
    seed: int
    params: dict
    source: str
    echo: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        section, name = key.split(".")
        return self.params[section][name]


def _key_lines(text: str) -> dict:
    """``(section, key) -> line number`` for diagnostics; configparser does not keep them."""
    out = {}
    section = None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            out[(section, None)] = n
        elif section is not None and not line[:1].isspace():
            for sep in ("=", ":"):
                if sep in s:
                    out[(section, s.split(sep, 1)[0].strip().lower())] = n
                    break
    return out


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    lines = _key_lines(text)

    def where(section, key=None):
        n = lines.get((section, key)) or lines.get((section, None))
        loc = f"{source}:{n}" if n else source
        return f"{loc}: [{section}]" + (f" {key}" if key else "")

    if not cp.has_section("experiment") or "id" not in cp["experiment"]:
        raise ConfigError(f"{source}: missing [experiment] id")
    exp_id = cp["experiment"]["id"].strip()
    if exp_id not in CATALOG:
        raise ConfigError(f"{where('experiment', 'id')}: unknown experiment {exp_id!r}; see `thermolab list`")
    schema = {"experiment": COMMON_SCHEMA, **CATALOG[exp_id].schema}
    for section in cp.sections():
        if section not in schema:
            raise ConfigError(f"{where(section)}: unknown section for {exp_id}")
    params = {}
    for section, keys in schema.items():
        params[section] = {}
        present = cp[section] if cp.has_section(section) else {}
        for key in present:
            if key not in keys:
                raise ConfigError(f"{where(section, key)}: unknown key")
        for key, (conv, default) in keys.items():
            if key in present:
                try:
                    params[section][key] = conv(present[key].strip())
                except ValueError as exc:
                    raise ConfigError(f"{where(section, key)}: {exc}") from None
            elif default is REQUIRED:
                raise ConfigError(f"{where(section)}: missing required key {key!r}")
            else:
                params[section][key] = default
    head = params.pop("experiment")
    echo = {s: dict(cp[s]) for s in cp.sections()}
    return ExperimentConfig(exp_id, head["output"] or exp_id, head["desk_divisor"], head["seed"], params, source, echo)


def load_config(path) -> ExperimentConfig:
    """Load a config file, or a packaged default when ``path`` is a catalog id."""
    p = Path(path)
    if not p.exists() and str(path) in CATALOG:
        p = default_config_path(str(path))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(p))


def default_config_path(exp_id: str) -> Path:
    return Path(str(resources.files("thermolab") / "configs" / f"{exp_id}.ini"))


# ---------------------------------------------------------------------------
# run context and output

@dataclass
class Context:
    out: Path
    paper_scale: bool
    divisor: int
    workers: int
    warnings: list = field(default_factory=list)
    files: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def scale(self, n: int) -> int:
        return int(n) if self.paper_scale else max(1, -(-int(n) // self.divisor))

    def warn(self, msg: str) -> None:
        self.warnings.append(msg)

    def write_csv(self, name: str, columns: list[str], rows) -> Path:
        """One header line of ``name [unit]`` columns, then rows with 17 significant digits."""
        rows = np.asarray(rows, dtype=float).reshape(-1, len(columns))
        path = self.out / name
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(columns) + "\n")
            np.savetxt(fh, rows, fmt="%.17g", delimiter=",")
        self.files.append(path)
        return path

    def map(self, fn: Callable, items: list) -> list:
        """Apply ``fn`` to independent items on up to ``workers`` threads, results in item order."""
        if self.workers <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=min(self.workers, len(items))) as pool:
            return list(pool.map(fn, items))


def worker_count() -> int:
    n = os.cpu_count() or 1
    cap = os.environ.get("THERMOLAB_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"THERMOLAB_THREADS must be an integer, got {cap!r}") from None
    return n


def tag(x: float) -> str:
    return f"{x:g}".replace("-", "m")


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunResult:
    out: Path
    manifest: dict
    ok: bool = True


def run(config: ExperimentConfig, out: str | Path | None = None, paper_scale: bool = False) -> RunResult:
    """Run one experiment; writes data files and ``manifest.json`` into the output directory."""
    out = Path(out) if out is not None else Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(out, paper_scale, config.desk_divisor, worker_count())
    t0 = time.perf_counter()
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    error = None
    try:
        ok = CATALOG[config.id].run(config, ctx)
    except IntegrationError as exc:
        error = {"type": "IntegrationError", "message": str(exc), "step": exc.step}
        ctx.warn(f"integration aborted: {exc}")
        ok = False
    manifest = {
        "experiment": config.id,
        "config_source": config.source,
        "config": config.echo,
        "scale": "paper" if paper_scale else f"desk (paper budgets / {config.desk_divisor})",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "workers": ctx.workers,
        "started": started,
        "wall_clock_s": round(time.perf_counter() - t0, 3),
        "warnings": ctx.warnings,
        "summary": ctx.summary,
        "error": error,
        "outputs": {p.name: sha256(p) for p in ctx.files},
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=_jsonable)
        fh.write("\n")
    if error is not None:
        raise IntegrationError(error["message"], step=error["step"])
    return RunResult(out, manifest, bool(ok))


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


# ---------------------------------------------------------------------------
# experiments

COMMON_SCHEMA = {
    "id": (str, REQUIRED),
    "output": (str, ""),
    "desk_divisor": (pos_int, 50),
    "seed": (_integer, 0),
}


def g_contours(cfg: ExperimentConfig, ctx: Context) -> bool:
    levels = sorted(cfg["levels.g"])
    n = cfg["levels.points"]
    for g in levels:
        sm, sp = an.turning_points(g)
        # sigma = c + h sin(u) clusters points near the turning points where alpha turns fast
        u = np.linspace(-math.pi / 2, math.pi / 2, n)
        c, h = 0.5 * (sp + sm), 0.5 * (sp - sm)
        sigma = c + h * np.sin(u)
        sigma[0], sigma[-1] = sm, sp
        V, _, _ = dy.potential_V(sigma)
        alpha = np.sqrt(np.maximum(2.0 * (g - V), 0.0))
        alpha[0] = alpha[-1] = 0.0
        tau = np.exp(sigma)
        loop_tau = np.concatenate([tau, tau[-2::-1]])
        loop_alpha = np.concatenate([alpha, -alpha[-2::-1]])
        ctx.write_csv(f"contour_G{tag(g)}.csv", ["tau [1]", "alpha [1]"], np.column_stack([loop_tau, loop_alpha]))
    t_lo, t_hi = cfg["window.tau_min"], cfg["window.tau_max"]
    a_lo, a_hi = cfg["window.alpha_min"], cfg["window.alpha_max"]
    if not (0 < t_lo < t_hi and a_lo < a_hi):
        raise ConfigError(f"{cfg.source}: [window] needs 0 < tau_min < tau_max and alpha_min < alpha_max")
    m = cfg["window.grid"]
    T, A = np.meshgrid(np.linspace(t_lo, t_hi, m), np.linspace(a_lo, a_hi, m), indexing="ij")
    G = dy.integral_G(T, A)
    ctx.write_csv("g_grid.csv", ["tau [1]", "alpha [1]", "G [1]"], np.column_stack([T.ravel(), A.ravel(), G.ravel()]))
    ctx.summary["levels"] = levels
    return True


def poincare_nh(cfg: ExperimentConfig, ctx: Context) -> bool:
    spp = cfg["integrator.steps_per_period"]
    returns = ctx.scale(cfg["integrator.returns"])
    budget = int(returns * spp * cfg["integrator.budget_factor"])
    section = sc.SectionSpec.angle(0, cfg["section.direction"])
    alpha0 = cfg["initial.alpha"]
    tasks = [(eps, tau) for eps in cfg["system.eps"] for tau in cfg["initial.tau"]]

    def one(task):
        eps, tau = task
        return sc.section_crossings(dy.nh_aa_flow(eps), (0.0, tau, alpha0), section,
                                    IntegratorSpec(TWO_PI / spp, budget), returns)

    orbits = ctx.map(one, tasks)
    rows = []
    for (eps, tau), orb in zip(tasks, orbits):
        G = dy.integral_G(orb.points[:, 0], orb.points[:, 1])
        G0 = dy.integral_G(tau, alpha0)
        ctx.write_csv(
            f"orbit_eps{tag(eps)}_tau{tag(tau)}.csv",
            ["n [count]", "time [1]", "tau [1]", "alpha [1]", "G [1]"],
            np.column_stack([np.arange(1, len(orb) + 1), orb.times, orb.points, G]),
        )
        k, stride = (1, 0)
        if len(orb) >= 10 * cfg["islands.k_max"]:
            k, stride = sc.island_clusters(orb, cfg["islands.k_max"])
        if not orb.complete:
            ctx.warn(f"eps={eps:g} tau0={tau:g}: {len(orb)} of {returns} returns within the step budget")
        if orb.n_skipped:
            ctx.warn(f"eps={eps:g} tau0={tau:g}: skipped {orb.n_skipped} crossings ({orb.n_tangential} tangential)")
        drift = float(np.max(np.abs(G - G0))) if len(orb) else math.nan
        rows.append([eps, tau, G0, len(orb), orb.n_skipped, drift, k, stride])
    ctx.write_csv(
        "summary.csv",
        ["eps [1]", "tau0 [1]", "G0 [1]", "returns [count]", "skipped [count]", "max_G_drift [1]",
         "islands [count]", "island_stride [count]"],
        rows,
    )
    ctx.summary["orbits"] = len(rows)
    return True


def ring_projection(cfg: ExperimentConfig, ctx: Context) -> bool:
    eps = cfg["system.eps"]
    s0 = cfg["initial.state"]
    if len(s0) != 3:
        raise ConfigError(f"{cfg.source}: [initial] state needs (q, p, xi)")
    spec = IntegratorSpec(cfg["integrator.dt"], ctx.scale(cfg["integrator.n_steps"]), cfg["integrator.stride"], "splitting")
    conf = an.ConfinementObserver()
    traj = integrate(dy.nh_flow(eps), s0, spec, [conf], keep=True)
    ctx.write_csv("projection.csv", ["time [1]", "q [1]", "p [1]"], np.column_stack([traj.times, traj.states[:, :2]]))
    _confinement_summary(ctx, conf.report(), spec)
    return True


def _confinement_summary(ctx: Context, rep: an.ConfinementReport, spec: IntegratorSpec) -> None:
    ctx.write_csv(
        "confinement.csv",
        ["tau_min [1]", "tau_max [1]", "qp_min [1]", "qp_max [1]", "samples [count]", "horizon [1]", "dt [1]", "stride [count]"],
        [[rep.tau_min, rep.tau_max, rep.qp_min, rep.qp_max, rep.n_samples, rep.horizon, spec.dt, spec.sample_stride]],
    )
    ctx.summary.update(tau_min=rep.tau_min, tau_max=rep.tau_max, horizon=rep.horizon)


def poincare_nhc_averaged(cfg: ExperimentConfig, ctx: Context) -> bool:
    n = ctx.scale(cfg["integrator.crossings"])
    spec = IntegratorSpec(cfg["integrator.dt"], n * cfg["integrator.steps_per_crossing"])
    section = sc.SectionSpec.hyperplane(2, 0.0, cfg["section.direction"])
    q0s = cfg["initial.q0"]

    def one(q0):
        return sc.section_crossings(dy.nhc_averaged_flow(), (0.5 * q0 * q0, 0.0, 0.0), section, spec, n)

    rows = []
    for q0, orb in zip(q0s, ctx.map(one, q0s)):
        ctx.write_csv(
            f"orbit_q0{tag(q0)}.csv",
            ["n [count]", "time [1]", "tau [1]", "alpha1 [1]", "direction [sign]"],
            np.column_stack([np.arange(1, len(orb) + 1), orb.times, orb.points, orb.directions]),
        )
        if not orb.complete:
            ctx.warn(f"q0={q0:g}: {len(orb)} of {n} crossings within the step budget")
        tmin = float(orb.points[:, 0].min()) if len(orb) else math.nan
        rows.append([q0, len(orb), orb.n_skipped, tmin])
    ctx.write_csv("summary.csv", ["q0 [1]", "crossings [count]", "skipped [count]", "section_tau_min [1]"], rows)
    return True


def _chain_run(cfg: ExperimentConfig, ctx: Context, observers, keep=False):
    Q = cfg["system.q"]
    s0 = cfg["initial.state"]
    if len(s0) != 4:
        raise ConfigError(f"{cfg.source}: [initial] state needs (q, p, xi1, xi2)")
    spec = IntegratorSpec(cfg["integrator.dt"], ctx.scale(cfg["integrator.n_steps"]),
                          cfg["integrator.stride"], "splitting")
    eps = dy.eps_from_Q(Q)
    return eps, spec, integrate(dy.nhc_flow(eps), s0, spec, observers, keep=keep)


def nhc_section_trace(cfg: ExperimentConfig, ctx: Context) -> bool:
    obs = sc.HyperplaneObserver(3, 0.0, cfg["section.direction"])
    conf = an.ConfinementObserver()
    eps, spec, _ = _chain_run(cfg, ctx, [obs, conf])
    orb = obs.orbit()
    tau = 0.5 * (orb.states[:, 0] ** 2 + orb.states[:, 1] ** 2)
    ctx.write_csv(
        "trace.csv",
        ["time [1]", "tau [1]", "alpha1 [1]", "direction [sign]"],
        np.column_stack([orb.times, tau, eps * orb.states[:, 2], orb.directions]),
    )
    _confinement_summary(ctx, conf.report(), spec)
    ctx.summary["crossings"] = len(orb)
    return True


def nhc_projection(cfg: ExperimentConfig, ctx: Context) -> bool:
    conf = an.ConfinementObserver()
    _, spec, traj = _chain_run(cfg, ctx, [conf], keep=True)
    ctx.write_csv("projection.csv", ["time [1]", "q [1]", "p [1]"], np.column_stack([traj.times, traj.states[:, :2]]))
    _confinement_summary(ctx, conf.report(), spec)
    return True


def nhc_distributions(cfg: ExperimentConfig, ctx: Context) -> bool:
    bins, r_c = cfg["histogram.bins"], cfg["histogram.r_c"]
    renorm = cfg["histogram.renormalize"]
    dist = er.DistributionObserver(bins, r_c)
    kin = er.KineticAverage()
    _, spec, _ = _chain_run(cfg, ctx, [dist, kin])
    for name, h, pdf, unit in (("angular", dist.angular, er.theo_angular_pdf, "rad"),
                               ("amplitude", dist.amplitude, er.theo_amplitude_pdf, "1")):
        dens = h.density(renorm)
        theo = pdf(h.midpoints)
        ctx.write_csv(
            f"{name}.csv",
            [f"bin_mid [{unit}]", f"density [1/{unit}]", f"theory [1/{unit}]", f"abs_error [1/{unit}]", "count [count]"],
            np.column_stack([h.midpoints, dens, theo, np.abs(dens - theo), h.counts]),
        )
        ctx.summary[f"{name}_error"] = er.distribution_error(h, pdf, renorm)
    ctx.summary["kinetic_average"] = er.kinetic_average(kin)
    ctx.summary["samples"] = dist.angular.total
    ctx.summary["amplitude_above_cutoff"] = dist.amplitude.above
    ctx.write_csv(
        "summary.csv",
        ["samples [count]", "angular_error [1/rad]", "amplitude_error [1]", "kinetic_average [1]", "above_cutoff [count]"],
        [[dist.angular.total, ctx.summary["angular_error"], ctx.summary["amplitude_error"],
          ctx.summary["kinetic_average"], dist.amplitude.above]],
    )
    return True


def nhc_discrepancy(cfg: ExperimentConfig, ctx: Context) -> bool:
    Q = cfg["system.q"]
    eps = dy.eps_from_Q(Q)
    checkpoints = sorted({ctx.scale(c) for c in cfg["integrator.checkpoints"]})
    if len(checkpoints) < 3:
        raise ConfigError(f"{cfg.source}: [integrator] checkpoints needs at least 3 distinct values at this scale")
    spec = IntegratorSpec(cfg["integrator.dt"], checkpoints[-1] - 1, 1, "splitting")
    grid_n, r_c = cfg["discrepancy.grid_n"], cfg["discrepancy.r_c"]
    q0s = cfg["initial.q0"]

    def one(q0):
        obs = er.DiscrepancyObserver(checkpoints, grid_n, r_c)
        integrate(dy.nhc_flow(eps), (q0, 0.0, 0.0, 0.0), spec, [obs], keep=False)
        return obs

    obs_list = ctx.map(one, q0s)
    for q0, obs in zip(q0s, obs_list):
        ctx.write_csv(f"curve_q0{tag(q0)}.csv", ["N [count]", "D [1]"], obs.curve.entries)
    # samples beyond r_c are expected (Gibbs tail mass e^{-r_c^2/2}); checkpoints count trajectory
    # samples, while D normalises by the retained ones
    ctx.summary["excluded_beyond_r_c"] = {f"{q0:g}": o.acc.n_excluded for q0, o in zip(q0s, obs_list)}
    mean = er.mean_curve([o.curve for o in obs_list])
    ctx.write_csv("mean_curve.csv", ["N [count]", "D [1]"], mean.entries)
    f = mean.fit
    ctx.write_csv("fit.csv", ["C [1]", "a [1]", "C_err [1]", "a_err [1]"], [[f.C, f.a, f.C_err, f.a_err]])
    ctx.summary.update(C=f.C, a=f.a, a_err=f.a_err)
    return True


def diagnostics(cfg: ExperimentConfig, ctx: Context) -> bool:
    """Invariant checks; returns False if any fails."""
    checks = []
    rng = np.random.default_rng(cfg.seed)

    # time reversibility of both splitting schemes
    n_states, n_steps, dt = cfg["reversibility.states"], cfg["reversibility.steps"], cfg["reversibility.dt"]
    rows = []
    for name, flow, dim in (("nh", dy.nh_flow, 3), ("nhc", dy.nhc_flow, 4)):
        for eps in cfg["reversibility.eps"]:
            f = flow(eps)
            spec = IntegratorSpec(dt, n_steps, scheme="splitting")
            worst = 0.0
            for _ in range(n_states):
                s = rng.normal(size=dim)
                fwd = integrate(f, s, spec, keep=False).final_state
                back = reflect(integrate(f, reflect(fwd), spec, keep=False).final_state)
                worst = max(worst, float(np.max(np.abs(back - s))))
            rows.append([dim, eps, worst])
            checks.append((f"reversibility {name} eps={eps:g}", worst, worst < cfg["reversibility.tol"]))
    ctx.write_csv("reversibility.csv", ["dim [count]", "eps [1]", "max_error [1]"], rows)

    # invariant measure
    h, n_pts, tol = cfg["divergence.h"], cfg["divergence.points"], cfg["divergence.tol"]
    rows = []
    cases = []
    Q = 1.0
    cases.append(("nh", lambda z: dy.nh_field(z, 1 / math.sqrt(Q)), lambda z: dy.gibbs_density_nh(z, Q), 3, False))
    for M in (2, 3):
        sys = dy.harmonic_system(1, thermostat_masses=rng.uniform(0.5, 3.0, M))

        def field_(z, sys=sys):
            qd, pd, xd = dy.nhc_field_general(z[:1], z[1:2], z[2:], sys)
            return np.concatenate([qd, pd, xd])

        cases.append((f"nhc M={M}", field_, lambda z, sys=sys: dy.gibbs_density_nhc(z, sys.thermostat_masses), 2 + M, False))
    cases.append(("nh wrong beta", cases[0][1], lambda z: dy.gibbs_density_nh(z, Q, 2.0), 3, True))
    for label, fld, rho, dim, negative in cases:
        vals = [abs(dy.measure_divergence(fld, rho, rng.normal(size=dim), h)) for _ in range(n_pts)]
        if negative:
            v = float(np.median(vals))
            checks.append((f"divergence {label} (median, must exceed)", v, v > cfg["divergence.negative_min"]))
        else:
            v = float(np.max(vals))
            checks.append((f"divergence {label}", v, v < tol))
        rows.append([dim, v, int(negative)])
    ctx.write_csv("divergence.csv", ["dim [count]", "abs_div [1]", "negative_control [bool]"], rows)

    # first integral of the averaged system
    G_drift = 0.0
    for tau0 in cfg["first_integral.tau"]:
        tr = integrate(dy.nh_averaged_flow(), (tau0, 0.0), IntegratorSpec(1e-3, 100_000, 100))
        G = dy.integral_G(tr.states[:, 0], tr.states[:, 1])
        G_drift = max(G_drift, float(np.max(np.abs(G - G[0]))))
    checks.append(("first integral |dG| rk4", G_drift, G_drift < 1e-9))

    # period function and twist
    rows = []
    worst = 0.0
    for g in cfg["period.g"]:
        tq = an.period_quadrature(g).T
        to = an.period_ode_oracle(g).T
        rel = abs(tq - to) / to
        worst = max(worst, rel)
        rows.append([g, tq, to, rel])
    ctx.write_csv("period.csv", ["G [1]", "T_quadrature [1]", "T_ode [1]", "rel_diff [1]"], rows)
    checks.append(("period quadrature vs ODE oracle", worst, worst < 1e-8))
    t0 = an.period_quadrature(1e-8).T
    checks.append(("harmonic limit |T(1e-8) - 2pi|", abs(t0 - TWO_PI), abs(t0 - TWO_PI) < 1e-4))
    grid = np.geomspace(cfg["period.twist_min"], cfg["period.twist_max"], cfg["period.twist_points"])
    Ts = [an.period_quadrature(g).T for g in grid]
    ok, margin = an.twist_check(grid, Ts)
    ctx.write_csv("twist.csv", ["G [1]", "T [1]"], np.column_stack([grid, Ts]))
    checks.append(("twist T'(G) > 0 (min increment)", margin, ok))
    s = np.linspace(-3, 3, 6001)
    s = s[np.abs(s) >= 1e-3]
    c1, c3 = an.chicone_criterion(s), an.chicone_criterion_third(s)
    ctx.write_csv("chicone.csv", ["sigma [1]", "verbatim [1]", "third_derivative [1]"], np.column_stack([s, c1, c3]))
    checks.append(("Chicone verbatim min", float(c1.min()), bool(c1.min() > 0)))
    checks.append(("Chicone V''' variant min", float(c3.min()), bool(c3.min() > 0)))

    # Diophantine table for the unperturbed rotation numbers omega = 2 pi eps / T(G)
    rows = []
    c0, mu, l_max = cfg["diophantine.c0"], cfg["diophantine.mu"], cfg["diophantine.l_max"]
    for eps in cfg["diophantine.eps"]:
        for g in cfg["diophantine.g"]:
            T = an.period_quadrature(g).T
            omega = TWO_PI * eps / T
            rows.append([eps, g, T, omega, int(sc.diophantine_check(omega, c0, mu, l_max))])
    ctx.write_csv("diophantine.csv", ["eps [1]", "G [1]", "T [1]", "omega [turns]", "diophantine [bool]"], rows)
    golden = (math.sqrt(5) - 1) / 2
    checks.append(("Diophantine golden mean accepted", golden, sc.diophantine_check(golden, 0.2, 2, 10_000)))
    checks.append(("Diophantine 1/2 rejected", 0.5, not sc.diophantine_check(0.5, c0, mu, l_max)))

    ctx.write_csv("checks.csv", ["index [count]", "value [1]", "pass [bool]"],
                  [[i, v, int(p)] for i, (_, v, p) in enumerate(checks)])
    ctx.summary["checks"] = [{"name": n, "value": v, "pass": bool(p)} for n, v, p in checks]
    failed = [n for n, _, p in checks if not p]
    for n in failed:
        ctx.warn(f"check failed: {n}")
    return not failed


@dataclass(frozen=True)
class Experiment:
    id: str
    description: str
    schema: dict
    run: Callable[[ExperimentConfig, Context], bool]


CATALOG = {
    e.id: e
    for e in [
        Experiment(
            "g-contours",
            "level curves of the averaged first integral G (exact polylines) and G on a (tau, alpha) grid",
            {
                "levels": {"g": (pos_floats, REQUIRED), "points": (pos_int, 400)},
                "window": {"tau_min": (pos_float, 0.05), "tau_max": (pos_float, 6.0),
                           "alpha_min": (_number, -3.0), "alpha_max": (_number, 3.0), "grid": (pos_int, 121)},
            },
            g_contours,
        ),
        Experiment(
            "poincare-nh",
            "return map of theta = 0 mod 2pi for the action-angle Nose-Hoover field, with island detection",
            {
                "system": {"eps": (pos_floats, REQUIRED)},
                "initial": {"tau": (pos_floats, REQUIRED), "alpha": (_number, 0.0)},
                "integrator": {"steps_per_period": (pos_int, 800), "returns": (pos_int, REQUIRED),
                               "budget_factor": (pos_float, 2.0)},
                "section": {"direction": (_choice("positive", "negative", "both"), "positive")},
                "islands": {"k_max": (pos_int, 12)},
            },
            poincare_nh,
        ),
        Experiment(
            "ring-projection",
            "(q, p) projection of the eps = 1 Nose-Hoover orbit from (2.2, 0, 0), splitting integrator",
            {
                "system": {"eps": (pos_float, 1.0)},
                "initial": {"state": (floats, REQUIRED)},
                "integrator": {"dt": (pos_float, REQUIRED), "n_steps": (pos_int, REQUIRED), "stride": (pos_int, 1)},
            },
            ring_projection,
        ),
        Experiment(
            "poincare-nhc-averaged",
            "alpha2 = 0 section of the averaged chain system for a list of q0 (both crossing directions)",
            {
                "initial": {"q0": (pos_floats, REQUIRED)},
                "integrator": {"dt": (pos_float, REQUIRED), "crossings": (pos_int, REQUIRED),
                               "steps_per_crossing": (pos_int, 2000)},
                "section": {"direction": (_choice("positive", "negative", "both"), "both")},
            },
            poincare_nhc_averaged,
        ),
        Experiment(
            "nhc-section-trace",
            "trace of the full chain trajectory on xi2 = 0 (interpolated between samples), Q = 10",
            {
                "system": {"q": (pos_float, REQUIRED)},
                "initial": {"state": (floats, REQUIRED)},
                "integrator": {"dt": (pos_float, REQUIRED), "n_steps": (pos_int, REQUIRED), "stride": (pos_int, 1)},
                "section": {"direction": (_choice("positive", "negative", "both"), "both")},
            },
            nhc_section_trace,
        ),
        Experiment(
            "nhc-projection",
            "(q, p) projection of the full chain trajectory, Q = 10",
            {
                "system": {"q": (pos_float, REQUIRED)},
                "initial": {"state": (floats, REQUIRED)},
                "integrator": {"dt": (pos_float, REQUIRED), "n_steps": (pos_int, REQUIRED), "stride": (pos_int, 1)},
            },
            nhc_projection,
        ),
        Experiment(
            "nhc-distributions",
            "phase and amplitude histograms of the Q = 1 chain against the Gibbs densities, kinetic average",
            {
                "system": {"q": (pos_float, REQUIRED)},
                "initial": {"state": (floats, REQUIRED)},
                "integrator": {"dt": (pos_float, REQUIRED), "n_steps": (pos_int, REQUIRED), "stride": (pos_int, 1)},
                "histogram": {"bins": (pos_int, 100), "r_c": (pos_float, 4.0), "renormalize": (_boolean, True)},
            },
            nhc_distributions,
        ),
        Experiment(
            "nhc-discrepancy",
            "star discrepancy of the Q = 1 chain at sample-count checkpoints for several ICs, power-law fit",
            {
                "system": {"q": (pos_float, REQUIRED)},
                "initial": {"q0": (pos_floats, REQUIRED)},
                "integrator": {"dt": (pos_float, REQUIRED), "checkpoints": (pos_ints, REQUIRED)},
                "discrepancy": {"grid_n": (pos_int, 100), "r_c": (pos_float, 4.0)},
            },
            nhc_discrepancy,
        ),
        Experiment(
            "diagnostics",
            "reversibility, invariant measure, first integral, period/twist, Chicone and Diophantine tables",
            {
                "reversibility": {"eps": (pos_floats, [0.1, 1.0]), "states": (pos_int, 100), "steps": (pos_int, 1000),
                                  "dt": (pos_float, 0.01), "tol": (pos_float, 1e-8)},
                "divergence": {"points": (pos_int, 100), "h": (pos_float, 1e-4), "tol": (pos_float, 1e-6),
                               "negative_min": (pos_float, 1e-2)},
                "first_integral": {"tau": (pos_floats, [0.3, 0.6, 1.5, 2.42, 4.0])},
                "period": {"g": (pos_floats, [0.01, 0.1, 1.0, 4.0]), "twist_min": (pos_float, 1e-3),
                           "twist_max": (pos_float, 10.0), "twist_points": (pos_int, 50)},
                "diophantine": {"eps": (pos_floats, [0.1, 1.0]), "g": (pos_floats, [0.01, 0.1, 0.5, 1.0, 2.0, 5.0]),
                                "c0": (pos_float, 0.01), "mu": (pos_float, 2.0), "l_max": (pos_int, 10_000)},
            },
            diagnostics,
        ),
    ]
}
