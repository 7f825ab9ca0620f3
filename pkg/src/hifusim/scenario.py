"""Coupled simulation assembly, configuration, and presets.

A scenario couples the three field solvers on one mesh.  Per time step,

    1. acoustics advances with the temperature frozen at the previous
       step (the temperature lags the pressure by one step),
    2. the bioheat solve consumes the fresh p_t as its heat source,
    3. transport consumes the fresh pressure through the drift
       v = v0 - k_D grad p.

Coupling modes: ``full``; ``frozen_temperature`` (acoustic coefficients
held at ambient, heating still computed); ``linear_acoustics`` (the
quadratic pressure term dropped); ``no_ultrasound`` (acoustics and
heating skipped entirely, transport runs with zero drift enhancement).

Configuration is a strict line-oriented subset of TOML: ``[section]``
headers, ``key = value`` pairs, ``#`` comments, quoted strings, floats,
integers, booleans, and two-component arrays.  Unknown keys are
rejected; ``time.dt`` has no default on purpose.
"""
from dataclasses import dataclass, field, replace
import json
import math
import os
import time

import numpy as np

from . import backend
from .acoustics import (COUPLING_MODES, KERNEL_MODES, Excitation,
                        NewmarkParams, WesterveltStepper)
from .bioheat import PennesStepper
from .errors import ParseError, ValidationError
from .materials import liver_model
from .mesh import build_domain_mesh, load_mesh
from .output import ProbeSeries, axis_slice, write_csv, write_vtk
from .transport import (TransportBoundary, TransportStepper, VelocityModel,
                        mass_integral)

MODES = ("full", "frozen_temperature", "linear_acoustics", "no_ultrasound")

_STEPPER_COUPLING = {"full": "full",
                     "frozen_temperature": "frozen_temperature",
                     "linear_acoustics": "linear"}

PRESETS = ("example1", "example2", "example3")


@dataclass(frozen=True)
class ScenarioConfig:
    dt: float
    steps: int = 100
    alpha: float = 0.8
    mesh_target: float = 0.006
    mesh_sweeps: int = 2
    mesh_file: str = ""
    g0: float = 1e9
    frequency: float = 1e5
    newmark_beta: float = 0.45
    newmark_gamma: float = 0.85
    fixed_point_tol: float = 1e-12
    max_iterations: int = 200
    kernel: str = "abel"
    acoustic_solver_tol: float = 1e-10
    mode: str = "full"
    thermal_solver_tol: float = 1e-10
    transport_enabled: bool = True
    d0: float = 5.0
    k_d: float = 1e-6
    velocity: tuple = (0.0, 0.0)
    inflow: float = 0.01
    outflow: float = 0.0
    c0: float = 0.0
    transport_solver_tol: float = 1e-12
    outdir: str = "out"
    cadence: int = 0
    slice_samples: int = 241
    history_gb: float = 4.0
    name: str = "run"
    compare: str = ""

    def validate(self):
        def need(cond, key, why):
            if not cond:
                raise ValidationError(f"{key}: {why}", field=key)

        need(self.dt > 0.0, "time.dt", "must be positive")
        need(self.steps >= 1, "time.steps", "must be at least 1")
        need(0.0 < self.alpha < 1.0, "time.alpha", "must lie in (0, 1)")
        need(self.mesh_target > 0.0, "mesh.target", "must be positive")
        need(self.mesh_sweeps >= 0, "mesh.sweeps", "must be >= 0")
        need(math.isfinite(self.g0), "acoustics.g0", "must be finite")
        need(self.frequency > 0.0, "acoustics.frequency",
             "must be positive")
        need(0.0 < self.newmark_beta <= 1.0, "acoustics.newmark_beta",
             "must lie in (0, 1]")
        need(0.0 < self.newmark_gamma <= 1.0, "acoustics.newmark_gamma",
             "must lie in (0, 1]")
        need(self.fixed_point_tol > 0.0, "acoustics.fixed_point_tol",
             "must be positive")
        need(self.max_iterations >= 1, "acoustics.max_iterations",
             "must be at least 1")
        need(self.kernel in KERNEL_MODES, "acoustics.kernel",
             f"must be one of {KERNEL_MODES}")
        need(self.acoustic_solver_tol > 0.0, "acoustics.solver_tol",
             "must be positive")
        need(self.mode in MODES, "coupling.mode",
             f"must be one of {MODES}")
        need(self.thermal_solver_tol > 0.0, "thermal.solver_tol",
             "must be positive")
        need(self.d0 >= 0.0, "transport.d0", "must be >= 0")
        need(math.isfinite(self.k_d), "transport.k_d", "must be finite")
        need(len(self.velocity) == 2, "transport.velocity",
             "must have two components")
        need(math.isfinite(self.inflow), "transport.inflow",
             "must be finite")
        need(self.outflow >= 0.0, "transport.outflow", "must be >= 0")
        need(self.c0 >= 0.0, "transport.c0", "must be >= 0")
        need(self.transport_solver_tol > 0.0, "transport.solver_tol",
             "must be positive")
        need(self.cadence >= 0, "output.cadence", "must be >= 0")
        need(self.slice_samples >= 2, "output.slice_samples",
             "must be at least 2")
        need(self.history_gb > 0.0, "limits.history_gb",
             "must be positive")
        if self.compare:
            need(self.compare in MODES, "run.compare",
                 f"must be empty or one of {MODES}")
            need(self.compare != self.mode, "run.compare",
                 "must differ from coupling.mode")
        return self


# configuration key -> (attribute, value kind)
SCHEMA = {
    "mesh.target": ("mesh_target", "float"),
    "mesh.sweeps": ("mesh_sweeps", "int"),
    "mesh.file": ("mesh_file", "str"),
    "time.dt": ("dt", "float"),
    "time.steps": ("steps", "int"),
    "time.alpha": ("alpha", "float"),
    "acoustics.g0": ("g0", "float"),
    "acoustics.frequency": ("frequency", "float"),
    "acoustics.newmark_beta": ("newmark_beta", "float"),
    "acoustics.newmark_gamma": ("newmark_gamma", "float"),
    "acoustics.fixed_point_tol": ("fixed_point_tol", "float"),
    "acoustics.max_iterations": ("max_iterations", "int"),
    "acoustics.kernel": ("kernel", "str"),
    "acoustics.solver_tol": ("acoustic_solver_tol", "float"),
    "coupling.mode": ("mode", "str"),
    "thermal.solver_tol": ("thermal_solver_tol", "float"),
    "transport.enabled": ("transport_enabled", "bool"),
    "transport.d0": ("d0", "float"),
    "transport.k_d": ("k_d", "float"),
    "transport.velocity": ("velocity", "vec2"),
    "transport.inflow": ("inflow", "float"),
    "transport.outflow": ("outflow", "float"),
    "transport.c0": ("c0", "float"),
    "transport.solver_tol": ("transport_solver_tol", "float"),
    "output.directory": ("outdir", "str"),
    "output.cadence": ("cadence", "int"),
    "output.slice_samples": ("slice_samples", "int"),
    "limits.history_gb": ("history_gb", "float"),
    "run.name": ("name", "str"),
    "run.compare": ("compare", "str"),
}

_ATTR_TO_KEY = {attr: key for key, (attr, _) in SCHEMA.items()}


def _strip_comment(line):
    out = []
    quoted = False
    for ch in line:
        if ch == '"':
            quoted = not quoted
        elif ch == '#' and not quoted:
            break
        out.append(ch)
    return "".join(out)


def _parse_scalar(text, kind, where):
    text = text.strip()
    if kind == "float":
        try:
            v = float(text)
        except ValueError:
            raise ParseError(f"expected a number, got {text!r}",
                             line=where) from None
        if not math.isfinite(v):
            raise ParseError(f"number must be finite, got {text!r}",
                             line=where)
        return v
    if kind == "int":
        try:
            return int(text, 10)
        except ValueError:
            raise ParseError(f"expected an integer, got {text!r}",
                             line=where) from None
    if kind == "bool":
        if text == "true":
            return True
        if text == "false":
            return False
        raise ParseError(f"expected true or false, got {text!r}",
                         line=where)
    if kind == "str":
        if len(text) >= 2 and text[0] == '"' and text[-1] == '"' \
                and '"' not in text[1:-1]:
            return text[1:-1]
        raise ParseError(f"expected a quoted string, got {text!r}",
                         line=where)
    if kind == "vec2":
        if text.startswith("[") and text.endswith("]"):
            parts = text[1:-1].split(",")
            if len(parts) == 2:
                return (_parse_scalar(parts[0], "float", where),
                        _parse_scalar(parts[1], "float", where))
        raise ParseError(f"expected [x, y], got {text!r}", line=where)
    raise AssertionError(kind)


def _parse_pairs(text):
    """Yield (full_key, raw_value, line_number) from config text."""
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ParseError("malformed section header", line=lineno)
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", line=lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        if not key:
            raise ParseError("missing key before '='", line=lineno)
        if not val.strip():
            raise ParseError("missing value after '='", line=lineno)
        full = key if "." in key else \
            (f"{section}.{key}" if section else key)
        yield full, val, lineno


def parse_config(text, overrides=()):
    """Parse configuration text plus ``section.key=value`` overrides."""
    fields = {}
    for full, val, lineno in _parse_pairs(text):
        if full not in SCHEMA:
            raise ValidationError(
                f"unknown configuration key {full!r} (line {lineno})",
                field=full)
        attr, kind = SCHEMA[full]
        fields[attr] = _parse_scalar(val, kind, lineno)
    for i, ov in enumerate(overrides):
        if "=" not in ov:
            raise ParseError("override must look like section.key=value",
                             line=i + 1)
        key, _, val = ov.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ValidationError(
                f"unknown configuration key {key!r} (override "
                f"{i + 1})", field=key)
        attr, kind = SCHEMA[key]
        fields[attr] = _parse_scalar(val, kind, i + 1)
    if "dt" not in fields:
        raise ValidationError("time.dt is required", field="time.dt")
    return ScenarioConfig(**fields).validate()


def config_text(cfg):
    """Serialize a configuration in schema order (parses back equal)."""
    lines = []
    section = None
    for key, (attr, kind) in SCHEMA.items():
        sec, _, sub = key.partition(".")
        if sec != section:
            if section is not None:
                lines.append("")
            lines.append(f"[{sec}]")
            section = sec
        v = getattr(cfg, attr)
        if kind == "float":
            lines.append(f"{sub} = {v!r}")
        elif kind == "int":
            lines.append(f"{sub} = {v}")
        elif kind == "bool":
            lines.append(f"{sub} = {'true' if v else 'false'}")
        elif kind == "str":
            lines.append(f'{sub} = "{v}"')
        elif kind == "vec2":
            lines.append(f"{sub} = [{v[0]!r}, {v[1]!r}]")
    return "\n".join(lines) + "\n"


def preset(name):
    """Ready-made configurations for the three demonstration runs."""
    if name == "example1":
        return ScenarioConfig(
            dt=6.67e-8, steps=1500, alpha=0.8, mesh_target=0.003,
            g0=1e9, frequency=1e5, mode="full",
            d0=5.0, k_d=1e-6, velocity=(0.0, 0.0), inflow=0.01,
            outflow=0.0, c0=0.0, cadence=250,
            name="example1", outdir="out_example1")
    if name == "example2":
        return replace(preset("example1"), name="example2",
                       outdir="out_example2",
                       compare="frozen_temperature")
    if name == "example3":
        return ScenarioConfig(
            dt=1e-6, steps=500, alpha=0.8, mesh_target=0.004,
            g0=1e9, frequency=1e5, mode="full",
            d0=5.0, k_d=1e-6, velocity=(0.0, 10.0), inflow=5e-3,
            outflow=100.0, c0=1e-4, cadence=100,
            name="example3", outdir="out_example3",
            compare="no_ultrasound")
    raise ValidationError(f"unknown preset {name!r}; choose from "
                          f"{PRESETS}", field="preset")


@dataclass
class RunReport:
    name: str
    mode: str
    backend: str
    mesh_vertices: int
    mesh_triangles: int
    steps: int
    dt: float
    wall_seconds: float
    fp_iterations_max: int
    fp_iterations_mean: float
    solver_iterations_total: int
    p_max: float
    p_min: float
    theta_max: float
    mass_whole: float
    mass_focal: float
    files: list = field(default_factory=list)

    def to_dict(self):
        return dict(vars(self))

    def save(self, path):
        with open(path, "w", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


class CoupledSimulation:
    """One mesh, one configuration, the three steppers, and the probes."""

    def __init__(self, config, mesh=None):
        config.validate()
        self.config = config
        if mesh is not None:
            self.mesh = mesh
        elif config.mesh_file:
            self.mesh = load_mesh(config.mesh_file)
        else:
            self.mesh = build_domain_mesh(config.mesh_target,
                                          smoothing_sweeps=config.
                                          mesh_sweeps)
        self.model = liver_model(config.frequency)
        self.wave_on = config.mode != "no_ultrasound"
        self.wave = None
        self.heat = None
        self.trans = None
        if self.wave_on:
            params = NewmarkParams(beta=config.newmark_beta,
                                   gamma=config.newmark_gamma,
                                   tol=config.fixed_point_tol,
                                   max_iters=config.max_iterations)
            self.wave = WesterveltStepper(
                self.mesh, self.model,
                Excitation(config.g0, 2.0 * math.pi * config.frequency),
                config.dt, alpha=config.alpha, params=params,
                kernel=config.kernel,
                coupling=_STEPPER_COUPLING[config.mode],
                steps_hint=config.steps,
                history_limit=int(config.history_gb * (1 << 30)),
                solver_tol=config.acoustic_solver_tol)
            self.wave.set_initial()
            self.heat = PennesStepper(self.mesh, self.model, config.dt,
                                      solver_tol=config.thermal_solver_tol)
            self.heat.set_initial()
        if config.transport_enabled:
            self.trans = TransportStepper(
                self.mesh, config.dt,
                VelocityModel(v0=tuple(config.velocity), k_d=config.k_d,
                              d0=config.d0),
                TransportBoundary(inflow=config.inflow,
                                  outflow=config.outflow),
                solver_tol=config.transport_solver_tol)
            self.trans.set_initial(config.c0)
        self.probes = ProbeSeries(("t", "p_max", "p_min", "theta_max",
                                   "mass_whole", "mass_focal",
                                   "fp_iterations"))
        self._zeros = np.zeros(self.mesh.num_vertices)

    @property
    def t(self):
        if self.wave_on:
            return self.wave.state.t
        if self.trans is not None:
            return self.trans.state.t
        return 0.0

    def fields(self):
        out = {}
        if self.wave_on:
            out["p"] = self.wave.state.p
            out["theta"] = self.heat.state.theta
        else:
            out["p"] = self._zeros
            out["theta"] = self._zeros
        if self.trans is not None:
            out["c"] = self.trans.state.c
        return out

    def step(self):
        if self.wave_on:
            if self.heat.state.step != self.wave.state.step:
                raise ValidationError(
                    "temperature must lag the pressure by exactly one "
                    "step", field="coupling")
            theta_prev = self.heat.state.theta
            ast = self.wave.step(theta_prev)
            self.heat.step(ast.p_t)
            p = ast.p
            t = ast.t
            fp_iters = self.wave.stats[-1].iterations
        else:
            p = None
            t = (self.trans.state.t + self.config.dt
                 if self.trans is not None else 0.0)
            fp_iters = 0
        if self.trans is not None:
            cst = self.trans.step(p)
            t = cst.t
        f = self.fields()
        c = f.get("c", self._zeros)
        self.probes.record(
            t=t,
            p_max=float(f["p"].max()),
            p_min=float(f["p"].min()),
            theta_max=float(f["theta"].max()),
            mass_whole=mass_integral(self.mesh, c),
            mass_focal=mass_integral(self.mesh, c, region="focal"),
            fp_iterations=fp_iters)

    def _write_fields(self, outdir, step, files):
        fname = f"fields_{step:06d}.vtk"
        write_vtk(os.path.join(outdir, fname), self.mesh, self.fields())
        files.append(fname)

    def run(self, progress=None):
        cfg = self.config
        outdir = cfg.outdir
        os.makedirs(outdir, exist_ok=True)
        files = []
        start = time.perf_counter()
        for n in range(1, cfg.steps + 1):
            self.step()
            if cfg.cadence and n % cfg.cadence == 0 and n != cfg.steps:
                self._write_fields(outdir, n, files)
            if progress is not None:
                progress(n, cfg.steps)
        wall = time.perf_counter() - start
        self._write_fields(outdir, cfg.steps, files)
        self.probes.write(os.path.join(outdir, "probes.csv"))
        files.append("probes.csv")
        ys, vals = axis_slice(self.mesh, self.fields(),
                              n=cfg.slice_samples)
        cols = {"x2": ys}
        cols.update(vals)
        write_csv(os.path.join(outdir, "slice.csv"), cols)
        files.append("slice.csv")
        if self.wave_on:
            stats = self.wave.stats
            fp_max = max(s.iterations for s in stats)
            fp_mean = sum(s.iterations for s in stats) / len(stats)
            solver_total = sum(s.solver_iterations for s in stats)
        else:
            fp_max, fp_mean, solver_total = 0, 0.0, 0
        f = self.fields()
        c = f.get("c", self._zeros)
        report = RunReport(
            name=cfg.name, mode=cfg.mode, backend=backend.backend_name(),
            mesh_vertices=self.mesh.num_vertices,
            mesh_triangles=self.mesh.num_triangles,
            steps=cfg.steps, dt=cfg.dt, wall_seconds=wall,
            fp_iterations_max=fp_max, fp_iterations_mean=fp_mean,
            solver_iterations_total=solver_total,
            p_max=float(f["p"].max()), p_min=float(f["p"].min()),
            theta_max=float(f["theta"].max()),
            mass_whole=mass_integral(self.mesh, c),
            mass_focal=mass_integral(self.mesh, c, region="focal"),
            files=files)
        report.save(os.path.join(outdir, "report.json"))
        return report


def run_scenario(config, *, mesh=None, progress=None):
    """Run a configuration and, when requested, its comparison twin on
    the same mesh.  Returns {label: RunReport}."""
    sim = CoupledSimulation(config, mesh=mesh)
    reports = {"main": sim.run(progress=progress)}
    if config.compare:
        twin = replace(config, mode=config.compare, compare="",
                       name=f"{config.name}_{config.compare}",
                       outdir=os.path.join(config.outdir,
                                           config.compare))
        sim2 = CoupledSimulation(twin, mesh=sim.mesh)
        reports[config.compare] = sim2.run(progress=progress)
    return reports
