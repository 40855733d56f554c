"""Experiment configuration, execution, sweeps and plot-data export.

Configurations are INI files::

    [experiment]
    kind = classical          ; classical | quantum | oracle | oracle-compare
                              ; classical-limit-sweep | complexity-scan
    seed = 0
    arclength = 1.0
    samples = 201

    [system]
    masses = 1 1 1
    softening = 0.0

    [initial]
    preset = generic-expanding ; a classical preset, or "random" (drawn from seed)

    [quantum]
    wavefunction = Y20-band
    lmax = 32
    epsilon = 1.0
    ktilde = default          ; default | guidance
    guided = false            ; start with p_a = S_,a at Q

    [tolerances]
    rtol = 1e-9
    atol = 1e-12

    [sweep]
    parameter = quantum.epsilon
    values = 0.1 0.01 0.001

    [output]
    directory = runs/example

The configuration hash covers every section except ``output``.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, presets
from .errors import ConfigError, UnknownPresetError

KINDS = ("classical", "quantum", "oracle", "oracle-compare", "classical-limit-sweep", "complexity-scan")
OUTPUT_ENV = "PSDLAB_OUT"

DEFAULTS = {
    "experiment": {"kind": "classical", "seed": "0", "arclength": "1.0", "samples": "201", "time_horizon": "0"},
    "system": {"masses": "1 1 1", "softening": "0.0"},
    "initial": {"preset": "generic-expanding"},
    "quantum": {"wavefunction": "Y20-band", "lmax": "32", "epsilon": "1.0", "ktilde": "default",
                "guided": "false"},
    "tolerances": {"rtol": "1e-9", "atol": "1e-12"},
    "sweep": {},
    "output": {},
}


@dataclass
class ExperimentConfig:
    sections: dict

    @classmethod
    def from_text(cls, text):
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError([f"unreadable configuration: {exc}"]) from None
        sections = {name: dict(values) for name, values in DEFAULTS.items()}
        unknown = [s for s in parser.sections() if s not in DEFAULTS]
        if unknown:
            raise ConfigError([f"unknown section [{s}]" for s in unknown])
        for name in parser.sections():
            sections[name].update(parser[name])
        cfg = cls(sections)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path):
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from None
        return cls.from_text(text)

    def to_text(self):
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for name in DEFAULTS:
            parser[name] = dict(sorted(self.sections.get(name, {}).items()))
        import io

        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def get(self, section, key):
        return self.sections[section][key]

    def with_value(self, dotted, value):
        section, key = dotted.split(".", 1)
        sections = {k: dict(v) for k, v in self.sections.items()}
        sections.setdefault(section, {})[key] = str(value)
        cfg = ExperimentConfig(sections)
        cfg.validate()
        return cfg

    # typed accessors
    @property
    def kind(self):
        return self.sections["experiment"]["kind"]

    @property
    def seed(self):
        return int(self.sections["experiment"]["seed"])

    @property
    def arclength(self):
        return float(self.sections["experiment"]["arclength"])

    @property
    def samples(self):
        return int(self.sections["experiment"]["samples"])

    @property
    def masses(self):
        return tuple(float(x) for x in self.sections["system"]["masses"].split())

    @property
    def softening(self):
        return float(self.sections["system"]["softening"])

    def float_of(self, section, key):
        return float(self.sections[section][key])

    def config_hash(self):
        payload = {k: dict(sorted(v.items())) for k, v in sorted(self.sections.items()) if k != "output"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def validate(self):
        problems = []
        s = self.sections
        if s["experiment"]["kind"] not in KINDS:
            problems.append(f"experiment.kind must be one of {', '.join(KINDS)}")
        for key, cast, lo in (("seed", int, 0), ("samples", int, 1), ("arclength", float, 0.0),
                              ("time_horizon", float, 0.0)):
            try:
                if cast(s["experiment"][key]) < lo:
                    problems.append(f"experiment.{key} must be >= {lo}")
            except ValueError:
                problems.append(f"experiment.{key} is not a valid {cast.__name__}")
        try:
            masses = [float(x) for x in s["system"]["masses"].split()]
            if len(masses) != 3 or min(masses) <= 0:
                problems.append("system.masses must list three positive masses")
        except ValueError:
            problems.append("system.masses must be numbers")
        for key in ("softening",):
            try:
                if float(s["system"][key]) < 0:
                    problems.append(f"system.{key} must be non-negative")
            except ValueError:
                problems.append(f"system.{key} is not a number")
        for key in ("rtol", "atol"):
            try:
                if not float(s["tolerances"][key]) > 0:
                    problems.append(f"tolerances.{key} must be positive")
            except ValueError:
                problems.append(f"tolerances.{key} is not a number")
        try:
            lmax = int(s["quantum"]["lmax"])
            if not 4 <= lmax <= 96:
                problems.append("quantum.lmax must lie in [4, 96]")
        except ValueError:
            problems.append("quantum.lmax is not an integer")
        try:
            float(s["quantum"]["epsilon"])
        except ValueError:
            problems.append("quantum.epsilon is not a number")
        if s["quantum"]["ktilde"] not in ("default", "guidance"):
            problems.append("quantum.ktilde must be default or guidance")
        if s["quantum"]["guided"] not in ("true", "false"):
            problems.append("quantum.guided must be true or false")
        problems += _preset_problems(s["initial"]["preset"], "classical-IC", allow_random=True)
        if s["experiment"]["kind"] in ("quantum", "classical-limit-sweep"):
            problems += _preset_problems(s["quantum"]["wavefunction"], "wavefunction")
        if s["sweep"]:
            if "parameter" not in s["sweep"] or "values" not in s["sweep"]:
                problems.append("sweep needs parameter and values")
            elif not s["sweep"]["values"].split():
                problems.append("sweep.values must not be empty")
        if problems:
            raise ConfigError(problems)


def _preset_problems(name, kind, allow_random=False):
    if allow_random and name == "random":
        return []
    try:
        preset = presets.load(name)
    except UnknownPresetError as exc:
        return [str(exc)]
    if preset.kind != kind:
        return [f"preset {name!r} is a {preset.kind}, expected {kind}"]
    return []


# --------------------------------------------------------------------------- scenario pieces


def initial_newtonian(cfg: ExperimentConfig):
    from .oracle import random_initial_data

    name = cfg.sections["initial"]["preset"]
    if name == "random":
        rng = np.random.default_rng(cfg.seed)
        pos, vel = random_initial_data(rng, cfg.masses)
        return pos, vel, np.asarray(cfg.masses)
    return presets.newtonian_data(presets.load(name))


def initial_curve_state(cfg: ExperimentConfig):
    """Curve state of the configured initial data, consistent with the configured potential.

    Newtonian data fix kappa for the bare potential.  With softening the
    signed scale root w is kept and kappa = -2 V_soft / (1 + w^2) is used, so
    the softened run starts on the same zero-energy branch.
    """
    from .classical import CurveState, ShapePotential, root_argument
    from .oracle import curve_state_from_newton

    pos, vel, masses = initial_newtonian(cfg)
    state = curve_state_from_newton(pos, vel, masses)
    if cfg.softening > 0:
        bare = ShapePotential(masses).value(state.point)
        w2 = max(root_argument(state.kappa, bare), 0.0)
        soft = ShapePotential(masses, cfg.softening).value(state.point)
        state = CurveState(state.q, state.phi, float(-2.0 * soft / (1.0 + w2)), state.branch)
    return state, masses


def _options(cfg):
    from .classical import IntegrationOptions

    return IntegrationOptions(rtol=cfg.float_of("tolerances", "rtol"), atol=cfg.float_of("tolerances", "atol"),
                              samples=cfg.samples)


def _quantum_state(cfg, curve_state):
    from .quantum import QuantumCurveState, guided_state
    from .spectral import SphereGrid

    grid = SphereGrid(int(cfg.sections["quantum"]["lmax"]))
    coeffs = presets.wavefunction_coefficients(presets.load(cfg.sections["quantum"]["wavefunction"]), grid)
    if cfg.sections["quantum"]["guided"] == "true":
        return guided_state(curve_state.q, coeffs, grid, curve_state.branch)
    return QuantumCurveState.from_coefficients(curve_state.q, curve_state.phi, curve_state.kappa, coeffs, grid,
                                               curve_state.branch)


def _write_table(path, chash, columns, units, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_hash={chash}\n# columns: {' '.join(columns)}\n# units: {' | '.join(units)}\n")
        for row in rows:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


DIAGNOSTIC_COLUMNS = ("energy", "t", "scale", "norm", "delta", "vq_sup")


def write_diagnostics(path, record, chash):
    """Per-sample diagnostics: s, com and whichever monitored series the record carries."""
    from .trajectory import _unit_for

    names = ["s", "com"] + [c for c in DIAGNOSTIC_COLUMNS if c in record.extra]
    data = [record.s, record.com] + [record.extra[c] for c in names[2:]]
    _write_table(path, chash, names, [_unit_for(n) for n in names], zip(*data))


def _persist(out_dir, record, chash, name="trajectory.txt"):
    from .trajectory import write_trajectory

    write_trajectory(out_dir / name, record, chash)
    diag = name.replace(".txt", ".diagnostics.tsv")
    write_diagnostics(out_dir / diag, record, chash)
    return [name, diag]


def _summary(record, extra=None):
    from .complexity import arrow_of_time
    from .errors import InsufficientDataError

    out = {"samples": int(len(record)), "status": record.status}
    if len(record):
        out["final_com"] = float(record.com[-1])
        out["final_s"] = float(record.s[-1])
    try:
        out["arrow"] = arrow_of_time(record).orientation
    except InsufficientDataError:
        out["arrow"] = "insufficient-data"
    if "delta" in record.extra:
        out["max_delta"] = float(np.max(record.extra["delta"]))
    if "norm" in record.extra and len(record) > 1:
        span = max(record.s[-1] - record.s[0], 1e-300)
        out["norm_drift"] = float(np.max(np.abs(record.extra["norm"] - record.extra["norm"][0])) / span)
    if extra:
        out.update(extra)
    return out


def _run_classical(cfg, out_dir, chash):
    from .classical import ShapePotential, integrate_classical

    state, masses = initial_curve_state(cfg)
    pot = ShapePotential(masses, cfg.softening)
    record = integrate_classical(state, pot, cfg.arclength, _options(cfg))
    files = _persist(out_dir, record, chash)
    return record.status, _summary(record), files, record.message


def _run_quantum(cfg, out_dir, chash):
    from .classical import CurveState, ShapePotential, integrate_classical
    from .quantum import integrate_quantum
    from .shape_space import geodesic_distance

    state, masses = initial_curve_state(cfg)
    pot = ShapePotential(masses, cfg.softening)
    qstate = _quantum_state(cfg, state)
    opts = _options(cfg)
    record = integrate_quantum(qstate, pot, cfg.arclength, opts,
                               epsilon=cfg.float_of("quantum", "epsilon"), ktilde=cfg.sections["quantum"]["ktilde"])
    files = _persist(out_dir, record, chash)
    extra = {}
    try:
        # classical reference from the same curve start (differs from the data when guided)
        start = CurveState(qstate.Q, qstate.phi, qstate.kappa, qstate.branch)
        classical = integrate_classical(start, pot, cfg.arclength, opts)
        n = min(len(record), len(classical))
        extra["classical_deviation"] = float(np.max(geodesic_distance(record.points[:n], classical.points[:n])))
    except Exception as exc:  # the comparison is informational only
        extra["classical_deviation_error"] = f"{type(exc).__name__}: {exc}"
    return record.status, _summary(record, extra), files, record.message


def _run_oracle(cfg, out_dir, chash):
    from .complexity import detect_kepler_pairs
    from .oracle import newtonian_oracle
    from .shape_space import Configuration

    pos, vel, masses = initial_newtonian(cfg)
    horizon = cfg.float_of("experiment", "time_horizon")
    kwargs = {"t_span": horizon} if horizon > 0 else {"arclen": cfg.arclength}
    res = newtonian_oracle(Configuration(pos, masses), vel, samples=cfg.samples, **kwargs)
    files = _persist(out_dir, res.record, chash)
    pairs = [
        {"pair": list(p.pair), "semi_major_axis": p.semi_major_axis, "eccentricity": p.eccentricity,
         "isolation": p.isolation, "window": list(p.window)}
        for p in detect_kepler_pairs(res.record)
    ]
    summary = _summary(res.record, {"energy_drift": res.energy_drift, "kepler_pairs": pairs})
    return res.status, summary, files, res.message


def _run_compare(cfg, out_dir, chash):
    from .classical import ShapePotential, integrate_classical
    from .oracle import curve_state_from_newton, newtonian_oracle
    from .shape_space import Configuration, geodesic_distance

    pos, vel, masses = initial_newtonian(cfg)
    res = newtonian_oracle(Configuration(pos, masses), vel, arclen=cfg.arclength, samples=cfg.samples)
    state = curve_state_from_newton(pos, vel, masses)
    record = integrate_classical(state, ShapePotential(masses), cfg.arclength, _options(cfg))
    n = min(len(record), len(res.record))
    sup = float(np.max(geodesic_distance(record.points[:n], res.record.points[:n])))
    kappa_err = float(np.max(np.abs(record.kappa[:n] / res.record.kappa[:n] - 1.0)))
    files = _persist(out_dir, record, chash) + _persist(out_dir, res.record, chash, "oracle.txt")
    status = "complete" if record.status == res.status == "complete" else "partial"
    summary = _summary(record, {"sup_error": sup, "kappa_relative_error": kappa_err,
                                "oracle_energy_drift": res.energy_drift})
    _write_json(out_dir / "report.json", {"sup_error": sup, "kappa_relative_error": kappa_err, "samples": n})
    return status, summary, files + ["report.json"], record.message or res.message


def classical_limit_errors(cfg, epsilons):
    """Sup deviation of quantum runs from the classical run for each epsilon."""
    from .classical import ShapePotential, integrate_classical
    from .quantum import integrate_quantum
    from .shape_space import geodesic_distance

    state, masses = initial_curve_state(cfg)
    pot = ShapePotential(masses, cfg.softening)
    opts = _options(cfg)
    classical = integrate_classical(state, pot, cfg.arclength, opts)
    qstate = _quantum_state(cfg, state)
    rows = []
    for eps in epsilons:
        rec = integrate_quantum(qstate, pot, cfg.arclength, opts, epsilon=eps, ktilde="default", record_sup=False)
        n = min(len(rec), len(classical))
        rows.append((float(eps), float(np.max(geodesic_distance(rec.points[:n], classical.points[:n])))))
    return rows


def measured_orders(rows):
    orders = []
    for (e1, d1), (e2, d2) in zip(rows, rows[1:]):
        orders.append(float(np.log(d1 / d2) / np.log(e1 / e2)))
    return orders


def _run_limit_sweep(cfg, out_dir, chash):
    values = cfg.sections["sweep"].get("values", "0.1 0.01 0.001")
    rows = classical_limit_errors(cfg, [float(v) for v in values.split()])
    orders = measured_orders(rows)
    _write_table(out_dir / "classical_limit.tsv", chash, ["epsilon", "sup_deviation"],
                 ["dimensionless", "shape distance"], rows)
    summary = {"epsilon": [r[0] for r in rows], "deviation": [r[1] for r in rows], "orders": orders}
    return "complete", summary, ["classical_limit.tsv"], ""


def _run_complexity_scan(cfg, out_dir, chash):
    from .complexity import complexity_on_sphere
    from .spectral import SphereGrid

    grid = SphereGrid(int(cfg.sections["quantum"]["lmax"]))
    pts = grid.points.reshape(-1, 3)
    com = complexity_on_sphere(pts, cfg.masses)
    rows = (tuple(p) + (c,) for p, c in zip(pts * 0.5, com))
    _write_table(out_dir / "complexity_scan.tsv", chash, ["x", "y", "z", "com"],
                 ["embedding", "embedding", "embedding", "dimensionless"], rows)
    k = int(np.argmin(com))
    summary = {"min_com": float(com[k]), "argmin": [float(x) for x in pts[k]]}
    return "complete", summary, ["complexity_scan.tsv"], ""


RUNNERS = {
    "classical": _run_classical,
    "quantum": _run_quantum,
    "oracle": _run_oracle,
    "oracle-compare": _run_compare,
    "classical-limit-sweep": _run_limit_sweep,
    "complexity-scan": _run_complexity_scan,
}


# --------------------------------------------------------------------------- run / sweep


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    kind: str
    status: str
    summary: dict
    files: list
    message: str = ""
    timestamps: dict = field(default_factory=dict)

    def to_json(self):
        """Deterministic part of the manifest (timestamps live in timestamps.json)."""
        return {
            "config_hash": self.config_hash,
            "code_version": self.code_version,
            "kind": self.kind,
            "status": self.status,
            "summary": self.summary,
            "files": self.files,
            "message": self.message,
            "timestamps_file": "timestamps.json",
        }


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def output_directory(cfg, override=None):
    if override:
        return Path(override)
    if "directory" in cfg.sections["output"]:
        return Path(cfg.sections["output"]["directory"])
    return Path(os.environ.get(OUTPUT_ENV, "psdlab-runs")) / cfg.config_hash()[:12]


def run(cfg: ExperimentConfig, out_dir=None) -> RunManifest:
    """Execute one experiment and write its artifacts and manifest."""
    out = output_directory(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = cfg.config_hash()
    (out / "config.ini").write_text(cfg.to_text(), encoding="utf-8")
    started = time.time()
    try:
        status, summary, files, message = RUNNERS[cfg.kind](cfg, out, chash)
    except Exception as exc:  # surfaced in the manifest; partial artifacts stay on disk
        status, summary, files, message = "failure", {}, [], f"{type(exc).__name__}: {exc}"
    finished = time.time()
    manifest = RunManifest(chash, __version__, cfg.kind, status, summary, ["config.ini"] + files, message,
                           {"started": started, "finished": finished})
    _write_json(out / "manifest.json", manifest.to_json())
    _write_json(out / "timestamps.json", manifest.timestamps)
    return manifest


def _sweep_point(args):
    text, out_dir = args
    try:
        cfg = ExperimentConfig.from_text(text)
        return run(cfg, out_dir).to_json()
    except Exception as exc:
        return {"status": "failure", "message": f"{type(exc).__name__}: {exc}", "summary": {}}


def sweep(cfg: ExperimentConfig, out_dir=None, threads=1, parameter=None, values=None):
    """Run the configuration at every grid value; failures are isolated per point."""
    parameter = parameter or cfg.sections["sweep"].get("parameter")
    values = values if values is not None else cfg.sections["sweep"].get("values", "").split()
    if not parameter or not values:
        raise ConfigError(["sweep needs a parameter and a non-empty list of values"])
    out = output_directory(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs, problems = [], []
    for k, v in enumerate(values):
        try:
            point = cfg.with_value(parameter, v)
            point.sections["sweep"] = {}
            jobs.append((point.to_text(), str(out / f"point-{k:03d}")))
        except ConfigError as exc:
            jobs.append((None, str(out / f"point-{k:03d}")))
            problems.append((k, str(exc)))
    results = [None] * len(jobs)
    runnable = [(k, j) for k, j in enumerate(jobs) if j[0] is not None]
    if threads > 1 and len(runnable) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for (k, _), res in zip(runnable, pool.map(_sweep_point, [j for _, j in runnable])):
                results[k] = res
    else:
        for k, j in runnable:
            results[k] = _sweep_point(j)
    for k, msg in problems:
        results[k] = {"status": "failure", "message": f"ConfigError: {msg}", "summary": {}}
    table = []
    for v, res in zip(values, results):
        table.append({"value": v, "status": res["status"], "message": res.get("message", ""),
                      "summary": res.get("summary", {})})
    done = sum(1 for r in table if r["status"] == "complete")
    aggregate = {"parameter": parameter, "points": table, "completed": done, "total": len(table)}
    _write_json(out / "sweep.json", aggregate)
    with open(out / "sweep.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# parameter={parameter}\n# columns: value status final_com arrow classical_deviation\n")
        for r in table:
            summ = r["summary"]
            fh.write(f"{r['value']} {r['status']} {summ.get('final_com', float('nan'))!r} "
                     f"{summ.get('arrow', 'none')} {summ.get('classical_deviation', float('nan'))!r}\n")
    return aggregate


# --------------------------------------------------------------------------- export

EXPORT_KINDS = ("sphere-path", "complexity", "guidance", "time")


def export_plot_data(paths, kind, out_dir=None):
    """Write column tables for plotting; returns the written paths."""
    from .ephemeris import reconstruct_time
    from .trajectory import TrajectoryFormatError, _unit_for, read_header, read_trajectory

    if kind not in EXPORT_KINDS:
        raise ConfigError([f"export kind must be one of {', '.join(EXPORT_KINDS)}"])
    written, problems = [], []
    for path in paths:
        path = Path(path)
        try:
            header = read_header(path)
            record = read_trajectory(path)
        except (TrajectoryFormatError, OSError) as exc:
            problems.extend(getattr(exc, "problems", [f"{path}: {exc}"]))
            continue
        if kind == "sphere-path":
            cols, data = ["s", "x", "y", "z"], [record.s] + [0.5 * record.points[:, k] for k in range(3)]
        elif kind == "complexity":
            cols, data = ["s", "com"], [record.s, record.com]
        elif kind == "guidance":
            if "delta" not in record.extra:
                problems.append(f"{path}: no guidance-residual column (not a quantum trajectory)")
                continue
            cols, data = ["s", "delta"], [record.s, record.extra["delta"]]
        else:
            if "t" in record.extra:
                t = record.extra["t"]
            elif len(record):
                import warnings

                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    t = reconstruct_time(record).time
            else:
                t = record.s
            cols, data = ["s", "t"], [record.s, t]
        target_dir = Path(out_dir) if out_dir else path.parent
        target_dir.mkdir(parents=True, exist_ok=True)
        target = target_dir / f"{path.stem}.{kind}.tsv"
        units = ["embedding" if c in "xyz" else _unit_for(c) for c in cols]
        _write_table(target, header.get("config_hash"), cols, units, zip(*data))
        written.append(target)
    if problems:
        raise ConfigError(problems)
    return written
