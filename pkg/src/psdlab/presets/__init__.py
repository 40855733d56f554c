"""Named initial conditions, wave functions and analytic references.

Presets are INI files in ``presets/data``.  Payload values are written as

    number   0.5
    vector   1.0 1.0 1.0
    matrix   0.0 0.0, 1.0 0.0, 0.5 0.866   (rows separated by commas)
    text     anything that is not numeric
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..errors import ConfigError, UnknownPresetError

KINDS = ("classical-IC", "wavefunction", "analytic-reference")


def _parse_value(text):
    text = text.strip()
    if "," in text:
        try:
            return [[float(x) for x in row.split()] for row in text.split(",")]
        except ValueError:
            return text
    parts = text.split()
    try:
        nums = [float(x) for x in parts]
    except ValueError:
        return text
    if len(nums) == 1:
        return nums[0]
    return nums


def _format_value(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, float, np.floating)):
        return repr(float(value))
    if value and isinstance(value[0], (list, tuple, np.ndarray)):
        return ", ".join(" ".join(repr(float(x)) for x in row) for row in value)
    return " ".join(repr(float(x)) for x in value)


@dataclass(frozen=True)
class Preset:
    name: str
    kind: str
    payload: dict
    doc: str = ""
    origin: str = ""

    def to_text(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        parser["preset"] = {"name": self.name, "kind": self.kind, "doc": self.doc, "origin": self.origin}
        parser["payload"] = {k: _format_value(v) for k, v in self.payload.items()}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text) -> "Preset":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        parser.read_string(text)
        head = parser["preset"]
        payload = {k: _parse_value(v) for k, v in parser["payload"].items()} if parser.has_section("payload") else {}
        preset = cls(head["name"], head["kind"], payload, head.get("doc", ""), head.get("origin", ""))
        preset.validate()
        return preset

    def validate(self):
        problems = []
        if self.kind not in KINDS:
            problems.append(f"{self.name}: unknown kind {self.kind!r}")
        p = self.payload
        if self.kind == "classical-IC":
            masses = np.atleast_1d(p.get("masses", []))
            pos = np.asarray(p.get("positions", []), dtype=float)
            if masses.size < 3 or np.any(masses <= 0):
                problems.append(f"{self.name}: needs three or more positive masses")
            if pos.shape != (masses.size, 2):
                problems.append(f"{self.name}: positions must be planar, one row per mass")
            if "velocities" in p and np.shape(p["velocities"]) != pos.shape:
                problems.append(f"{self.name}: velocities must match positions")
            if p.get("normalize", "none") not in ("none", "zero-energy", "rigid-rotation"):
                problems.append(f"{self.name}: unknown normalization {p.get('normalize')!r}")
        elif self.kind == "wavefunction":
            if p.get("type") not in ("band", "com-gaussian"):
                problems.append(f"{self.name}: unknown wave-function type {p.get('type')!r}")
        elif self.kind == "analytic-reference":
            if not (isinstance(p.get("tolerance"), float) and p["tolerance"] > 0):
                problems.append(f"{self.name}: analytic references need a positive tolerance")
            if "expected" not in p:
                problems.append(f"{self.name}: analytic references need an expected value")
        if problems:
            raise ConfigError(problems)


def _data_dir():
    return resources.files(__name__).joinpath("data")


def available():
    return sorted(f.name[:-4] for f in _data_dir().iterdir() if f.name.endswith(".ini"))


def load(name) -> Preset:
    names = available()
    if name not in names:
        raise UnknownPresetError(name, names)
    return Preset.from_text(_data_dir().joinpath(name + ".ini").read_text(encoding="utf-8"))


# --------------------------------------------------------------------------- builders


def newtonian_data(preset: Preset):
    """(positions, velocities, masses) of a classical preset after its normalization."""
    from ..oracle import zero_energy_data

    if preset.kind != "classical-IC":
        raise ValueError(f"{preset.name} is not a classical initial condition")
    p = preset.payload
    masses = np.asarray(p["masses"], dtype=float)
    pos = np.asarray(p["positions"], dtype=float)
    pos = pos - masses @ pos / masses.sum()
    mode = p.get("normalize", "none")
    if mode == "rigid-rotation":
        omega = float(p["angular_velocity"])
        vel = omega * np.stack([-pos[:, 1], pos[:, 0]], axis=-1)
    else:
        vel = np.asarray(p.get("velocities", np.zeros_like(pos)), dtype=float)
        vel = vel + float(p.get("dilation", 0.0)) * pos
        vel = vel - masses @ vel / masses.sum()  # centre-of-mass frame
    if mode == "zero-energy":
        pos, vel = zero_energy_data(pos, vel, masses, positive_dilatation=False, remove_rotation=False)
    return pos, vel, masses


def wavefunction_coefficients(preset: Preset, grid):
    """Normalized spherical-harmonic coefficients of a wave-function preset on ``grid``."""
    from ..complexity import complexity_on_sphere
    from ..quantum import normalize_coefficients
    from ..spectral import real_harmonic_coefficients

    if preset.kind != "wavefunction":
        raise ValueError(f"{preset.name} is not a wave function")
    p = preset.payload
    phase_x = float(p.get("phase_x", 0.0))
    if p["type"] == "band":
        # exact coefficients: Y_00 = 1 / sqrt(4 pi)
        coeffs = np.zeros(grid.mask.shape, dtype=complex)
        coeffs[0, grid.lmax] = float(p.get("constant", 0.0)) * np.sqrt(4.0 * np.pi)
        rows = p.get("harmonics", [])
        if rows and not isinstance(rows[0], list):
            rows = [rows]
        for l, m, value in rows:
            coeffs = coeffs + value * real_harmonic_coefficients(grid.lmax, int(l), int(m))
        if phase_x == 0.0:
            return normalize_coefficients(coeffs, grid)
        amp = np.real(grid.synthesise(coeffs))
    else:
        com = complexity_on_sphere(grid.points.reshape(-1, 3), (1.0, 1.0, 1.0)).reshape(grid.nlat, grid.nlon)
        amp = p["base"] + p["amplitude"] * np.exp(-(((com - p["centre"]) / p["width"]) ** 2))
    phase = phase_x * grid.points[..., 0]
    return normalize_coefficients(grid.analyse(amp * np.exp(1j * phase)), grid)


def verify_reference(preset: Preset):
    """Evaluate an analytic reference directly; returns (value, expected, within tolerance)."""
    p = preset.payload
    if preset.name == "equilateral-complexity":
        from ..complexity import complexity
        from ..shape_space import Configuration

        side = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]])
        value = complexity(Configuration(side, p["masses"])).com
    elif preset.name == "lb-eigenvalue":
        from ..spectral import SphereGrid, laplace_beltrami, spherical_harmonic_field

        grid = SphereGrid()
        f = spherical_harmonic_field(grid, int(p["degree"]), 0)
        value = laplace_beltrami(f).inner(f) / f.inner(f)
    elif preset.name == "kepler-period":
        value = measure_kepler_period(p["masses"], p["semi_major_axis"], p["eccentricity"], p["distance"])
    else:
        raise ValueError(f"no evaluation rule for {preset.name}")
    expected = float(p["expected"])
    return float(value), expected, abs(value - expected) <= p["tolerance"] * max(1.0, abs(expected))


def measure_kepler_period(masses, a, e, distance):
    """Period of a binary (bodies 0, 1) released at pericentre with body 2 far away.

    Integrates Newtonian gravity and times the return of the relative vector
    to the pericentre direction.
    """
    from scipy.integrate import solve_ivp

    from ..oracle import accelerations

    masses = np.asarray(masses, dtype=float)
    mu = masses[0] + masses[1]
    rp = a * (1.0 - e)
    vp = np.sqrt(mu * (1.0 + e) / rp)
    f0, f1 = masses[1] / mu, masses[0] / mu
    pos = np.array([[-f0 * rp, 0.0], [f1 * rp, 0.0], [0.0, distance]])
    vel = np.array([[0.0, -f0 * vp], [0.0, f1 * vp], [0.0, 0.0]])

    def rhs(_t, y):
        p = y[:6].reshape(3, 2)
        return np.concatenate([y[6:], accelerations(p, masses).ravel()])

    def crossing(_t, y):
        return y[3] - y[1]  # relative y component, zero at pericentre and apocentre

    crossing.direction = 1
    period_guess = 2 * np.pi * np.sqrt(a**3 / mu)
    sol = solve_ivp(rhs, (0.0, 1.5 * period_guess), np.concatenate([pos.ravel(), vel.ravel()]),
                    method="DOP853", rtol=1e-13, atol=1e-15, events=crossing)
    times = sol.t_events[0]
    return float(times[times > 0.5 * period_guess][0])
