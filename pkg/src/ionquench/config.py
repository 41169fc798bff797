"""Scenario configuration files: parsing, validation and a canonical writer.

The format is plain INI (``key = value`` under ``[section]`` headers).  The
canonical writer emits every set field in a fixed order with ``repr``-exact
numbers, so ``dumps(loads(dumps(c))) == dumps(c)`` byte for byte.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError
from .params import SPECIES, DipoleGeometry, TrapScenario
from .structure_map import RecoilGeometry

PULSE_CONVENTIONS = ("same", "reversed")
TAPERS = ("none", "hann")
SWEEP_KEYS = ("temperature_uk", "soft_mode_temperature_uk", "per_mode_occupations", "g", "delta", "recoil_geometry")

# (section, key, attribute, kind)
_LAYOUT = (
    ("scenario", "name", "name", "str"),
    ("scenario", "species", "species", "str"),
    ("scenario", "n_ions", "n_ions", "int"),
    ("trap", "nu_x_hz", "nu_x_hz", "float"),
    ("trap", "nu_y_hz", "nu_y_hz", "float"),
    ("trap", "g", "g", "float"),
    ("trap", "nu_dip_hz", "nu_dip_hz", "float"),
    ("trap", "delta", "delta", "float"),
    ("trap", "dipole_geometry", "dipole_geometry", "str"),
    ("thermal", "temperature_uk", "temperatures_uk", "floats"),
    ("thermal", "soft_mode_temperature_uk", "soft_mode_temperature_uk", "float"),
    ("thermal", "per_mode_occupations", "per_mode_occupations", "floats"),
    ("recoil", "geometry", "recoil_geometry", "str"),
    ("recoil", "wavelength_nm", "wavelength_nm", "float"),
    ("recoil", "pulse_convention", "pulse_convention", "str"),
    ("recoil", "k_first_per_m", "k_first_per_m", "floats"),
    ("recoil", "k_second_per_m", "k_second_per_m", "floats"),
    ("time", "t_max_us", "t_max_us", "float"),
    ("time", "n_samples", "n_samples", "int"),
    ("time", "ramsey_phase", "ramsey_phase", "float"),
    ("spectrum", "floor", "spectrum_floor", "float"),
    ("spectrum", "window_us", "spectrum_window_us", "float"),
    ("spectrum", "taper", "spectrum_taper", "str"),
    ("output", "directory", "output_directory", "str"),
)
_SECTIONS = ("scenario", "trap", "thermal", "recoil", "time", "spectrum", "output", "sweep")


def _fmt(value, kind: str) -> str:
    if kind == "float":
        return repr(float(value))
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if kind == "int":
        return str(int(value))
    return str(value)


def _parse(text: str, kind: str, key: str):
    try:
        if kind == "float":
            v = float(text)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == "floats":
            vals = tuple(float(x) for x in text.split(",") if x.strip())
            if not vals or not all(math.isfinite(v) for v in vals):
                raise ValueError
            return vals
        if kind == "int":
            return int(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind}") from None
    return text.strip()


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    species: str = "Be9+"
    n_ions: int = 3
    nu_x_hz: float = 1e6
    nu_y_hz: float | None = None
    g: float | None = None
    nu_dip_hz: float | None = None
    delta: float | None = None
    dipole_geometry: str = DipoleGeometry.TRANSVERSE_ONLY.value
    temperatures_uk: tuple | None = (0.0,)
    soft_mode_temperature_uk: float | None = None
    per_mode_occupations: tuple | None = None
    recoil_geometry: str = RecoilGeometry.NONE.value
    wavelength_nm: float | None = None
    pulse_convention: str = "same"
    k_first_per_m: tuple | None = None
    k_second_per_m: tuple | None = None
    t_max_us: float = 60.0
    n_samples: int | None = None  # None: smallest grid that passes the density check
    ramsey_phase: float = 0.0
    spectrum_floor: float = 1e-12
    spectrum_window_us: float | None = None
    spectrum_taper: str = "none"
    output_directory: str = "out"
    sweep: tuple = field(default=())  # ((key, (values...)), ...) in file order

    def __post_init__(self):
        self.validate()

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        if (self.nu_y_hz is None) == (self.g is None):
            raise ConfigError("give exactly one of nu_y_hz and g")
        if (self.nu_dip_hz is None) == (self.delta is None):
            raise ConfigError("give exactly one of nu_dip_hz and delta")
        if self.per_mode_occupations is not None and self.temperatures_uk is not None:
            raise ConfigError("temperature_uk and per_mode_occupations are mutually exclusive")
        if self.per_mode_occupations is None and self.temperatures_uk is None:
            raise ConfigError("give temperature_uk or per_mode_occupations")
        if self.per_mode_occupations is not None:
            if len(self.per_mode_occupations) != 2 * self.n_ions:
                raise ConfigError(f"per_mode_occupations needs {2 * self.n_ions} entries")
            if self.soft_mode_temperature_uk is not None:
                raise ConfigError("soft_mode_temperature_uk needs temperature_uk")
        for t in (self.temperatures_uk or ()) + ((self.soft_mode_temperature_uk,) if self.soft_mode_temperature_uk
                                                 is not None else ()):
            if t < 0:
                raise ConfigError("temperatures must be non-negative")
        if any(n < 0 for n in self.per_mode_occupations or ()):
            raise ConfigError("occupations must be non-negative")
        if self.species not in SPECIES:
            raise ConfigError(f"unknown species {self.species!r} (known: {', '.join(sorted(SPECIES))})")
        if self.n_ions < 3 or self.n_ions % 2 == 0:
            raise ConfigError("n_ions must be odd and >= 3")
        if not self.nu_x_hz > 0:
            raise ConfigError("nu_x_hz must be positive")
        for enum, value, key in ((DipoleGeometry, self.dipole_geometry, "dipole_geometry"),
                                 (RecoilGeometry, self.recoil_geometry, "geometry")):
            try:
                enum(value)
            except ValueError:
                raise ConfigError(f"{key}: unknown value {value!r}") from None
        if self.pulse_convention not in PULSE_CONVENTIONS:
            raise ConfigError(f"pulse_convention must be one of {PULSE_CONVENTIONS}")
        explicit = RecoilGeometry(self.recoil_geometry) is RecoilGeometry.EXPLICIT
        if explicit != (self.k_first_per_m is not None):
            raise ConfigError("k_first_per_m is required for, and only for, the explicit recoil geometry")
        for k in (self.k_first_per_m, self.k_second_per_m):
            if k is not None and len(k) != 2:
                raise ConfigError("wave vectors have two components (k_x, k_y)")
        if self.wavelength_nm is not None and not self.wavelength_nm > 0:
            raise ConfigError("wavelength_nm must be positive")
        if not self.t_max_us > 0:
            raise ConfigError("t_max_us must be positive")
        if self.n_samples is not None and self.n_samples < 3:
            raise ConfigError("n_samples must be at least 3")
        if not self.spectrum_floor > 0:
            raise ConfigError("spectrum floor must be positive")
        if self.spectrum_window_us is not None and not 0 < self.spectrum_window_us <= self.t_max_us:
            raise ConfigError("spectrum window must lie in (0, t_max_us]")
        if self.spectrum_taper not in TAPERS:
            raise ConfigError(f"taper must be one of {TAPERS}")
        for key, values in self.sweep:
            if key not in SWEEP_KEYS:
                raise ConfigError(f"cannot sweep over {key!r} (allowed: {', '.join(SWEEP_KEYS)})")
            if not values:
                raise ConfigError(f"empty sweep list for {key}")
            if key == "per_mode_occupations" and any(len(v) != 2 * self.n_ions for v in values):
                raise ConfigError(f"swept per_mode_occupations need {2 * self.n_ions} entries each")
        swept = {k for k, _ in self.sweep}
        if {"temperature_uk", "per_mode_occupations"} <= swept:
            raise ConfigError("cannot sweep temperature_uk and per_mode_occupations together")

    # -- derived objects ---------------------------------------------------

    def scenario(self) -> TrapScenario:
        from .params import from_dimensionless

        # g fixes nu_y and delta fixes nu_dip independently of each other
        nu_y, nu_dip = self.nu_y_hz, self.nu_dip_hz
        try:
            if nu_y is None:
                nu_y = from_dimensionless(self.g, 0.0, n_ions=self.n_ions, nu_x=self.nu_x_hz)[0]
            if nu_dip is None:
                nu_dip = from_dimensionless(0.0, self.delta, n_ions=self.n_ions, nu_x=self.nu_x_hz)[1]
            return TrapScenario(self.n_ions, self.nu_x_hz, nu_y, nu_dip, DipoleGeometry(self.dipole_geometry),
                                SPECIES[self.species])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def recoil(self):
        from .structure_map import RecoilSpec

        geom = RecoilGeometry(self.recoil_geometry)
        if geom is RecoilGeometry.EXPLICIT:
            k2 = self.k_second_per_m if self.k_second_per_m is not None else self.k_first_per_m
            return RecoilSpec(geom, self.k_first_per_m, k2)
        wavelength = (self.wavelength_nm * 1e-9 if self.wavelength_nm is not None
                      else SPECIES[self.species].transition_wavelength)
        spec = RecoilSpec.preset(geom, wavelength)
        if self.pulse_convention == "reversed":
            spec = replace(spec, k_second=-spec.k_second)
        return spec

    def with_values(self, **changes) -> "ScenarioConfig":
        """Copy with some fields replaced; ``g``/``delta`` displace ``nu_y_hz``/``nu_dip_hz``."""
        if "g" in changes:
            changes.setdefault("nu_y_hz", None)
        if "delta" in changes:
            changes.setdefault("nu_dip_hz", None)
        if "temperature_uk" in changes:
            changes["temperatures_uk"] = (float(changes.pop("temperature_uk")),)
            changes.setdefault("per_mode_occupations", None)
        if changes.get("per_mode_occupations") is not None:
            changes["per_mode_occupations"] = tuple(float(x) for x in changes["per_mode_occupations"])
            changes.setdefault("temperatures_uk", None)
            changes.setdefault("soft_mode_temperature_uk", None)
        return replace(self, **changes)

    # -- serialisation -----------------------------------------------------

    def dumps(self) -> str:
        lines = []
        for section in _SECTIONS:
            if section == "sweep":
                body = [f"{k} = {_sweep_sep(k).join(_fmt_sweep(k, v) for v in vals)}" for k, vals in self.sweep]
            else:
                body = []
                for sec, key, attr, kind in _LAYOUT:
                    value = getattr(self, attr)
                    if sec == section and value is not None:
                        body.append(f"{key} = {_fmt(value, kind)}")
            if body:
                lines.append(f"[{section}]")
                lines.extend(body)
                lines.append("")
        return "\n".join(lines)

    @classmethod
    def loads(cls, text: str) -> "ScenarioConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str.lower
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        known = {(s, k): (a, kind) for s, k, a, kind in _LAYOUT}
        values: dict = {}
        sweep = []
        for section in cp.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in cp[section].items():
                if section == "sweep":
                    if key == "recoil_geometry":
                        vals = tuple(x.strip() for x in raw.split(",") if x.strip())
                    elif key == "per_mode_occupations":
                        vals = tuple(_parse(chunk, "floats", key) for chunk in raw.split(";") if chunk.strip())
                    else:
                        vals = _parse(raw, "floats", key)
                    sweep.append((key, vals))
                    continue
                if (section, key) not in known:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                attr, kind = known[(section, key)]
                values[attr] = _parse(raw, kind, key)
        if "per_mode_occupations" in values and "temperatures_uk" not in values:
            values["temperatures_uk"] = None
        return cls(**values, sweep=tuple(sweep))

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.loads(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()


def _sweep_sep(key: str) -> str:
    return "; " if key == "per_mode_occupations" else ", "


def _fmt_sweep(key: str, value) -> str:
    if key == "recoil_geometry":
        return str(value)
    if key == "per_mode_occupations":
        return ", ".join(repr(float(x)) for x in value)
    return repr(float(value))


def config_fields() -> list:
    return [f.name for f in fields(ScenarioConfig)]
