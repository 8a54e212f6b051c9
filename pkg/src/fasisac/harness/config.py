"""
Experiment configuration.

The file format is INI (sections of ``key = value`` lines). Lengths are given
in wavelengths, noise powers in dBm, angles in degrees. Example::

    [experiment]
    schema_version = 1

    [geometry]
    mx = 4
    my = 4
    n_rx = 4
    wavelength = 0.015
    tx_spacing_wl = 0.5
    min_distance_wl = 0.5
    region_wl = 1, 2, 3, 4

    [population]
    users = 2
    paths = 20
    clutter = 4
    angle_max_deg = 90
    gain = complex
    user_noise_dbm = -105
    radar_noise_dbm = -105
    sinr_target = 1
    power_budget = 1

    [run]
    sweep = A
    trials = 50
    seed = 0
    schemes = FAS, FPA, RULA, APS
    eps = 1e-4
    relative = true

Exactly one of ``region_wl``, ``power_budget`` and ``sinr_target`` is swept,
as selected by ``run.sweep`` (``A``, ``P0`` or ``gamma``); the other two must
hold a single value. A swept key that is absent takes the default list of its
variable.
"""
import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..ao import SolverConfig
from ..exceptions import ConfigError
from ..model import ArrayGeometry

__all__ = ["ExperimentConfig", "load_config", "parse_config", "SCHEMES", "SWEEPS",
           "SCHEMA_VERSION"]

SCHEMA_VERSION = 1
SCHEMES = ("FAS", "FPA", "RULA", "APS")

# sweep name -> (config key, default list, default single value)
SWEEPS = {
    "A": ("region_wl", (1.0, 2.0, 3.0, 4.0), 2.0),
    "P0": ("power_budget", (0.1, 0.2, 0.5, 1.0, 2.0), 1.0),
    "gamma": ("sinr_target", (0.5, 1.0, 2.0, 4.0), 1.0),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a sweep; defaults are the full-size setup."""
    mx: int = 8
    my: int = 8
    n_rx: int = 4
    wavelength: float = 0.015
    tx_spacing_wl: float = 0.5
    min_distance_wl: float = 0.5
    users: int = 4
    paths: int = 20
    clutter: int = 9
    angle_max_deg: float = 90.0
    gain: str = "complex"
    user_noise_dbm: float = -105.0
    radar_noise_dbm: float = -105.0
    sweep: str = "A"
    region_wl: tuple = (1.0, 2.0, 3.0, 4.0)
    power_budget: tuple = (1.0,)
    sinr_target: tuple = (1.0,)
    trials: int = 50
    seed: int = 0
    schemes: tuple = SCHEMES
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.sweep not in SWEEPS:
            raise ConfigError(f"run.sweep: unknown sweep {self.sweep!r}; use one of {sorted(SWEEPS)}")
        for name in ("region_wl", "power_budget", "sinr_target"):
            vals = getattr(self, name)
            if len(vals) == 0:
                raise ConfigError(f"{name}: list is empty")
            if any(not v > 0 for v in vals):
                raise ConfigError(f"{name}: values must be positive")
            if name != self.sweep_key and len(vals) != 1:
                raise ConfigError(f"{name}: only the swept variable may hold a list "
                                  f"(sweep is {self.sweep!r})")
        for name in ("mx", "my", "n_rx", "paths", "trials"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be at least 1")
        for name in ("users", "clutter"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be non-negative")
        for name in ("wavelength", "tx_spacing_wl", "min_distance_wl", "angle_max_deg"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be positive")
        if self.gain not in ("complex", "real"):
            raise ConfigError(f"gain: expected 'complex' or 'real', got {self.gain!r}")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError(f"schemes: unknown or empty scheme list {list(self.schemes)}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed: must fit in an unsigned 64-bit integer")

    @property
    def sweep_key(self):
        return SWEEPS[self.sweep][0]

    @property
    def sweep_values(self):
        return tuple(getattr(self, self.sweep_key))

    def point(self, value):
        """Single-point copy with the swept variable set to ``value``."""
        return replace(self, **{self.sweep_key: (float(value),)})

    def geometry(self):
        lam = self.wavelength
        return ArrayGeometry(self.mx, self.my, self.n_rx, self.region_wl[0] * lam,
                             self.min_distance_wl * lam, lam, self.tx_spacing_wl * lam)


_INT = {"mx", "my", "n_rx", "users", "paths", "clutter", "trials", "seed",
        "max_outer", "max_inner"}
_FLOAT = {"wavelength", "tx_spacing_wl", "min_distance_wl", "angle_max_deg",
          "user_noise_dbm", "radar_noise_dbm", "eps", "eps_outer", "eps_w", "eps_r_outer",
          "eps_r_inner", "qcqp_tol"}
_LIST = {"region_wl", "power_budget", "sinr_target"}
_SECTIONS = {
    "experiment": {"schema_version"},
    "geometry": {"mx", "my", "n_rx", "wavelength", "tx_spacing_wl", "min_distance_wl",
                 "region_wl"},
    "population": {"users", "paths", "clutter", "angle_max_deg", "gain", "user_noise_dbm",
                   "radar_noise_dbm", "sinr_target", "power_budget"},
    "run": {"sweep", "trials", "seed", "schemes", "eps", "eps_outer", "eps_w", "eps_r_outer",
            "eps_r_inner", "max_outer", "max_inner", "qcqp_tol", "relative"},
}


def _value(section, key, raw):
    where = f"{section}.{key}"
    try:
        if key in _INT:
            return int(raw, 0)
        if key in _FLOAT:
            return float(raw)
        if key in _LIST:
            vals = tuple(float(v) for v in raw.replace(",", " ").split())
            if not vals:
                raise ValueError("empty list")
            return vals
        if key == "schemes":
            return tuple(v.strip().upper() for v in raw.split(",") if v.strip())
        if key == "relative":
            return configparser.ConfigParser.BOOLEAN_STATES[raw.strip().lower()]
        return raw.strip()
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} ({exc})") from None


def parse_config(text, source="<string>"):
    """Build an :class:`ExperimentConfig` from INI text."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"{sec}: unknown section")
        for key in cp[sec]:
            if key not in _SECTIONS[sec]:
                raise ConfigError(f"{sec}.{key}: unknown key")
    version = cp.get("experiment", "schema_version", fallback=None)
    if version is None:
        raise ConfigError("experiment.schema_version: missing")
    if version.strip() != str(SCHEMA_VERSION):
        raise ConfigError(f"experiment.schema_version: unsupported version {version.strip()!r}")

    vals = {}
    for sec in ("geometry", "population", "run"):
        if cp.has_section(sec):
            for key, raw in cp[sec].items():
                vals[key] = _value(sec, key, raw)

    solver = {}
    if "eps" in vals:
        eps = vals.pop("eps")
        solver.update(eps_outer=eps, eps_w=eps, eps_r_outer=eps, eps_r_inner=eps)
    for key in ("eps_outer", "eps_w", "eps_r_outer", "eps_r_inner", "max_outer",
                "max_inner", "qcqp_tol", "relative"):
        if key in vals:
            solver[key] = vals.pop(key)
    sweep = vals.get("sweep", "A")
    if sweep in SWEEPS:
        for name, (key, default_list, default_one) in SWEEPS.items():
            if key not in vals:
                vals[key] = default_list if name == sweep else (default_one,)
    vals["solver"] = SolverConfig(**solver)
    try:
        cfg = ExperimentConfig(**vals)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for a in cfg.region_wl:
        try:
            cfg.point(a).geometry() if cfg.sweep == "A" else cfg.geometry()
        except ValueError as exc:
            raise ConfigError(f"geometry.region_wl: {exc}") from None
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config file ({exc.strerror})") from None
    return parse_config(text, source=str(path))
