"""Plain-text run configuration (INI sections) for the batch front-end.

The effective (fully defaulted) configuration is echoed next to every
command's outputs and re-parses to an identical run, so outputs are
reproducible from the echo alone.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .fem import FluidProperties
from .geometry import CellGeometry, WaveguideGeometry


class ConfigError(ValueError):
    pass


# key -> (type, default); section order fixed for deterministic echoes
_SCHEMA = {
    "cell": {
        "b1": (float, 1.0),
        "b2": (float, 1.0),
        "kappa": (float, 1.0),
        "plate_thickness": (float, 0.25),
        "hole_diameter": (float, 0.24),
        "hole_slope_deg": (float, 0.0),
        "eps0": (float, 0.025),
        "resolution": (float, 0.08),
    },
    "waveguide": {
        "l_m": (float, 0.3),
        "h_m": (float, 0.2),
        "l_io": (float, 0.2),
        "h_io": (float, 0.0625),
        "width": (float, 0.01),
        "interface_pos": (float, 0.2),
        "resolution": (float, 0.0125),
    },
    "fluid": {
        # reference density as published for this configuration
        "rho0": (float, 1.55),
        "c": (float, 343.0),
        "tau": (float, 3.0),
    },
    "flow": {
        "mode": (str, "potential"),
        "u_in": (float, 20.0),
        "u3": (float, 1.0),
        "u3_quantum": (float, 0.25),
    },
    "sweep": {
        "phi_list": (str, "0,30,60"),
        "u3_start": (float, 0.0),
        "u3_stop": (float, 5.5),
        "u3_count": (int, 12),
    },
    "frequencies": {
        "f_min": (float, 100.0),
        "f_max": (float, 1000.0),
        "count": (int, 30),
    },
    "acoustics": {
        "amplitude": (float, 300.0),
        "outer_advection": (bool, True),
        "impedance_flow_correction": (bool, False),
        "source_side": (str, "in"),
    },
    "run": {
        "seed": (int, 0),
        "jobs": (int, 1),
        "residual_tol": (float, 1e-10),
    },
}

_VALID_FLOW_MODES = ("none", "uniform", "potential")


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        section, name = key.split(".", 1)
        return self.values[section][name]

    def cell_geometry(self) -> CellGeometry:
        c = self.values["cell"]
        return CellGeometry(b1=c["b1"], b2=c["b2"], kappa=c["kappa"],
                            plate_thickness=c["plate_thickness"],
                            hole_diameter=c["hole_diameter"],
                            hole_slope_deg=c["hole_slope_deg"],
                            eps0=c["eps0"])

    def waveguide_geometry(self) -> WaveguideGeometry:
        w = self.values["waveguide"]
        return WaveguideGeometry(l_m=w["l_m"], h_m=w["h_m"], l_io=w["l_io"],
                                 h_io=w["h_io"], width=w["width"],
                                 interface_pos=w["interface_pos"])

    def fluid_properties(self) -> FluidProperties:
        f = self.values["fluid"]
        return FluidProperties(rho0=f["rho0"], c=f["c"], tau=f["tau"])

    def frequencies_hz(self):
        f = self.values["frequencies"]
        n = f["count"]
        if n < 1:
            raise ConfigError("frequency count must be >= 1")
        if n == 1:
            return [f["f_min"]]
        step = (f["f_max"] - f["f_min"]) / (n - 1)
        return [f["f_min"] + i * step for i in range(n)]

    def sweep_u3(self):
        s = self.values["sweep"]
        n = s["u3_count"]
        if n < 1:
            raise ConfigError("sweep u3_count must be >= 1")
        if n == 1:
            return [s["u3_start"]]
        step = (s["u3_stop"] - s["u3_start"]) / (n - 1)
        return [s["u3_start"] + i * step for i in range(n)]

    def sweep_phis(self):
        text = self.values["sweep"]["phi_list"]
        try:
            return [float(p) for p in text.split(",") if p.strip()]
        except ValueError:
            raise ConfigError(f"bad phi_list {text!r}") from None


def _coerce(section, key, kind, raw):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(
            f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from None


def default_config() -> RunConfig:
    return RunConfig({s: {k: d for k, (_, d) in keys.items()}
                      for s, keys in _SCHEMA.items()})


def parse_config(text: str) -> RunConfig:
    """Parse an INI config; unknown sections/keys are rejected."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    cfg = default_config()
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            kind, _ = _SCHEMA[section][key]
            cfg.values[section][key] = _coerce(section, key, kind, raw)
    mode = cfg["flow.mode"]
    if mode not in _VALID_FLOW_MODES:
        raise ConfigError(f"flow mode must be one of {_VALID_FLOW_MODES}, got {mode!r}")
    if cfg["acoustics.source_side"] not in ("in", "out"):
        raise ConfigError("acoustics source_side must be 'in' or 'out'")
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def render_config(cfg: RunConfig) -> str:
    """Deterministic INI rendering of the effective configuration."""
    out = io.StringIO()
    for section, keys in _SCHEMA.items():
        out.write(f"[{section}]\n")
        for key in keys:
            val = cfg.values[section][key]
            if isinstance(val, bool):
                text = "true" if val else "false"
            elif isinstance(val, float):
                text = format(val, ".17g")
            else:
                text = str(val)
            out.write(f"{key} = {text}\n")
        out.write("\n")
    return out.getvalue()
