"""File formats: spectrum CSV, parameter files and JSON artifacts."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import jsonschema
import numpy as np

from .jsa import DispersionParams, PumpSpec, WaveguideSpec
from .spectrum import ANGULAR_FREQUENCY, WAVELENGTH_NM, Spectrum
from .units import Measured, nm_to_omega


class FormatError(ValueError):
    """Malformed input file; the message names the offending line where possible."""


AXIS_HEADERS = {WAVELENGTH_NM: WAVELENGTH_NM, ANGULAR_FREQUENCY: ANGULAR_FREQUENCY}


def read_spectrum_csv(path):
    path = Path(path)
    axis, values = [], []
    header = None
    with path.open(encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            cells = [c.strip() for c in next(csv.reader([text]))]
            if header is None:
                if len(cells) != 2 or cells[0] not in AXIS_HEADERS or cells[1] != "intensity":
                    raise FormatError(
                        f"{path}:{lineno}: expected header 'wavelength_nm,intensity' or "
                        f"'angular_frequency_rad_per_ps,intensity', got {text!r}")
                header = cells[0]
                continue
            if len(cells) != 2:
                raise FormatError(f"{path}:{lineno}: expected 2 columns, got {len(cells)}")
            try:
                x, y = float(cells[0]), float(cells[1])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: not a number: {text!r}") from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise FormatError(f"{path}:{lineno}: NaN or Inf is not allowed")
            if y < 0:
                raise FormatError(f"{path}:{lineno}: negative intensity")
            if axis:
                step = x - axis[-1]
                if step == 0 or (len(axis) > 1 and (step > 0) != (axis[-1] > axis[-2])):
                    raise FormatError(f"{path}:{lineno}: axis is not strictly monotone")
            axis.append(x)
            values.append(y)
    if header is None:
        raise FormatError(f"{path}: missing header line")
    if not axis:
        raise FormatError(f"{path}: no data rows")
    a, v = np.array(axis), np.array(values)
    if a.size > 1 and a[1] < a[0]:
        a, v = a[::-1], v[::-1]
    return Spectrum(a, v, kind=header)


def _fmt(x):
    return format(float(x), ".17g")


def write_spectrum_csv(path, s, comments=()):
    if s.kind not in AXIS_HEADERS:
        raise ValueError(f"cannot write a {s.kind} axis to spectrum CSV")
    lines = [f"# {c}" for c in comments]
    lines.append(f"{s.kind},intensity")
    lines += [f"{_fmt(x)},{_fmt(y)}" for x, y in zip(s.axis, s.intensity)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj):
    """Deterministic JSON; floats use the shortest repr that round-trips exactly."""
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from None


_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}

PARAM_SCHEMA = {
    "type": "object",
    "required": ["waveguide", "dispersion", "degeneracy_nm"],
    "properties": {
        "waveguide": {
            "type": "object",
            "required": ["length_um", "gamma"],
            "properties": {"length_um": {"type": "number", "exclusiveMinimum": 0},
                           "length_sigma_um": {"type": "number", "minimum": 0},
                           "gamma": {"type": "number", "exclusiveMinimum": 0}},
        },
        "dispersion": {
            "oneOf": [
                {"type": "object", "required": ["kappa_s_ps_per_um", "kappa_i_ps_per_um"],
                 "properties": {"kappa_s_ps_per_um": _NUM, "kappa_i_ps_per_um": _NUM,
                                "K_s_ps2_per_um": _NUM, "K_i_ps2_per_um": _NUM,
                                "K_p_ps2_per_um": _NUM},
                 "not": {"required": ["kappa_ratio"]}},
                {"type": "object", "required": ["kappa_i_ps_per_um", "kappa_ratio"],
                 "properties": {"kappa_i_ps_per_um": _NUM, "kappa_ratio": _NUM,
                                "Ks_norm_ps": _NUM, "Ki_norm_ps": _NUM, "Kp_norm_ps": _NUM},
                 "not": {"required": ["kappa_s_ps_per_um"]}},
            ],
        },
        "pump": {
            "type": "object",
            "properties": {"central_wavelength_nm": _NUM, "sigma_p_rad_per_ps": _NUM_OR_NULL,
                           "cw": {"type": "boolean"}},
        },
        "degeneracy_nm": {"type": "number", "exclusiveMinimum": 0},
        "masks_nm": {"type": "array",
                     "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": _NUM_OR_NULL}},
    },
}


class ParamFile:
    """Validated contents of a parameter JSON file."""

    def __init__(self, data, source="<params>"):
        try:
            jsonschema.validate(data, PARAM_SCHEMA)
        except jsonschema.ValidationError as e:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            raise FormatError(f"{source}: schema error at {where}: {e.message}") from None
        self.data = data
        wg = data["waveguide"]
        self.length = Measured(float(wg["length_um"]), float(wg.get("length_sigma_um", 0.0)))
        self.gamma = float(wg["gamma"])
        self.degeneracy_nm = float(data["degeneracy_nm"])
        d = data["dispersion"]
        if "kappa_ratio" in d:
            ki = float(d["kappa_i_ps_per_um"])
            self.dispersion = DispersionParams.from_normalized(
                float(d["kappa_ratio"]), float(d.get("Ks_norm_ps", 0.0)), float(d.get("Ki_norm_ps", 0.0)),
                abs(ki), float(d.get("Kp_norm_ps", 0.0)), kappa_i_sign=ki)
        else:
            self.dispersion = DispersionParams(
                float(d["kappa_s_ps_per_um"]), float(d["kappa_i_ps_per_um"]),
                float(d.get("K_s_ps2_per_um", 0.0)), float(d.get("K_i_ps2_per_um", 0.0)),
                float(d.get("K_p_ps2_per_um", 0.0)))
        self.masks = [tuple(m) for m in data.get("masks_nm", [])]
        self.pump = data.get("pump", {})

    @classmethod
    def load(cls, path):
        return cls(read_json(path), str(path))

    @property
    def omega0(self):
        return float(nm_to_omega(self.degeneracy_nm))

    def waveguide(self):
        return WaveguideSpec.degenerate(self.length.value, self.gamma, self.omega0)

    def pump_spec(self):
        wl = self.pump.get("central_wavelength_nm", 0.5 * self.degeneracy_nm)
        sigma = self.pump.get("sigma_p_rad_per_ps")
        cw = bool(self.pump.get("cw", sigma is None))
        return PumpSpec(float(nm_to_omega(wl)), math.inf if sigma is None else float(sigma), cw)
