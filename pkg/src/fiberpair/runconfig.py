"""Whole-pipeline run configuration: sectioned key-value text with
unit-suffixed keys, schema-validated with strict/lenient unknown-key
handling."""

from __future__ import annotations

import configparser
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

from .detector import DetectionConfig
from .profiles import IndexProfile, builtin_profile, load_profile
from .pulseprop import PumpSpec


class RunConfigError(ValueError):
    pass


_PUMP_KEYS = {"center_nm", "duration_fs", "energy_nj", "rep_rate_mhz", "launch_mode"}
_DETECTION_KEYS = {f.name for f in fields(DetectionConfig)}
_ANALYSIS_KEYS = {"bin_width_ps", "car_max_offset", "pcc_wiggle_bins",
                  "bootstrap_samples", "seed"}
_FIBER_KEYS = {"profile"}


@dataclass
class RunConfig:
    fiber: IndexProfile
    pump: PumpSpec
    detection: DetectionConfig
    analysis: dict

    @classmethod
    def load(cls, path, strict: bool = True) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise RunConfigError(f"run config not found: {path}")
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp.read(path)

        def check(section, allowed):
            unknown = set(cp[section]) - allowed if section in cp else set()
            if unknown:
                msg = f"{path}: unknown keys in [{section}]: {sorted(unknown)}"
                if strict:
                    raise RunConfigError(msg)
                warnings.warn(msg, stacklevel=2)

        known_sections = {"fiber", "pump", "detection", "analysis"}
        stray = set(cp.sections()) - known_sections
        if stray:
            msg = f"{path}: unknown sections {sorted(stray)}"
            if strict:
                raise RunConfigError(msg)
            warnings.warn(msg, stacklevel=2)

        for sec, allowed in (("fiber", _FIBER_KEYS), ("pump", _PUMP_KEYS),
                             ("detection", _DETECTION_KEYS), ("analysis", _ANALYSIS_KEYS)):
            check(sec, allowed)

        if "fiber" not in cp or "profile" not in cp["fiber"]:
            raise RunConfigError(f"{path}: [fiber] section with a profile key is required")
        ref = cp["fiber"]["profile"]
        if ref.startswith("builtin:"):
            fiber = builtin_profile(ref.split(":", 1)[1])
        else:
            fiber = load_profile((path.parent / ref) if not Path(ref).is_absolute() else ref)

        pump_sec = cp["pump"] if "pump" in cp else {}
        launch_mode = pump_sec.get("launch_mode", "LP01")
        try:
            pump = PumpSpec(
                duration_fs=float(pump_sec.get("duration_fs", 140.0)),
                energy_nj=float(pump_sec.get("energy_nj", 0.1)),
                center_nm=float(pump_sec.get("center_nm", 695.0)),
                rep_rate_mhz=float(pump_sec.get("rep_rate_mhz", 80.0)),
                launch=((launch_mode, 1.0),),
            )
        except ValueError as exc:
            raise RunConfigError(f"{path}: bad pump spec: {exc}") from exc

        det_kwargs = {}
        if "detection" in cp:
            for key, value in cp["detection"].items():
                if key not in _DETECTION_KEYS:
                    continue  # lenient mode already warned
                det_kwargs[key] = None if value == "auto" else float(value)
        try:
            detection = DetectionConfig(**det_kwargs)
        except Exception as exc:
            raise RunConfigError(f"{path}: bad detection config: {exc}") from exc

        analysis = {}
        if "analysis" in cp:
            for key, value in cp["analysis"].items():
                if key not in _ANALYSIS_KEYS:
                    continue
                analysis[key] = float(value) if "." in value else int(value)
        return cls(fiber=fiber, pump=pump, detection=detection, analysis=analysis)
