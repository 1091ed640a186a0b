"""Radially symmetric fiber index profiles.

Profiles are immutable value objects: geometry plus a named material law
for the cladding base index. The core index is the cladding scaled by
(1 + delta), so material dispersion carries through both regions.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .materials import material_index, material_names

PROFILE_KINDS = ("step", "step-with-dip", "parabolic-graded")


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class IndexProfile:
    """Geometry and radial refractive-index law of a fiber.

    Parameters
    ----------
    kind : str
        One of ``step``, ``step-with-dip``, ``parabolic-graded``.
    core_radius_m : float
        Core radius R in meters.
    delta : float
        Relative core-cladding index difference (n_co - n_cl)/n_co,
        applied as n_co = n_cl * (1 + delta).
    dip_depth : float
        Central index depression amplitude as a fraction of (n_co - n_cl).
        Only meaningful for ``step-with-dip``.
    dip_radius_m : float
        1/e half-width of the Gaussian dip (meters).
    material : str
        Cladding dispersion model name, see :mod:`fiberpair.materials`.
    """

    kind: str
    core_radius_m: float
    delta: float
    dip_depth: float = 0.0
    dip_radius_m: float = 0.0
    material: str = "fused-silica"

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ProfileError(f"unknown profile kind {self.kind!r}; use one of {PROFILE_KINDS}")
        if not 0.0 < self.delta < 0.05:
            raise ProfileError(f"delta must lie in (0, 0.05), got {self.delta}")
        if self.core_radius_m <= 0:
            raise ProfileError("core radius must be positive")
        if not 0.0 <= self.dip_depth <= 1.0:
            raise ProfileError("dip_depth is a fraction of the core-clad contrast, in [0, 1]")
        if self.dip_depth > 0:
            if self.kind != "step-with-dip":
                raise ProfileError("dip parameters only apply to kind='step-with-dip'")
            if not 0.0 < self.dip_radius_m < self.core_radius_m:
                raise ProfileError("dip_radius must satisfy 0 < dip_radius < core radius")
        if self.kind == "step-with-dip" and self.dip_depth == 0.0:
            raise ProfileError("step-with-dip requires dip_depth > 0 (use kind='step' otherwise)")

    # -- index evaluation -------------------------------------------------

    def n_clad(self, lambda_m: float) -> float:
        return float(material_index(self.material, lambda_m))

    def n_core(self, lambda_m: float) -> float:
        return self.n_clad(lambda_m) * (1.0 + self.delta)

    def n_max(self, lambda_m: float) -> float:
        """Largest index anywhere in the profile (core peak)."""
        return self.n_core(lambda_m)

    def index(self, r, lambda_m: float):
        """Pointwise n(r) at one wavelength; r scalar or array in meters."""
        r = np.abs(np.asarray(r, dtype=float))
        ncl = self.n_clad(lambda_m)
        nco = ncl * (1.0 + self.delta)
        inside = r < self.core_radius_m
        if self.kind == "step":
            n = np.where(inside, nco, ncl)
        elif self.kind == "step-with-dip":
            dip = self.dip_depth * (nco - ncl) * np.exp(-((r / self.dip_radius_m) ** 2))
            n = np.where(inside, nco - dip, ncl)
        else:  # parabolic-graded
            d2 = (nco**2 - ncl**2) / (2 * nco**2)
            n2 = nco**2 * (1.0 - 2.0 * d2 * (r / self.core_radius_m) ** 2)
            n = np.where(inside, np.sqrt(np.maximum(n2, ncl**2)), ncl)
        return n if n.shape else float(n)

    def n2_cell_average(self, r_edges: np.ndarray, lambda_m: float) -> np.ndarray:
        """Exact r dr-weighted average of n^2 over each cell [edge_i, edge_{i+1}].

        Used by the finite-difference eigensolver so the core-clad
        interface is represented to second order regardless of where it
        falls relative to the grid.
        """
        a = np.asarray(r_edges[:-1], dtype=float)
        b = np.asarray(r_edges[1:], dtype=float)
        denom = 0.5 * (b**2 - a**2)
        integral = self._n2_rdr_integral(b, lambda_m) - self._n2_rdr_integral(a, lambda_m)
        return integral / denom

    def _n2_rdr_integral(self, r, lambda_m: float):
        """Antiderivative of n^2(r') r' dr' from 0 to r, elementwise."""
        r = np.asarray(r, dtype=float)
        R = self.core_radius_m
        ncl = self.n_clad(lambda_m)
        nco = ncl * (1.0 + self.delta)
        rc = np.minimum(r, R)  # portion inside the core
        out = np.maximum(r**2 - R**2, 0.0) * 0.5 * ncl**2

        if self.kind == "step":
            core = 0.5 * rc**2 * nco**2
        elif self.kind == "step-with-dip":
            # n^2 = nco^2 - 2 nco D g + D^2 g^2 with g = exp(-r^2/rho^2)
            D = self.dip_depth * (nco - ncl)
            rho2 = self.dip_radius_m**2
            g_int = 0.5 * rho2 * (1.0 - np.exp(-(rc**2) / rho2))
            g2_int = 0.25 * rho2 * (1.0 - np.exp(-2.0 * rc**2 / rho2))
            core = 0.5 * rc**2 * nco**2 - 2.0 * nco * D * g_int + D**2 * g2_int
        else:  # parabolic-graded
            d2 = (nco**2 - ncl**2) / (2 * nco**2)
            core = nco**2 * (0.5 * rc**2 - 0.5 * d2 * rc**4 / R**2)
        return core + out


# -- config file I/O -------------------------------------------------------

_SCHEMA_KEYS = {"kind", "R_um", "delta", "dip_depth", "dip_radius_um", "material"}


def load_profile(path) -> IndexProfile:
    """Read a fiber profile from a sectioned key-value config file.

    Expected section ``[fiber]`` with keys: kind, R_um, delta, dip_depth,
    dip_radius_um, material. Unknown keys are rejected.
    """
    path = Path(path)
    if not path.exists():
        raise ProfileError(f"fiber config not found: {path}")
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep unit-suffixed keys case-sensitive (R_um)
    cp.read(path)
    if "fiber" not in cp:
        raise ProfileError(f"{path}: missing [fiber] section")
    sec = cp["fiber"]
    unknown = set(sec) - _SCHEMA_KEYS
    if unknown:
        raise ProfileError(f"{path}: unknown fiber keys {sorted(unknown)}")
    try:
        kind = sec.get("kind", "step")
        material = sec.get("material", "fused-silica")
        if material not in material_names():
            raise ProfileError(f"{path}: unknown material {material!r}")
        return IndexProfile(
            kind=kind,
            core_radius_m=sec.getfloat("R_um") * 1e-6,
            delta=sec.getfloat("delta"),
            dip_depth=sec.getfloat("dip_depth", 0.0),
            dip_radius_m=sec.getfloat("dip_radius_um", 0.0) * 1e-6,
            material=material,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ProfileError):
            raise
        raise ProfileError(f"{path}: {exc}") from exc


def save_profile(profile: IndexProfile, path) -> None:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["fiber"] = {
        "kind": profile.kind,
        "R_um": f"{profile.core_radius_m * 1e6:.6g}",
        "delta": f"{profile.delta:.6g}",
        "dip_depth": f"{profile.dip_depth:.6g}",
        "dip_radius_um": f"{profile.dip_radius_m * 1e6:.6g}",
        "material": profile.material,
    }
    with open(path, "w") as fh:
        cp.write(fh)


def builtin_profile(name: str) -> IndexProfile:
    """Profiles shipped with the package (see data/*.cfg for the files)."""
    from importlib.resources import files

    cfg = files("fiberpair.data") / f"{name}.cfg"
    if not cfg.is_file():
        raise ProfileError(f"no builtin fiber profile named {name!r}")
    return load_profile(str(cfg))
