"""Bulk glass refractive-index models (Sellmeier laws)."""

from __future__ import annotations

import numpy as np

# Malitson (1965) three-term Sellmeier for fused silica, wavelength in um.
_SILICA_B = (0.6961663, 0.4079426, 0.8974794)
_SILICA_C_UM2 = (0.0684043**2, 0.1162414**2, 9.896161**2)
_SILICA_RANGE_UM = (0.21, 6.7)


class MaterialModelError(ValueError):
    """Wavelength outside a dispersion model's validity range, or unknown model."""


def silica_index(lambda_m):
    """Refractive index of fused silica at vacuum wavelength ``lambda_m`` (meters).

    Accepts scalars or arrays; raises MaterialModelError outside the
    fitted 0.21-6.7 um range.
    """
    lam_um = np.asarray(lambda_m, dtype=float) * 1e6
    if np.any(lam_um < _SILICA_RANGE_UM[0]) or np.any(lam_um > _SILICA_RANGE_UM[1]):
        raise MaterialModelError(
            f"wavelength {np.min(lam_um):.4g}-{np.max(lam_um):.4g} um outside "
            f"silica Sellmeier validity {_SILICA_RANGE_UM} um"
        )
    lam2 = lam_um**2
    n2 = 1.0 + sum(b * lam2 / (lam2 - c) for b, c in zip(_SILICA_B, _SILICA_C_UM2))
    n = np.sqrt(n2)
    return float(n) if np.isscalar(lambda_m) else n


_MODELS = {
    "fused-silica": silica_index,
    "silica": silica_index,
}


def material_index(name: str, lambda_m):
    """Look up a named material model and evaluate n(lambda)."""
    try:
        model = _MODELS[name]
    except KeyError:
        raise MaterialModelError(
            f"unknown material model {name!r}; available: {sorted(_MODELS)}"
        ) from None
    return model(lambda_m)


def material_names():
    return sorted(_MODELS)
