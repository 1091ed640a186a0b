"""Four-mode nonlinear overlap tensor for the multimode propagation kernel.

S_klmn is the transverse overlap integral of four mode profiles divided by
the product of their L2 norms. For LP modes the integrand separates into
a radial factor (integrated by trapezoid on the dense solver grid) and an
azimuthal factor (a trigonometric polynomial, integrated exactly), which
keeps every element accurate to quadrature roundoff; the brute-force 2D
quadrature in the tests cross-checks this.

Stored entries are dimensionless: the physical coefficients (1/m^2, i.e.
inverse effective areas) are scaled by the area of one cell of the
declared transverse sampling grid, which also bounds |S| <= 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .modes import LPMode, parse_mode_label
from .phasematch import azimuthal_overlap


class CouplingGridError(ValueError):
    pass


@dataclass
class CouplingTensor:
    labels: list[str]
    s: np.ndarray            # (K, K, K, K), dimensionless (physical x cell_area)
    cell_area_m2: float
    grid_half_width_m: float
    grid_points: int

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def physical(self) -> np.ndarray:
        """Coupling coefficients in 1/m^2 (S_aaaa = inverse effective area)."""
        return self.s / self.cell_area_m2

    def element(self, k: str, l: str, m: str, n: str) -> float:
        """One physical element addressed by mode labels."""
        i = (self.index(k), self.index(l), self.index(m), self.index(n))
        return float(self.s[i] / self.cell_area_m2)


def radial_quartic_integral(modes: tuple[LPMode, LPMode, LPMode, LPMode]) -> float:
    """integral F_a F_b F_c F_d r dr over the shared solver grid.

    Midpoint rule on the half-offset grid with the Euler-Maclaurin boundary
    correction at r = 0 (the integrand has nonzero slope there when all
    four modes are l = 0), giving O(h^4) accuracy.
    """
    r = modes[0].r_grid
    for mo in modes[1:]:
        if mo.r_grid is None or len(mo.r_grid) != len(r) or not np.allclose(mo.r_grid, r):
            raise CouplingGridError("modes must share one radial solver grid")
    h = r[1] - r[0]
    prod = modes[0].radial_field * modes[1].radial_field
    prod = prod * modes[2].radial_field * modes[3].radial_field
    integral = float(np.sum(prod * r) * h)
    if all(mo.l == 0 for mo in modes):
        # d(prod*r)/dr at 0 equals prod(0); extrapolate each even field to r=0
        prod0 = 1.0
        for mo in modes:
            prod0 *= (9.0 * mo.radial_field[0] - mo.radial_field[1]) / 8.0
        integral -= h**2 / 24.0 * prod0
    return integral


def quartic_overlap(a: LPMode, b: LPMode, c: LPMode, d: LPMode) -> float:
    """Physical overlap (1/m^2) of four orientation-resolved LP modes."""
    radial = radial_quartic_integral((a, b, c, d))
    azim = azimuthal_overlap([a.label, b.label, c.label, d.label])
    return radial * azim


def _check_cartesian_normalization(mode: LPMode, half_width_m: float,
                                   n_points: int) -> float:
    """Sum |F|^2 dA of the mode sampled on the declared Cartesian grid."""
    x = (np.arange(n_points) - (n_points - 1) / 2) * (2 * half_width_m / n_points)
    xx, yy = np.meshgrid(x, x, sparse=True)
    rr = np.sqrt(xx**2 + yy**2)
    f_r = np.interp(rr, mode.r_grid, mode.radial_field, right=0.0)
    l = mode.l
    if l == 0:
        f = f_r / np.sqrt(2 * np.pi)
    else:
        phi = np.arctan2(yy, xx)
        trig = np.sin(l * phi) if mode.orientation == "b" else np.cos(l * phi)
        f = f_r * trig / np.sqrt(np.pi)
    cell = (2 * half_width_m / n_points) ** 2
    return float(np.sum(f**2) * cell)


def build_coupling_tensor(modes: list[LPMode], core_radius_m: float,
                          half_width_factor: float = 8.0,
                          grid_points: int = 512,
                          normalization_tol: float = 1e-3) -> CouplingTensor:
    """Coupling tensor over orientation-resolved modes.

    The transverse grid must cover at least 3 core radii (the default is
    wider because near-cutoff modes carry weight far into the cladding);
    each mode's sampled norm must agree with 1 to ``normalization_tol``,
    otherwise the grid is declared too coarse or too narrow.
    """
    if half_width_factor < 3.0:
        raise CouplingGridError("transverse grid must cover >= 3 core radii")
    labels = [m.label for m in modes]
    if len(set(labels)) != len(labels):
        raise CouplingGridError(f"duplicate mode labels in tensor basis: {labels}")
    for mo in modes:
        if mo.l > 0 and mo.orientation not in ("a", "b"):
            raise CouplingGridError(
                f"{mo.label}: l >= 1 modes must be orientation-resolved (a/b)"
            )

    half_width = half_width_factor * core_radius_m
    cell = (2 * half_width / grid_points) ** 2
    for mo in modes:
        norm = _check_cartesian_normalization(mo, half_width, grid_points)
        if abs(norm - 1.0) > normalization_tol:
            raise CouplingGridError(
                f"{mo.label}: sampled norm {norm:.6f} deviates from 1 by more than "
                f"{normalization_tol}; refine the transverse grid "
                f"({grid_points} points over +-{half_width * 1e6:.1f} um) or widen it"
            )

    # radial factor: quartic products on the shared solver grid, with the
    # r=0 Euler-Maclaurin correction entering only through l=0 modes
    r = modes[0].r_grid
    for mo in modes[1:]:
        if mo.r_grid is None or not np.allclose(mo.r_grid, r):
            raise CouplingGridError("modes must share one radial solver grid")
    h = r[1] - r[0]
    F = np.stack([mo.radial_field for mo in modes])
    w = r * h
    pair = F[:, None, :] * F[None, :, :]
    s_rad = np.einsum("abr,cdr->abcd", pair * w, pair, optimize=True)
    f0 = np.array([(9.0 * mo.radial_field[0] - mo.radial_field[1]) / 8.0
                   if mo.l == 0 else 0.0 for mo in modes])
    s_rad -= h**2 / 24.0 * np.einsum("a,b,c,d->abcd", f0, f0, f0, f0)

    # azimuthal factor: exact product integrals of the trig profiles
    phi = np.linspace(0.0, 2.0 * np.pi, 512, endpoint=False)
    T = np.empty((len(modes), phi.size))
    for i, mo in enumerate(modes):
        if mo.l == 0:
            T[i] = 1.0 / np.sqrt(2.0 * np.pi)
        elif mo.orientation == "b":
            T[i] = np.sin(mo.l * phi) / np.sqrt(np.pi)
        else:
            T[i] = np.cos(mo.l * phi) / np.sqrt(np.pi)
    s_az = np.einsum("ap,bp,cp,dp->abcd", T, T, T, T, optimize=True)
    s_az *= 2.0 * np.pi / phi.size

    return CouplingTensor(labels=labels, s=s_rad * s_az * cell, cell_area_m2=cell,
                          grid_half_width_m=half_width, grid_points=grid_points)


def effective_area_m2(mode: LPMode) -> float:
    """1 / S_aaaa for one mode (requires orientation-resolved label for l >= 1)."""
    return 1.0 / quartic_overlap(mode, mode, mode, mode)
