"""Group delay, GVD and modal-delay tables derived from the mode solver.

Propagation constants are sampled on a uniform angular-frequency grid and
differentiated with 5-point stencils (central in the interior, one-sided
at the edges). The radial grid is held fixed across frequency samples so
discretization error cancels in the differences.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .modes import (LPMode, ModeSolverError, SolverGrid, find_mode,
                    lambda_from_omega, omega_from_lambda, solve_modes)
from .profiles import IndexProfile

TAU_SI_TO_PS_PER_KM = 1e15     # s/m -> ps/km
BETA2_SI_TO_FS2_PER_MM = 1e27  # s^2/m -> fs^2/mm


# derivative at node i of a uniform 5-node block, O(h^4)
_D1_BLOCK = np.array([
    [-25.0, 48.0, -36.0, 16.0, -3.0],
    [-3.0, -10.0, 18.0, -6.0, 1.0],
    [1.0, -8.0, 0.0, 8.0, -1.0],
    [-1.0, 6.0, -18.0, 10.0, 3.0],
    [3.0, -16.0, 36.0, -48.0, 25.0],
]) / 12.0


def _deriv1(y: np.ndarray, h: float) -> np.ndarray:
    """First derivative, 5-point stencils, O(h^4), one-sided at edges."""
    n = len(y)
    if n < 5:
        raise ValueError("need at least 5 samples for the 5-point stencil")
    d = np.full(n, np.nan)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    d[0] = np.dot(_D1_BLOCK[0], y[:5]) / h
    d[1] = np.dot(_D1_BLOCK[1], y[:5]) / h
    d[n - 2] = np.dot(_D1_BLOCK[3], y[-5:]) / h
    d[n - 1] = np.dot(_D1_BLOCK[4], y[-5:]) / h
    return d


def _deriv2(y: np.ndarray, h: float) -> np.ndarray:
    """Second derivative, 5-point central, O(h^4); edges copy inward."""
    n = len(y)
    d = np.full(n, np.nan)
    d[2:-2] = (-y[:-4] + 16 * y[1:-3] - 30 * y[2:-2] + 16 * y[3:-1] - y[4:]) / (12 * h**2)
    d[0] = d[1] = d[2]
    d[-1] = d[-2] = d[-3]
    return d


@dataclass
class ModeDispersion:
    label: str
    omega: np.ndarray    # rad/s, ascending, uniform
    beta: np.ndarray     # rad/m, NaN where the mode is not guided
    tau: np.ndarray      # s/m
    beta2: np.ndarray    # s^2/m

    def guided_mask(self) -> np.ndarray:
        return np.isfinite(self.beta)


class DispersionTable:
    """Per-mode beta(omega), group delay and GVD, plus relative modal delays.

    Relative delays are taken against the reference mode (the fundamental
    by default), which cancels the common chromatic part.
    """

    def __init__(self, modes: dict[str, ModeDispersion], reference: str = "LP01"):
        if reference not in modes:
            raise ValueError(f"reference mode {reference!r} not in table")
        self.modes = modes
        self.reference = reference

    def labels(self) -> list[str]:
        return list(self.modes)

    def _interp(self, label: str, field: str, omega: float) -> float:
        md = self.modes[label]
        y = getattr(md, field)
        good = np.isfinite(y)
        if not good.any():
            raise ModeSolverError(f"mode {label} has no guided samples")
        om, yy = md.omega[good], y[good]
        if omega < om[0] - 1e-9 * om[0] or omega > om[-1] + 1e-9 * om[-1]:
            raise ModeSolverError(
                f"{label}: {field} requested at omega={omega:.4e} outside the "
                f"guided range [{om[0]:.4e}, {om[-1]:.4e}]"
            )
        return float(np.interp(omega, om, yy))

    def beta(self, label: str, lambda_m: float) -> float:
        return self._interp(label, "beta", omega_from_lambda(lambda_m))

    def tau(self, label: str, lambda_m: float) -> float:
        return self._interp(label, "tau", omega_from_lambda(lambda_m))

    def beta2(self, label: str, lambda_m: float) -> float:
        return self._interp(label, "beta2", omega_from_lambda(lambda_m))

    def delta_tau(self, label: str, lambda_m: float) -> float:
        """Group delay of ``label`` relative to the reference mode, s/m."""
        if label == self.reference:
            return 0.0
        return self.tau(label, lambda_m) - self.tau(self.reference, lambda_m)

    def guided_at(self, label: str, lambda_m: float) -> bool:
        md = self.modes.get(label)
        if md is None:
            return False
        omega = omega_from_lambda(lambda_m)
        good = md.guided_mask()
        if not good.any():
            return False
        om = md.omega[good]
        return om[0] <= omega <= om[-1]

    # -- delimited text I/O ------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# reference_mode={self.reference}\n")
            fh.write("mode,lambda_nm,beta_rad_per_m,tau_ps_per_km,beta2_fs2_per_mm\n")
            for label, md in self.modes.items():
                for om, b, t, b2 in zip(md.omega, md.beta, md.tau, md.beta2):
                    if not np.isfinite(b):
                        continue
                    fh.write(f"{label},{lambda_from_omega(om) * 1e9:.6f},"
                             f"{b:.6f},{t * TAU_SI_TO_PS_PER_KM:.9f},"
                             f"{b2 * BETA2_SI_TO_FS2_PER_MM:.9f}\n")

    @classmethod
    def from_csv(cls, path) -> "DispersionTable":
        reference = "LP01"
        rows: dict[str, list[tuple[float, float, float, float]]] = {}
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    if "reference_mode=" in line:
                        reference = line.split("reference_mode=")[1].strip()
                    continue
                if line.startswith("mode,"):
                    continue
                label, lam_nm, beta, tau, beta2 = line.split(",")
                rows.setdefault(label, []).append((
                    omega_from_lambda(float(lam_nm) * 1e-9), float(beta),
                    float(tau) / TAU_SI_TO_PS_PER_KM,
                    float(beta2) / BETA2_SI_TO_FS2_PER_MM,
                ))
        modes = {}
        for label, samples in rows.items():
            samples.sort(key=lambda s: s[0])
            arr = np.array(samples)
            modes[label] = ModeDispersion(label, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
        return cls(modes, reference=reference)


def dispersion_table(profile: IndexProfile, mode_labels: list[str],
                     lambda_range: tuple[float, float], n_samples: int,
                     grid: SolverGrid = SolverGrid(),
                     reference: str = "LP01") -> DispersionTable:
    """Tabulate beta, group delay and GVD over a wavelength range.

    Modes that cut off inside the range get NaN samples there rather than
    failing the whole table. n_samples >= 5 (5-point stencils).
    """
    if n_samples < 5:
        raise ValueError("need at least 5 frequency samples")
    om_lo = omega_from_lambda(max(lambda_range))
    om_hi = omega_from_lambda(min(lambda_range))
    omega = np.linspace(om_lo, om_hi, n_samples)
    h = omega[1] - omega[0]

    beta = {label: np.full(n_samples, np.nan) for label in mode_labels}
    for i, om in enumerate(omega):
        modes_here = solve_modes(profile, lambda_from_omega(om), grid)
        for label in mode_labels:
            mode = find_mode(modes_here, label)
            if mode is not None:
                beta[label][i] = mode.beta(om)

    table = {}
    for label in mode_labels:
        b = beta[label]
        good = np.isfinite(b)
        tau = np.full(n_samples, np.nan)
        b2 = np.full(n_samples, np.nan)
        # differentiate over the longest contiguous guided block
        idx = np.flatnonzero(good)
        if idx.size:
            blocks = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
            for blk in blocks:
                if blk.size >= 5:
                    tau[blk] = _deriv1(b[blk], h)
                    b2[blk] = _deriv2(b[blk], h)
        table[label] = ModeDispersion(label, omega.copy(), b, tau, b2)
    if reference not in table:
        reference = mode_labels[0]
    return DispersionTable(table, reference=reference)


def local_dispersion(profile: IndexProfile, mode_labels: list[str], lambda_m: float,
                     grid: SolverGrid = SolverGrid(), rel_step: float = 5e-4,
                     reference: str = "LP01") -> DispersionTable:
    """Dispersion quantities at one wavelength from a 7-point local stencil.

    The relative frequency step trades truncation against eigensolver
    roundoff; 5e-4 keeps both far below the modal-delay scale.
    """
    om0 = omega_from_lambda(lambda_m)
    h = rel_step * om0
    omega = om0 + h * np.arange(-3, 4)
    lam_lo = lambda_from_omega(omega[-1])
    lam_hi = lambda_from_omega(omega[0])
    return dispersion_table(profile, mode_labels, (lam_lo, lam_hi), 7,
                            grid=grid, reference=reference)


def one_sided_tau(profile: IndexProfile, label: str, lambda_m: float,
                  grid: SolverGrid = SolverGrid(), rel_step: float = 5e-4) -> float:
    """Group delay from a purely one-sided stencil (cross-check path)."""
    om0 = omega_from_lambda(lambda_m)
    h = rel_step * om0
    omega = om0 + h * np.arange(0, 5)
    b = []
    for om in omega:
        modes_here = solve_modes(profile, lambda_from_omega(om), grid)
        mode = find_mode(modes_here, label)
        if mode is None:
            raise ModeSolverError(f"{label} not guided at {lambda_from_omega(om):.3e} m")
        b.append(mode.beta(om))
    return float(np.dot(_D1_BLOCK[0], np.array(b)) / h)
