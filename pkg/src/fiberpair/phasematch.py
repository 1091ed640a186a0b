"""Intermodal four-wave-mixing phase matching.

Enumerates (signal mode, idler mode) combinations for a given pump mode
and group-number mismatch G = -2 g_pump + g_idler + g_signal, evaluates
the residual mismatch delta_beta = beta_s + beta_i - 2 beta_p from the
mode solver, and locates delta_beta zero crossings by bisection. The
closed-form sideband formula for ideal graded-index profiles,

    omega_{s,i} = omega_p +- sqrt( sqrt(2 delta) G / (R beta2_p) ),

is provided for cross-checking the exact scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dispersion import local_dispersion
from .modes import (LPMode, SolverGrid, expand_orientations, find_mode,
                    lambda_from_omega, omega_from_lambda, parse_mode_label,
                    solve_modes)
from .profiles import IndexProfile


class PhaseMatchError(ValueError):
    pass


@dataclass(frozen=True)
class FwmProcess:
    """One phase-matched mode combination (2 pump photons -> signal + idler)."""

    pump_mode: str
    signal_mode: str
    idler_mode: str
    lambda_s_m: float
    lambda_i_m: float
    g_mismatch: int          # G = -2 g_pump + g_idler + g_signal
    delta_beta: float        # rad/m at (lambda_s, lambda_i)

    def __post_init__(self):
        omega_p = 0.5 * (self.omega_s + self.omega_i)
        if not (self.omega_s > omega_p > self.omega_i):
            raise PhaseMatchError("signal/idler frequencies must straddle the pump")

    @property
    def omega_s(self) -> float:
        return omega_from_lambda(self.lambda_s_m)

    @property
    def omega_i(self) -> float:
        return omega_from_lambda(self.lambda_i_m)


def group_number(label: str) -> int:
    l, m, _ = parse_mode_label(label)
    return 2 * m + l - 1


def azimuthal_overlap(labels: list[str]) -> float:
    """Normalized integral over phi of the azimuthal factors of the modes.

    Each factor is 1/sqrt(2 pi) for l = 0 and cos/sin(l phi)/sqrt(pi) for
    orientations a/b. A 512-point rectangle rule is exact for these
    trigonometric polynomials.
    """
    phi = np.linspace(0.0, 2.0 * np.pi, 512, endpoint=False)
    prod = np.ones_like(phi)
    for label in labels:
        l, _, orient = parse_mode_label(label)
        if l == 0:
            prod /= np.sqrt(2.0 * np.pi)
        elif orient == "b":
            prod *= np.sin(l * phi) / np.sqrt(np.pi)
        else:
            prod *= np.cos(l * phi) / np.sqrt(np.pi)
    return float(np.sum(prod) * 2.0 * np.pi / len(phi))


def _orientation_full(label: str) -> str:
    """Treat bare l >= 1 labels as orientation 'a' for selection rules."""
    l, m, orient = parse_mode_label(label)
    if l > 0 and orient == "none":
        return f"LP{l}{m}a"
    return label


def closed_form_frequencies(omega_p: float, beta2_p: float, core_radius_m: float,
                            delta: float, g_mismatch: int) -> tuple[float, float]:
    """Phase-matched (omega_s, omega_i) for an ideal parabolic profile.

    Requires g_mismatch * beta2_p >= 0; a negative argument means no real
    sideband pair exists for this sign combination.
    """
    if core_radius_m <= 0 or delta <= 0:
        raise PhaseMatchError("core radius and delta must be positive")
    if g_mismatch == 0:
        return omega_p, omega_p
    arg = np.sqrt(2.0 * delta) * g_mismatch / (core_radius_m * beta2_p)
    if arg < 0:
        raise PhaseMatchError(
            f"no real phase matching: G={g_mismatch} with beta2={beta2_p:.3e} s^2/m "
            "gives a negative square-root argument"
        )
    detuning = np.sqrt(arg)
    return omega_p + detuning, omega_p - detuning


def closed_form_for_fiber(profile: IndexProfile, pump_mode: str, lambda_p_m: float,
                          g_mismatch: int,
                          grid: SolverGrid = SolverGrid()) -> tuple[float, float]:
    """Closed-form sidebands with beta2 taken from the fiber's own dispersion."""
    table = local_dispersion(profile, [pump_mode], lambda_p_m, grid=grid,
                             reference=pump_mode)
    beta2_p = table.beta2(pump_mode, lambda_p_m)
    return closed_form_frequencies(omega_from_lambda(lambda_p_m), beta2_p,
                                   profile.core_radius_m, profile.delta, g_mismatch)


def enumerate_processes(profile: IndexProfile, pump_mode: str, lambda_p_m: float,
                        lambda_s_m: float, lambda_i_m: float | None = None,
                        g_mismatch: int = 2, grid: SolverGrid = SolverGrid(),
                        energy_tol_rel: float = 5e-3) -> list[FwmProcess]:
    """All mode pairs with the requested group-number mismatch at (lambda_s, lambda_i).

    The idler wavelength defaults to the energy-conservation partner
    2/lambda_p - 1/lambda_s; a supplied idler (e.g. a nominal filter
    center) is snapped to that partner provided it agrees within
    ``energy_tol_rel``, so stored processes conserve energy exactly.
    Pairs whose four-fold azimuthal overlap with the pump vanishes cannot
    be driven and are excluded; pairs involving a mode that is not guided
    at its wavelength are absent by construction. Sorted by |delta_beta|
    then labels. An empty list is a valid result.
    """
    omega_p = omega_from_lambda(lambda_p_m)
    omega_s = omega_from_lambda(lambda_s_m)
    if omega_s <= omega_p:
        raise PhaseMatchError("signal wavelength must be shorter than the pump")
    omega_i = 2.0 * omega_p - omega_s
    if omega_i <= 0:
        raise PhaseMatchError("energy conservation pushes the idler below zero frequency")
    if lambda_i_m is not None:
        if abs(omega_from_lambda(lambda_i_m) - omega_i) > energy_tol_rel * omega_p:
            raise PhaseMatchError(
                "2 omega_p != omega_s + omega_i for the supplied wavelengths"
            )
    lambda_i_m = lambda_from_omega(omega_i)

    pump = find_mode(solve_modes(profile, lambda_p_m, grid), pump_mode)
    if pump is None:
        raise PhaseMatchError(f"pump mode {pump_mode} not guided at {lambda_p_m:.3e} m")
    sig_modes = expand_orientations(solve_modes(profile, lambda_s_m, grid))
    idl_modes = expand_orientations(solve_modes(profile, lambda_i_m, grid))
    g_p = group_number(pump_mode)
    pump_label = _orientation_full(pump_mode)

    procs = []
    for s in sig_modes:
        for i in idl_modes:
            if -2 * g_p + s.group_number + i.group_number != g_mismatch:
                continue
            if abs(azimuthal_overlap([pump_label, pump_label, s.label, i.label])) < 1e-9:
                continue
            db = s.beta(omega_s) + i.beta(omega_i) - 2.0 * pump.beta(omega_p)
            procs.append(FwmProcess(
                pump_mode=pump_mode, signal_mode=s.label, idler_mode=i.label,
                lambda_s_m=lambda_s_m, lambda_i_m=lambda_i_m,
                g_mismatch=g_mismatch, delta_beta=float(db),
            ))
    procs.sort(key=lambda p: (abs(p.delta_beta), p.signal_mode, p.idler_mode))
    return procs


def delta_beta_of_pair(profile: IndexProfile, pump_mode: str, lambda_p_m: float,
                       signal_mode: str, lambda_s_m: float,
                       idler_mode: str, lambda_i_m: float,
                       grid: SolverGrid = SolverGrid()) -> float | None:
    """beta_s + beta_i - 2 beta_p, or None if either mode is unguided."""
    pump = find_mode(solve_modes(profile, lambda_p_m, grid), pump_mode)
    if pump is None:
        raise PhaseMatchError(f"pump mode {pump_mode} not guided at {lambda_p_m:.3e} m")
    s = find_mode(solve_modes(profile, lambda_s_m, grid), signal_mode)
    i = find_mode(solve_modes(profile, lambda_i_m, grid), idler_mode)
    if s is None or i is None:
        return None
    return float(s.beta() + i.beta() - 2.0 * pump.beta())


@dataclass(frozen=True)
class PhaseMatchCrossing:
    signal_mode: str
    idler_mode: str
    lambda_s_m: float
    lambda_i_m: float
    multiple: bool = False  # more than one crossing found in the scanned window


def scan_phase_matching(profile: IndexProfile, pump_mode: str, lambda_p_m: float,
                        signal_grid_m: np.ndarray, g_mismatch: int = 2,
                        grid: SolverGrid = SolverGrid(),
                        tol_m: float = 1e-11) -> dict[tuple[str, str], list[PhaseMatchCrossing]]:
    """Locate delta_beta = 0 wavelengths for every mode pair with the given G.

    The signal wavelength grid is scanned with the idler following energy
    conservation; sign changes of delta_beta are refined by bisection to
    ``tol_m``. Pairs with no crossing map to an empty list; multiple
    crossings are all returned and flagged.
    """
    omega_p = omega_from_lambda(lambda_p_m)
    signal_grid_m = np.sort(np.asarray(signal_grid_m, dtype=float))[::-1]  # ascending omega

    candidate_pairs: set[tuple[str, str]] = set()
    series: dict[tuple[str, str], list] = {}
    for lam_s in signal_grid_m:
        procs = enumerate_processes(profile, pump_mode, lambda_p_m, lam_s,
                                    g_mismatch=g_mismatch, grid=grid)
        seen = {}
        for p in procs:
            candidate_pairs.add((p.signal_mode, p.idler_mode))
            seen[(p.signal_mode, p.idler_mode)] = p.delta_beta
        for pair in candidate_pairs:
            series.setdefault(pair, [])
        for pair in series:
            series[pair].append((lam_s, seen.get(pair)))

    def _db(pair, lam_s):
        omega_i = 2.0 * omega_p - omega_from_lambda(lam_s)
        return delta_beta_of_pair(profile, pump_mode, lambda_p_m,
                                  pair[0], lam_s, pair[1], lambda_from_omega(omega_i),
                                  grid=grid)

    out: dict[tuple[str, str], list[PhaseMatchCrossing]] = {}
    for pair, samples in series.items():
        crossings = []
        for (l1, d1), (l2, d2) in zip(samples[:-1], samples[1:]):
            if d1 is None or d2 is None or d1 * d2 > 0:
                continue
            a, b, da = l1, l2, d1
            while abs(b - a) > tol_m:
                mid = 0.5 * (a + b)
                dm = _db(pair, mid)
                if dm is None:
                    break
                if da * dm <= 0:
                    b = mid
                else:
                    a, da = mid, dm
            lam_s = 0.5 * (a + b)
            lam_i = lambda_from_omega(2.0 * omega_p - omega_from_lambda(lam_s))
            crossings.append((lam_s, lam_i))
        flagged = len(crossings) > 1
        out[pair] = [PhaseMatchCrossing(pair[0], pair[1], ls, li, multiple=flagged)
                     for ls, li in crossings]
    return out


def processes_to_csv(processes: list[FwmProcess], path) -> None:
    with open(path, "w") as fh:
        fh.write("signal_mode,idler_mode,lambda_s_nm,lambda_i_nm,G,delta_beta_per_m\n")
        for p in processes:
            fh.write(f"{p.signal_mode},{p.idler_mode},{p.lambda_s_m * 1e9:.4f},"
                     f"{p.lambda_i_m * 1e9:.4f},{p.g_mismatch},{p.delta_beta:.6f}\n")
