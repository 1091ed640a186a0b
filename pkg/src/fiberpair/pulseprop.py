"""Multimode pulse propagation with intermodal four-wave mixing.

Integrates the coupled-mode envelope equation

    dA_k/dz = i D_k(i d/dt) A_k + i (n2 w_p / c) sum_lmn S_klmn A_l A_m A_n*

with a symmetrized split-step scheme: the dispersion operator D_k is
applied exactly in the frequency domain from spline-interpolated beta(w)
per mode (a truncated-Taylor variant is available for cross-checks), the
nonlinear substep uses an explicit midpoint rule, and the step size is
controlled by step-doubling with an embedded error estimate.

Conventions: envelopes A_k(t) in sqrt(W) on a uniform power-of-two time
grid; spectra are ifft(A) so a bin at detuning W evolves as exp(-i W t);
bin energy is T |A~|^2 with T the window length. Vacuum fluctuations are
seeded as zero-mean circular Gaussian noise with hbar*omega expected
energy per spectral bin per mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.constants import hbar as HBAR
from scipy.interpolate import CubicSpline

from .coupling import CouplingTensor
from .dispersion import DispersionTable, dispersion_table
from .modes import SolverGrid, lambda_from_omega, omega_from_lambda
from .profiles import IndexProfile


class PropagationError(RuntimeError):
    def __init__(self, message, z_m=None, state=None):
        super().__init__(message)
        self.z_m = z_m
        self.state = state


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid; n_points must be a power of two."""

    n_points: int
    dt_s: float

    def __post_init__(self):
        if self.n_points & (self.n_points - 1) or self.n_points < 4:
            raise ValueError("n_points must be a power of two")

    @property
    def span_s(self) -> float:
        return self.n_points * self.dt_s

    def times(self) -> np.ndarray:
        return (np.arange(self.n_points) - self.n_points // 2) * self.dt_s

    def detunings(self) -> np.ndarray:
        """Angular-frequency offsets of the spectral bins (rad/s)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dt_s)

    @classmethod
    def for_bandwidth(cls, half_bandwidth_rad_s: float, n_points: int) -> "TimeGrid":
        return cls(n_points, np.pi / half_bandwidth_rad_s)


@dataclass
class FieldState:
    """Complex modal envelopes at position z."""

    labels: list[str]
    a: np.ndarray            # (K, N) complex, sqrt(W)
    grid: TimeGrid
    omega0: float            # carrier (rad/s)
    z_m: float = 0.0

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=complex)
        if self.a.shape != (len(self.labels), self.grid.n_points):
            raise ValueError("field array shape does not match labels/grid")

    def copy(self) -> "FieldState":
        return FieldState(list(self.labels), self.a.copy(), self.grid,
                          self.omega0, self.z_m)

    def spectrum(self) -> np.ndarray:
        return np.fft.ifft(self.a, axis=1)

    def spectral_energy(self) -> np.ndarray:
        """(K, N) energy per spectral bin, joules."""
        return self.grid.span_s * np.abs(self.spectrum()) ** 2

    def energy_per_mode(self) -> np.ndarray:
        return np.sum(np.abs(self.a) ** 2, axis=1) * self.grid.dt_s

    def total_energy(self) -> float:
        return float(np.sum(self.energy_per_mode()))

    def band_energy(self, lambda_lo_m: float, lambda_hi_m: float,
                    labels: list[str] | None = None) -> float:
        """Energy (J) in a wavelength band, summed over the selected modes."""
        omega = self.omega0 + self.grid.detunings()
        with np.errstate(divide="ignore"):
            lam = np.where(omega > 0, 2.0 * np.pi * C_LIGHT / np.maximum(omega, 1.0), np.inf)
        lo, hi = min(lambda_lo_m, lambda_hi_m), max(lambda_lo_m, lambda_hi_m)
        sel = (lam >= lo) & (lam <= hi)
        se = self.spectral_energy()
        rows = [self.labels.index(lab) for lab in labels] if labels else range(len(self.labels))
        return float(sum(np.sum(se[r][sel]) for r in rows))


_GAUSSIAN_FWHM_FACTOR = 2.0 * np.sqrt(np.log(2.0))  # FWHM / (sqrt(2) T_g)


@dataclass(frozen=True)
class PumpSpec:
    """Gaussian pump pulse, A(t) = sqrt(P0) exp(-t^2 / (2 Tg^2)).

    ``duration_fs`` is the intensity FWHM (the number a laser datasheet
    quotes); the envelope parameter is Tg = FWHM / (2 sqrt(ln 2)).
    """

    duration_fs: float           # intensity FWHM
    energy_nj: float
    center_nm: float
    rep_rate_mhz: float
    launch: tuple = (("LP01", 1.0),)

    def __post_init__(self):
        if self.duration_fs <= 0:
            raise ValueError("pulse duration must be positive")
        if self.energy_nj < 0:
            raise ValueError("pulse energy must be nonnegative")
        total = sum(frac for _, frac in self.launch)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"launch distribution sums to {total}, expected 1")

    @property
    def t0_s(self) -> float:
        """Gaussian envelope parameter Tg (seconds)."""
        return self.duration_fs * 1e-15 / _GAUSSIAN_FWHM_FACTOR

    @property
    def peak_power_w(self) -> float:
        return self.energy_nj * 1e-9 / (np.sqrt(np.pi) * self.t0_s)

    @property
    def omega0(self) -> float:
        return omega_from_lambda(self.center_nm * 1e-9)

    @property
    def rep_rate_hz(self) -> float:
        return self.rep_rate_mhz * 1e6


def dispersion_length_m(duration_fs: float, beta2_s2_per_m: float) -> float:
    """L_D = T0^2 / |beta2|."""
    return (duration_fs * 1e-15) ** 2 / abs(beta2_s2_per_m)


class FiberMedium:
    """Dispersion and nonlinear coupling data consumed by the propagator.

    Dispersion comes either from a sampled table (exact spline application,
    linear continuation beyond each mode's guided range) or from per-mode
    Taylor coefficients around the carrier.
    """

    def __init__(self, labels: list[str], tensor: CouplingTensor, omega0: float,
                 table: DispersionTable | None = None,
                 taylor: dict | None = None,
                 n2_m2_per_w: float = 2.6e-20,
                 reference_mode: str | None = None,
                 frame_tau_s_per_m: float | None = None):
        if (table is None) == (taylor is None):
            raise ValueError("supply exactly one of table or taylor")
        self.labels = list(labels)
        self.tensor = tensor
        self.omega0 = omega0
        self.table = table
        self.taylor = taylor
        self.n2 = n2_m2_per_w
        self.reference_mode = reference_mode or self.labels[0]
        # co-moving frame slowness; None tracks the reference mode. Placing
        # it midway between the sideband slownesses halves the walk-off
        # excursion and with it the required time window.
        self.frame_tau = frame_tau_s_per_m
        for lab in self.labels:
            if lab not in tensor.labels:
                raise ValueError(f"mode {lab} missing from the coupling tensor")
        self._nl_entries = self._nonzero_entries()

    def _nonzero_entries(self):
        phys = self.tensor.physical()
        idx = [self.tensor.index(lab) for lab in self.labels]
        sub = phys[np.ix_(idx, idx, idx, idx)]
        thresh = 1e-14 * np.max(np.abs(sub))
        entries = []
        for k in range(len(idx)):
            for l in range(len(idx)):
                for m in range(len(idx)):
                    for n in range(len(idx)):
                        if abs(sub[k, l, m, n]) > thresh:
                            entries.append((k, l, m, n, sub[k, l, m, n]))
        return entries

    def _bare_label(self, label: str) -> str:
        return label[:-1] if label[-1] in "ab" else label

    def linear_phase(self, grid: TimeGrid) -> np.ndarray:
        """(K, N) array D_k(W) = beta_k(w0+W) - beta_ref(w0) - tau_ref W."""
        Om = grid.detunings()
        omega = self.omega0 + Om
        if self.taylor is not None:
            ref = np.asarray(self.taylor[self._bare_label(self.reference_mode)], dtype=float)
            beta0_ref = ref[0]
            beta1_ref = self.frame_tau if self.frame_tau is not None else (
                ref[1] if len(ref) > 1 else 0.0)
            out = np.empty((len(self.labels), grid.n_points))
            for i, lab in enumerate(self.labels):
                coeffs = np.asarray(self.taylor[self._bare_label(lab)], dtype=float)
                d = np.zeros_like(Om)
                fact = 1.0
                for order, b in enumerate(coeffs):
                    if order > 0:
                        fact *= order
                    d += b * Om**order / fact
                out[i] = d - beta0_ref - beta1_ref * Om
            return out

        splines = {}
        for lab in {self._bare_label(x) for x in self.labels}:
            md = self.table.modes[lab]
            good = md.guided_mask()
            if good.sum() < 4:
                raise PropagationError(f"mode {lab}: too few guided dispersion samples")
            splines[lab] = CubicSpline(md.omega[good], md.beta[good])

        ref_spline = splines[self._bare_label(self.reference_mode)]
        beta0_ref = float(ref_spline(self.omega0))
        beta1_ref = self.frame_tau if self.frame_tau is not None \
            else float(ref_spline(self.omega0, 1))

        out = np.empty((len(self.labels), grid.n_points))
        for i, lab in enumerate(self.labels):
            sp = splines[self._bare_label(lab)]
            lo, hi = sp.x[0], sp.x[-1]
            beta = np.empty_like(Om)
            inside = (omega >= lo) & (omega <= hi)
            beta[inside] = sp(omega[inside])
            # C1 linear continuation outside the guided sample range
            below, above = omega < lo, omega > hi
            if below.any():
                beta[below] = sp(lo) + sp(lo, 1) * (omega[below] - lo)
            if above.any():
                beta[above] = sp(hi) + sp(hi, 1) * (omega[above] - hi)
            out[i] = beta - beta0_ref - beta1_ref * Om
        return out

    def gamma0(self) -> float:
        """Common nonlinear prefactor n2 w0 / c (m/W)."""
        return self.n2 * self.omega0 / C_LIGHT


def medium_from_profile(profile: IndexProfile, labels: list[str], omega0: float,
                        grid: TimeGrid, n_samples: int = 48,
                        n2_m2_per_w: float = 2.6e-20,
                        reference_mode: str | None = None,
                        solver_grid: SolverGrid = SolverGrid(),
                        tensor: CouplingTensor | None = None,
                        frame_tau_s_per_m: float | None = None) -> FiberMedium:
    """Build the propagation medium from a fiber profile.

    beta(w) is tabulated over the simulation band (clipped to the material
    model's validity) and the coupling tensor is evaluated from the mode
    profiles at the carrier wavelength.
    """
    from .materials import MaterialModelError
    from .modes import expand_orientations, solve_modes

    Om = grid.detunings()
    om_lo = float(omega0 + Om.min())
    om_hi = float(omega0 + Om.max())
    lam_lo = lambda_from_omega(om_hi)
    lam_hi = lambda_from_omega(max(om_lo, 1.0)) if om_lo > 0 else 6.7e-6
    lam_lo = max(lam_lo, 0.215e-6)
    lam_hi = min(lam_hi, 6.6e-6)
    bare = sorted({lab[:-1] if lab[-1] in "ab" else lab for lab in labels})
    table = dispersion_table(profile, bare, (lam_lo, lam_hi), n_samples,
                             grid=solver_grid,
                             reference=bare[0] if "LP01" not in bare else "LP01")
    if tensor is None:
        modes0 = expand_orientations(solve_modes(profile, lambda_from_omega(omega0),
                                                 solver_grid))
        modes0 = [m for m in modes0 if m.label in labels]
        missing = set(labels) - {m.label for m in modes0}
        if missing:
            raise PropagationError(f"modes {sorted(missing)} not guided at the carrier")
        tensor = build_tensor_for(modes0, profile)
    return FiberMedium(labels, tensor, omega0, table=table,
                       n2_m2_per_w=n2_m2_per_w, reference_mode=reference_mode,
                       frame_tau_s_per_m=frame_tau_s_per_m)


def build_tensor_for(modes, profile: IndexProfile) -> CouplingTensor:
    from .coupling import build_coupling_tensor

    return build_coupling_tensor(modes, profile.core_radius_m)


def make_pump_state(pump: PumpSpec, grid: TimeGrid, labels: list[str]) -> FieldState:
    a = np.zeros((len(labels), grid.n_points), dtype=complex)
    t = grid.times()
    envelope = np.sqrt(pump.peak_power_w) * np.exp(-(t**2) / (2.0 * pump.t0_s**2))
    for lab, frac in pump.launch:
        if lab not in labels:
            raise ValueError(f"launch mode {lab} not among simulated modes {labels}")
        a[labels.index(lab)] += np.sqrt(frac) * envelope
    return FieldState(list(labels), a, grid, pump.omega0)


def seed_vacuum(grid: TimeGrid, labels: list[str], omega0: float,
                rng: np.random.Generator,
                omega_range: tuple[float, float] | None = None) -> FieldState:
    """Vacuum-fluctuation field: hbar*omega expected energy per bin per mode.

    Bins outside ``omega_range`` (or at nonpositive absolute frequency)
    are left dark. Identical generator state gives identical noise.
    """
    omega = omega0 + grid.detunings()
    active = omega > 0
    if omega_range is not None:
        active &= (omega >= omega_range[0]) & (omega <= omega_range[1])
    K, N = len(labels), grid.n_points
    sigma = np.sqrt(HBAR * np.maximum(omega, 0.0) / (2.0 * grid.span_s))
    spec = rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))
    spec *= sigma * active
    return FieldState(list(labels), np.fft.fft(spec, axis=1), grid, omega0)


def add_states(a: FieldState, b: FieldState) -> FieldState:
    if a.labels != b.labels or a.grid != b.grid:
        raise ValueError("states live on different grids or mode sets")
    return FieldState(list(a.labels), a.a + b.a, a.grid, a.omega0, a.z_m)


# -- split-step integrator --------------------------------------------------


class _Stepper:
    def __init__(self, medium: FiberMedium, state: FieldState):
        self.d = medium.linear_phase(state.grid)     # (K, N)
        self.gamma0 = medium.gamma0()
        self.entries = medium._nl_entries

    def nl_derivative(self, a: np.ndarray) -> np.ndarray:
        """i gamma0 sum S_klmn A_l A_m A_n*, accumulated in a fixed entry
        order so results do not depend on BLAS threading."""
        out = np.zeros_like(a)
        conj = np.conj(a)
        for k, l, m, n, s in self.entries:
            out[k] += s * (a[l] * a[m] * conj[n])
        return 1j * self.gamma0 * out

    def nl_substep(self, a: np.ndarray, dz: float) -> np.ndarray:
        # explicit midpoint: local O(dz^3), same order as the splitting
        k1 = self.nl_derivative(a)
        k2 = self.nl_derivative(a + 0.5 * dz * k1)
        return a + dz * k2

    def linear_substep(self, a: np.ndarray, dz: float) -> np.ndarray:
        spec = np.fft.ifft(a, axis=1)
        spec *= np.exp(1j * self.d * dz)
        return np.fft.fft(spec, axis=1)

    def strang(self, a: np.ndarray, dz: float) -> np.ndarray:
        a = self.linear_substep(a, 0.5 * dz)
        a = self.nl_substep(a, dz)
        return self.linear_substep(a, 0.5 * dz)


def propagate(state: FieldState, medium: FiberMedium, length_m: float,
              tol: float = 1e-6, dz_initial_m: float | None = None,
              fixed_dz_m: float | None = None,
              checkpoints_m: list[float] | None = None,
              max_steps: int = 2_000_000):
    """Propagate ``state`` over ``length_m``.

    Returns (final_state, checkpoint_states). With ``fixed_dz_m`` the step
    size is constant (no error control); otherwise step-doubling drives an
    adaptive controller targeting relative local error ``tol``.
    """
    if state.labels != medium.labels:
        raise ValueError("state and medium mode sets differ")
    stepper = _Stepper(medium, state)
    z = 0.0
    a = state.a.copy()
    marks = sorted(m for m in (checkpoints_m or []) if 0.0 < m <= length_m)
    saved = []
    if checkpoints_m and any(m == 0.0 for m in checkpoints_m):
        saved.append(FieldState(list(state.labels), a.copy(), state.grid,
                                state.omega0, 0.0))

    nonlinear = medium.n2 != 0.0 and len(stepper.entries) > 0
    dz = fixed_dz_m or dz_initial_m or min(length_m / 64.0, 5e-3)
    min_dz = max(length_m * 1e-12, 1e-12)
    steps = 0

    def _emit(zpos):
        saved.append(FieldState(list(state.labels), a.copy(), state.grid,
                                state.omega0, zpos))

    while z < length_m - 1e-15 * length_m:
        target = marks[0] if marks else length_m
        dz_step = min(dz, target - z, length_m - z)
        if dz_step <= 0:
            marks.pop(0)
            continue
        if not nonlinear:
            a_new = stepper.linear_substep(a, dz_step)
            err = 0.0
        elif fixed_dz_m is not None:
            a_new = stepper.strang(a, dz_step)
            err = 0.0
        else:
            coarse = stepper.strang(a, dz_step)
            half = stepper.strang(a, 0.5 * dz_step)
            a_new = stepper.strang(half, 0.5 * dz_step)
            scale = np.linalg.norm(a_new)
            err = np.linalg.norm(a_new - coarse) / scale if scale > 0 else 0.0
            if not np.isfinite(err):
                raise PropagationError(
                    f"field went non-finite at z = {z:.6f} m (dz = {dz_step:.3e})",
                    z_m=z, state=FieldState(list(state.labels), a.copy(),
                                            state.grid, state.omega0, z))
            if err > tol:
                dz = max(dz_step * max(0.3, 0.9 * (tol / err) ** (1.0 / 3.0)), min_dz)
                if dz <= min_dz * 1.0001:
                    raise PropagationError(
                        f"step size underflow at z = {z:.6f} m "
                        f"(local error {err:.3e} at dz = {dz_step:.3e})",
                        z_m=z, state=FieldState(list(state.labels), a.copy(),
                                                state.grid, state.omega0, z))
                continue
        if not np.all(np.isfinite(a_new)):
            raise PropagationError(
                f"field went non-finite at z = {z:.6f} m", z_m=z,
                state=FieldState(list(state.labels), a.copy(), state.grid,
                                 state.omega0, z))
        a = a_new
        z += dz_step
        steps += 1
        if steps > max_steps:
            raise PropagationError(f"exceeded {max_steps} steps", z_m=z)
        if nonlinear and fixed_dz_m is None and err > 0:
            dz = dz_step * min(2.0, max(0.3, 0.9 * (tol / max(err, 1e-16)) ** (1.0 / 3.0)))
        if marks and abs(z - marks[0]) <= 1e-12 * max(marks[0], 1.0):
            _emit(marks.pop(0))

    final = FieldState(list(state.labels), a, state.grid, state.omega0, length_m)
    return final, saved


# -- experiments ------------------------------------------------------------


@dataclass
class PairRateResult:
    z_m: np.ndarray
    pairs_per_s: np.ndarray
    per_realization: np.ndarray     # (R, len(z))
    signal_pairs_per_s: np.ndarray
    idler_band_m: tuple[float, float]
    signal_band_m: tuple[float, float]
    dispersion_length_m: float | None = None

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            if self.dispersion_length_m is not None:
                fh.write(f"# pump_dispersion_length_m={self.dispersion_length_m:.6f}\n")
            fh.write("z_m,pairs_per_s\n")
            for z, r in zip(self.z_m, self.pairs_per_s):
                fh.write(f"{z:.6f},{r:.6e}\n")


def pair_rate_vs_length(pump: PumpSpec, medium: FiberMedium, grid: TimeGrid,
                        max_length_m: float, checkpoint_every_m: float,
                        signal_band_m: tuple[float, float],
                        idler_band_m: tuple[float, float],
                        n_realizations: int = 4, seed: int = 0,
                        tol: float = 1e-5,
                        fixed_dz_m: float | None = None,
                        seed_omega_range: tuple[float, float] | None = None) -> PairRateResult:
    """Vacuum-seeded pair generation rate versus fiber length.

    The rate at each checkpoint is the ensemble-averaged idler-band energy
    gain per pulse over the seed baseline, divided by the idler photon
    energy and multiplied by the repetition rate.
    """
    pump_state = make_pump_state(pump, grid, medium.labels)
    for name, band in (("signal", signal_band_m), ("idler", idler_band_m)):
        pump_in_band = pump_state.band_energy(*band)
        if pump_in_band > 1e-4 * pump_state.total_energy():
            raise PropagationError(
                f"{name} band {band} overlaps the pump spectrum "
                f"({pump_in_band:.3e} J of pump energy inside)")

    marks = list(np.arange(checkpoint_every_m, max_length_m + 1e-9,
                           checkpoint_every_m))
    if not marks or abs(marks[-1] - max_length_m) > 1e-9:
        marks.append(max_length_m)
    omega_i = 0.5 * (omega_from_lambda(idler_band_m[0]) + omega_from_lambda(idler_band_m[1]))
    omega_s = 0.5 * (omega_from_lambda(signal_band_m[0]) + omega_from_lambda(signal_band_m[1]))

    seeds = np.random.SeedSequence(seed).spawn(n_realizations)
    idler = np.zeros((n_realizations, len(marks) + 1))
    signal = np.zeros_like(idler)
    for r in range(n_realizations):
        rng = np.random.default_rng(seeds[r])
        state = add_states(pump_state,
                           seed_vacuum(grid, medium.labels, pump.omega0, rng,
                                       omega_range=seed_omega_range))
        base_i = state.band_energy(*idler_band_m)
        base_s = state.band_energy(*signal_band_m)
        final, saved = propagate(state, medium, max_length_m, tol=tol,
                                 fixed_dz_m=fixed_dz_m, checkpoints_m=marks)
        states = saved if abs(saved[-1].z_m - max_length_m) < 1e-9 else saved + [final]
        for j, st in enumerate(states):
            idler[r, j + 1] = st.band_energy(*idler_band_m) - base_i
            signal[r, j + 1] = st.band_energy(*signal_band_m) - base_s

    z = np.concatenate(([0.0], marks))
    rep = pump.rep_rate_hz
    pairs = idler.mean(axis=0) / (HBAR * omega_i) * rep
    spairs = signal.mean(axis=0) / (HBAR * omega_s) * rep
    return PairRateResult(z_m=z, pairs_per_s=pairs,
                          per_realization=idler / (HBAR * omega_i) * rep,
                          signal_pairs_per_s=spairs,
                          idler_band_m=idler_band_m, signal_band_m=signal_band_m)


def spectra_to_csv(state: FieldState, rep_rate_hz: float, path) -> None:
    """Per-mode average spectral power, dBm per bin, ordered by wavelength."""
    omega = state.omega0 + state.grid.detunings()
    se = state.spectral_energy()
    order = np.argsort(omega)
    with open(path, "w") as fh:
        fh.write("lambda_nm,mode,spectral_power_dbm\n")
        for i, lab in enumerate(state.labels):
            for j in order:
                if omega[j] <= 0:
                    continue
                p_w = se[i, j] * rep_rate_hz
                dbm = 10.0 * np.log10(max(p_w / 1e-3, 1e-30))
                lam_nm = lambda_from_omega(omega[j]) * 1e9
                fh.write(f"{lam_nm:.4f},{lab},{dbm:.4f}\n")
