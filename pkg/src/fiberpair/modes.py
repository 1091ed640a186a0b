"""LP-mode eigensolver for radially symmetric fiber profiles.

The scalar wave equation for the radial profile F(r) of mode LP_lm,

    F'' + F'/r + (k0^2 n^2(r) - l^2/r^2) F = beta^2 F,

is discretized per azimuthal order l with a conservative finite-difference
scheme on a half-offset radial grid. Symmetrizing with the sqrt(r) weight
yields a real symmetric tridiagonal eigenproblem for beta^2, solved with
LAPACK over the guided range (k0 n_clad, k0 n_max). The flux through r=0
vanishes identically on the half-offset grid, so no axis regularization
is needed for l = 0, and the core-clad interface enters through exact
r dr cell averages of n^2 (see IndexProfile.n2_cell_average).

An independent characteristic-equation oracle for ideal step profiles
(Bessel J/K matching at the interface) is provided for verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq
from scipy.special import jn_zeros, jv, kve

from .profiles import IndexProfile

_MAX_AZIMUTHAL = 60
_GUIDED_MARGIN = 1e-12  # relative margin above the cladding light line


class ModeSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverGrid:
    """Radial discretization. points_per_radius counts nodes inside the core."""

    points_per_radius: int = 320
    r_max_factor: float | None = None  # None: 10 for step kinds, 2.2 for graded

    def __post_init__(self):
        if self.points_per_radius < 200:
            raise ModeSolverError(
                f"grid must resolve the core with >= 200 radial points, "
                f"got {self.points_per_radius}"
            )

    def resolve(self, profile: IndexProfile) -> tuple[float, int]:
        factor = self.r_max_factor
        if factor is None:
            factor = 2.2 if profile.kind == "parabolic-graded" else 10.0
        h = profile.core_radius_m / self.points_per_radius
        n_points = int(round(factor * self.points_per_radius))
        return h, n_points


@dataclass(frozen=True)
class LPMode:
    """One guided LP mode at one or more frequency samples.

    beta_samples maps angular frequency (rad/s) to propagation constant
    (rad/m). The radial field is L2-normalized on the r dr measure.
    orientation is 'none' for l = 0; l >= 1 modes come in degenerate
    'a' (cos l*phi) and 'b' (sin l*phi) orientations.
    """

    l: int
    m: int
    orientation: str = "none"
    beta_samples: dict = field(default_factory=dict)
    r_grid: np.ndarray | None = None
    radial_field: np.ndarray | None = None

    @property
    def group_number(self) -> int:
        """Principal mode number g = 2m + l - 1 (graded-index convention)."""
        return 2 * self.m + self.l - 1

    @property
    def label(self) -> str:
        suffix = self.orientation if self.orientation in ("a", "b") else ""
        return f"LP{self.l}{self.m}{suffix}"

    def beta(self, omega: float | None = None) -> float:
        if omega is None:
            if len(self.beta_samples) != 1:
                raise ValueError("mode has multiple beta samples; specify omega")
            return next(iter(self.beta_samples.values()))
        try:
            return self.beta_samples[omega]
        except KeyError:
            # tolerate float round-trip through wavelength
            for om, b in self.beta_samples.items():
                if abs(om - omega) <= 1e-9 * abs(omega):
                    return b
            raise

    def with_orientation(self, orientation: str) -> "LPMode":
        return LPMode(self.l, self.m, orientation, self.beta_samples,
                      self.r_grid, self.radial_field)


def parse_mode_label(label: str) -> tuple[int, int, str]:
    """'LP11a' -> (1, 1, 'a'); 'LP02' -> (0, 2, 'none')."""
    s = label.strip()
    if not s.upper().startswith("LP") or len(s) < 4:
        raise ValueError(f"bad LP mode label {label!r}")
    body = s[2:]
    orientation = "none"
    if body[-1] in "ab":
        orientation = body[-1]
        body = body[:-1]
    if len(body) != 2 or not body.isdigit():
        raise ValueError(f"bad LP mode label {label!r}")
    l, m = int(body[0]), int(body[1])
    if m < 1:
        raise ValueError(f"radial index must be >= 1 in {label!r}")
    if l == 0 and orientation != "none":
        raise ValueError(f"l = 0 modes carry no orientation: {label!r}")
    return l, m, orientation


def omega_from_lambda(lambda_m: float) -> float:
    return 2.0 * np.pi * C_LIGHT / lambda_m


def lambda_from_omega(omega: float) -> float:
    return 2.0 * np.pi * C_LIGHT / omega


# -- finite-difference eigensolve -----------------------------------------


@lru_cache(maxsize=8192)
def _solve_azimuthal(profile: IndexProfile, lambda_m: float, l: int,
                     grid: SolverGrid) -> tuple[tuple[float, ...], np.ndarray, np.ndarray]:
    """All guided beta (descending) and radial fields for azimuthal order l."""
    h, n_points = grid.resolve(profile)
    k0 = 2.0 * np.pi / lambda_m
    edges = h * np.arange(n_points + 1)
    nodes = edges[:-1] + 0.5 * h

    n2 = profile.n2_cell_average(edges, lambda_m)
    diag = -2.0 / h**2 + k0**2 * n2
    if l > 0:
        diag = diag - l**2 / nodes**2
    # off-diagonal couples j and j+1 through the shared edge at (j+1)h
    off = edges[1:-1] / (h**2 * np.sqrt(nodes[:-1] * nodes[1:]))

    lo = (k0 * profile.n_clad(lambda_m)) ** 2 * (1.0 + _GUIDED_MARGIN)
    hi = (k0 * profile.n_max(lambda_m)) ** 2
    if lo >= hi:
        return (), nodes, np.empty((0, n_points))
    try:
        vals, vecs = eigh_tridiagonal(diag, off, select="v", select_range=(lo, hi))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ModeSolverError(
            f"eigensolve failed for l={l}, lambda={lambda_m * 1e9:.1f} nm, "
            f"grid h={h:.3e} m, {n_points} points"
        ) from exc
    if vals.size == 0:
        return (), nodes, np.empty((0, n_points))

    order = np.argsort(vals)[::-1]  # descending beta^2 => m = 1, 2, ...
    betas = tuple(float(np.sqrt(vals[i])) for i in order)
    fields = np.empty((len(order), n_points))
    for row, i in enumerate(order):
        f = vecs[:, i] / np.sqrt(nodes)
        norm = np.sqrt(np.sum(f**2 * nodes) * h)
        f = f / norm
        lead = f[np.argmax(np.abs(f) > 1e-3 * np.max(np.abs(f)))]
        if lead < 0:
            f = -f
        fields[row] = f
    return betas, nodes, fields


def solve_modes(profile: IndexProfile, lambda_m: float,
                grid: SolverGrid = SolverGrid()) -> list[LPMode]:
    """All guided LP modes of ``profile`` at one wavelength.

    Returns one entry per (l, m) pair (orientations not expanded), sorted
    by descending propagation constant. An empty list means the profile
    guides nothing at this wavelength.
    """
    omega = omega_from_lambda(lambda_m)
    modes: list[LPMode] = []
    for l in range(_MAX_AZIMUTHAL + 1):
        betas, nodes, fields = _solve_azimuthal(profile, lambda_m, l, grid)
        if not betas:
            break
        for m_idx, beta in enumerate(betas):
            modes.append(LPMode(
                l=l, m=m_idx + 1, orientation="none",
                beta_samples={omega: beta},
                r_grid=nodes, radial_field=fields[m_idx].copy(),
            ))
    modes.sort(key=lambda mm: -mm.beta(omega))
    return modes


def find_mode(modes: list[LPMode], label: str) -> LPMode | None:
    l, m, _ = parse_mode_label(label)
    for mode in modes:
        if mode.l == l and mode.m == m:
            return mode
    return None


def expand_orientations(modes: list[LPMode]) -> list[LPMode]:
    """Duplicate l >= 1 modes into their degenerate a/b orientations."""
    out = []
    for mode in modes:
        if mode.l == 0:
            out.append(mode)
        else:
            out.append(mode.with_orientation("a"))
            out.append(mode.with_orientation("b"))
    return out


# -- step-index characteristic-equation oracle -----------------------------


def v_number(profile: IndexProfile, lambda_m: float) -> float:
    ncl = profile.n_clad(lambda_m)
    nco = profile.n_core(lambda_m)
    return 2.0 * np.pi / lambda_m * profile.core_radius_m * np.sqrt(nco**2 - ncl**2)


def step_mode_count(profile: IndexProfile, lambda_m: float) -> int:
    """Number of guided LP(l,m) modes predicted by the Bessel-zero cutoffs.

    Orientations are not counted separately. Cutoff of LP_lm sits at the
    m-th zero of J_{l-1} (u = 0 counting as the first zero for l = 0).
    """
    V = v_number(profile, lambda_m)
    count = 0
    for l in range(_MAX_AZIMUTHAL + 1):
        if l == 0:
            cuts = np.concatenate(([0.0], jn_zeros(1, 40)))
        else:
            cuts = jn_zeros(l - 1, 40)
        n_guided = int(np.sum(cuts < V))
        if n_guided == 0:
            break
        count += n_guided
    return count


def _char_eq(u: float, V: float, l: int) -> float:
    w = np.sqrt(max(V**2 - u**2, 1e-300))
    lhs = u * jv(l + 1, u) / jv(l, u)
    rhs = w * kve(l + 1, w) / kve(l, w)
    return lhs - rhs


def analytic_step_index_oracle(profile: IndexProfile,
                               lambda_m: float) -> list[tuple[int, int, float]]:
    """Exact LP propagation constants of an ideal step profile.

    Solves u J_{l+1}(u)/J_l(u) = w K_{l+1}(w)/K_l(w) with u^2 + w^2 = V^2
    by bracketed root finding between consecutive zeros of J_l. Returns
    (l, m, beta) tuples sorted by descending beta. Only valid for
    kind='step' (no dip).
    """
    if profile.kind != "step":
        raise ValueError("characteristic-equation oracle requires a pure step profile")
    V = v_number(profile, lambda_m)
    k0 = 2.0 * np.pi / lambda_m
    nco = profile.n_core(lambda_m)
    R = profile.core_radius_m
    eps = 1e-9 * max(V, 1.0)

    results = []
    for l in range(_MAX_AZIMUTHAL + 1):
        zeros = jn_zeros(l, 60)
        brackets = [0.0] + [z for z in zeros if z < V] + [V]
        roots = []
        for lo, hi in zip(brackets[:-1], brackets[1:]):
            a, b = lo + eps, hi - eps
            if b <= a:
                continue
            fa, fb = _char_eq(a, V, l), _char_eq(b, V, l)
            if not np.isfinite(fa) or not np.isfinite(fb) or fa * fb > 0:
                continue
            try:
                u = brentq(_char_eq, a, b, args=(V, l), xtol=1e-13, rtol=1e-15)
            except ValueError as exc:
                raise ModeSolverError(
                    f"root bracketing failed for l={l} on u in [{a:.6f}, {b:.6f}], V={V:.6f}"
                ) from exc
            roots.append(u)
        if not roots:
            break
        for m_idx, u in enumerate(sorted(roots)):
            beta = np.sqrt((k0 * nco) ** 2 - (u / R) ** 2)
            results.append((l, m_idx + 1, float(beta)))
    results.sort(key=lambda t: -t[2])
    return results
