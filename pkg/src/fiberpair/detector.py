"""Monte Carlo of the mode-to-time sorter and the detection chain.

Each pump pulse emits a photon pair with probability mu; the pair samples
a (signal_mode, idler_mode) term from the two-photon state, propagates
down the sorter fiber picking up its modal group delay, and reaches two
detectors with finite efficiency, Gaussian timing jitter and Poisson
background counts. Arrival stamps mirror the experiment: the chromatic
signal-idler offset is applied and then removed again by the configured
electronic delay on the idler channel.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .dispersion import DispersionTable
from .modes import parse_mode_label
from .pairstate import TwoPhotonState
from .tags import TagFileHeader, TimeTagStream


class DetectionConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DetectionConfig:
    """Sorter geometry, detector properties and acquisition settings."""

    fiber_length_km: float = 1.0
    jitter_sigma_signal_ps: float = 400.0
    jitter_sigma_idler_ps: float = 400.0
    efficiency_signal: float = 0.5
    efficiency_idler: float = 0.15
    idler_electronic_delay_ns: float | None = None   # None: cancel chromatic offset
    rep_rate_mhz: float = 80.0
    background_signal_cps: float = 0.0
    background_idler_cps: float = 0.0
    background_offset_ps: float = 0.0    # shifts background arrival window (time-offset mode)
    pair_probability_per_pulse: float = 1e-3
    generation_spread_ps: float = 200.0
    bin_width_ps: float = 100.0
    acquisition_s: float = 1.0

    def __post_init__(self):
        if not 0 <= self.efficiency_signal <= 1 or not 0 <= self.efficiency_idler <= 1:
            raise DetectionConfigError("efficiencies must lie in [0, 1]")
        if self.pair_probability_per_pulse < 0:
            raise DetectionConfigError("pair probability must be nonnegative")
        for name in ("jitter_sigma_signal_ps", "jitter_sigma_idler_ps",
                     "background_signal_cps", "background_idler_cps",
                     "generation_spread_ps", "fiber_length_km",
                     "rep_rate_mhz", "bin_width_ps", "acquisition_s"):
            if getattr(self, name) < 0:
                raise DetectionConfigError(f"{name} must be nonnegative")
        if self.pair_probability_per_pulse >= 0.1:
            warnings.warn("pair probability per pulse >= 0.1: multi-pair effects "
                          "are not modeled", stacklevel=2)

    @property
    def rep_period_ps(self) -> float:
        return 1e6 / self.rep_rate_mhz

    def n_pulses(self) -> int:
        return int(round(self.acquisition_s * self.rep_rate_mhz * 1e6))


@dataclass(frozen=True)
class ModeSwap:
    """Inject mode mixing at position z: affected signal photons finish the
    fiber in the other basis mode."""

    z_km: float
    probability: float
    channel: str = "signal"


def _bare(label: str) -> str:
    l, m, _ = parse_mode_label(label)
    return f"LP{l}{m}"


def simulate_events(state: TwoPhotonState, delays: DispersionTable,
                    cfg: DetectionConfig, seed: int = 0,
                    mode_swap: ModeSwap | None = None) -> TimeTagStream:
    """Generate the detector tag stream for one acquisition.

    Timestamps are measured against the pump clock with the common fiber
    transit of the reference mode at the signal wavelength removed; the
    idler channel additionally carries the electronic delay (by default
    sized to cancel the signal-idler chromatic offset, as in the sorter
    experiment). A fixed seed gives a bit-identical stream.
    """
    rng = np.random.default_rng(seed)
    L_m = cfg.fiber_length_km * 1e3
    period = cfg.rep_period_ps
    n_pulses = cfg.n_pulses()
    lam_s, lam_i = state.lambda_s_m, state.lambda_i_m

    # arrival delays in ps, relative to the reference mode at lambda_s
    ps_per_m = 1e12
    chromatic_ps = (delays.tau(delays.reference, lam_i)
                    - delays.tau(delays.reference, lam_s)) * ps_per_m * L_m
    if cfg.idler_electronic_delay_ns is None:
        electronic_ps = -chromatic_ps
    else:
        electronic_ps = cfg.idler_electronic_delay_ns * 1e3

    sig_delay = np.empty(len(state.basis))
    idl_delay = np.empty(len(state.basis))
    for j, (ms, mi) in enumerate(state.basis):
        sig_delay[j] = (delays.tau(_bare(ms), lam_s)
                        - delays.tau(delays.reference, lam_s)) * ps_per_m * L_m
        idl_delay[j] = (delays.tau(_bare(mi), lam_i)
                        - delays.tau(delays.reference, lam_i)) * ps_per_m * L_m \
            + chromatic_ps + electronic_ps

    n_pairs = rng.poisson(cfg.pair_probability_per_pulse * n_pulses)
    pulse_idx = rng.integers(0, n_pulses, n_pairs)
    pulse_idx.sort()
    terms = rng.choice(len(state.basis), size=n_pairs, p=state.probabilities)
    creation = rng.uniform(0.0, cfg.generation_spread_ps, n_pairs)

    t_sig = pulse_idx * period + creation + sig_delay[terms]
    t_idl = pulse_idx * period + creation + idl_delay[terms]

    if mode_swap is not None and len(state.basis) == 2:
        if mode_swap.channel != "signal":
            raise DetectionConfigError("mode swap is modeled on the signal channel")
        hit = rng.random(n_pairs) < mode_swap.probability
        other = 1 - terms
        frac = mode_swap.z_km * 1e3 / L_m
        t_sig_swapped = (pulse_idx * period + creation
                         + sig_delay[terms] * frac + sig_delay[other] * (1.0 - frac))
        t_sig = np.where(hit, t_sig_swapped, t_sig)

    if cfg.jitter_sigma_signal_ps > 0:
        t_sig = t_sig + rng.normal(0.0, cfg.jitter_sigma_signal_ps, n_pairs)
    if cfg.jitter_sigma_idler_ps > 0:
        t_idl = t_idl + rng.normal(0.0, cfg.jitter_sigma_idler_ps, n_pairs)

    keep_s = rng.random(n_pairs) < cfg.efficiency_signal
    keep_i = rng.random(n_pairs) < cfg.efficiency_idler
    t_sig = t_sig[keep_s]
    t_idl = t_idl[keep_i]

    acq_ps = n_pulses * period
    bg = {}
    for role, rate in (("signal", cfg.background_signal_cps),
                       ("idler", cfg.background_idler_cps)):
        n_bg = rng.poisson(rate * cfg.acquisition_s)
        bg[role] = rng.uniform(0.0, acq_ps, n_bg) + cfg.background_offset_ps

    sig_all = np.concatenate([t_sig, bg["signal"]])
    idl_all = np.concatenate([t_idl, bg["idler"]])

    metadata = {
        "rep_rate_mhz": cfg.rep_rate_mhz,
        "idler_electronic_delay_ns": f"{electronic_ps / 1e3:.6f}",
        "chromatic_offset_ns": f"{chromatic_ps / 1e3:.6f}",
        "fiber_length_km": cfg.fiber_length_km,
    }
    origin_shift = 0
    t_min = min(sig_all.min() if sig_all.size else 0.0,
                idl_all.min() if idl_all.size else 0.0)
    if t_min < 0:
        origin_shift = int(np.ceil(-t_min / period)) * int(round(period))
        sig_all = sig_all + origin_shift
        idl_all = idl_all + origin_shift
        metadata["origin_shift_ps"] = origin_shift

    header = TagFileHeader(channel_roles={0: "signal", 1: "idler"}, metadata=metadata)
    channels = np.concatenate([np.zeros(sig_all.size, dtype=np.uint8),
                               np.ones(idl_all.size, dtype=np.uint8)])
    times = np.concatenate([sig_all, idl_all])
    order = np.lexsort((channels, np.round(times).astype(np.int64)))
    stream = TimeTagStream(header, channels[order],
                           np.round(times).astype(np.int64)[order])
    stream.validate()
    return stream


def expected_coincidence_rate(cfg: DetectionConfig) -> float:
    """Noise-free pair coincidence rate (pairs/s reaching both detectors)."""
    return (cfg.pair_probability_per_pulse * cfg.efficiency_signal
            * cfg.efficiency_idler * cfg.rep_rate_mhz * 1e6)


def config_for_power(cfg: DetectionConfig, power_mw: float,
                     mu_per_mw2: float) -> DetectionConfig:
    """Detection config with the quadratic pump-power pair probability."""
    return replace(cfg, pair_probability_per_pulse=mu_per_mw2 * power_mw**2)
