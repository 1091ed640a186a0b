import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erf
from scipy.stats import chisquare

from fiberpair.correlate import (AnalysisError, CoincidenceHistogram2D, car,
                                 count_significant_peaks, histogram2d,
                                 optimize_postselection, pcc,
                                 power_scaling_curve)
from fiberpair.detector import (DetectionConfig, DetectionConfigError, ModeSwap,
                                expected_coincidence_rate, simulate_events)
from fiberpair.pairstate import equal_weight_state

STATE = equal_weight_state([("LP02", "LP01"), ("LP11", "LP11")], 542e-9, 968.3e-9)


def quiet_cfg(**kw):
    base = dict(jitter_sigma_signal_ps=0.0, jitter_sigma_idler_ps=0.0,
                efficiency_signal=1.0, efficiency_idler=1.0,
                generation_spread_ps=0.0, pair_probability_per_pulse=1e-3,
                acquisition_s=0.125)
    base.update(kw)
    return DetectionConfig(**base)


# -- event generation -------------------------------------------------------


def test_noiseless_stream_has_two_arrival_points(paper_delays):
    cfg = quiet_cfg()
    stream = simulate_events(STATE, paper_delays, cfg, seed=1)
    period = int(round(cfg.rep_period_ps))
    ts = np.unique(stream.times_for("signal") % period)
    ti = np.unique(stream.times_for("idler") % period)
    assert len(ts) == 2 and len(ti) == 2
    assert abs(ts[1] - ts[0]) == 1000   # Delta T_s = 1.0 ns
    assert abs(ti[1] - ti[0]) == 500    # Delta T_i = 0.5 ns


def test_zero_efficiency_leaves_only_background(paper_delays):
    cfg = quiet_cfg(efficiency_signal=0.0, efficiency_idler=0.0,
                    background_signal_cps=5e4, background_idler_cps=5e4)
    stream = simulate_events(STATE, paper_delays, cfg, seed=2)
    n_bg_expected = 2 * 5e4 * cfg.acquisition_s
    assert 0 < len(stream) < 3 * n_bg_expected


def test_fixed_seed_bit_identical(paper_delays):
    cfg = quiet_cfg(jitter_sigma_signal_ps=400.0, jitter_sigma_idler_ps=400.0,
                    background_signal_cps=1e3, background_idler_cps=1e3)
    a = simulate_events(STATE, paper_delays, cfg, seed=99)
    b = simulate_events(STATE, paper_delays, cfg, seed=99)
    assert np.array_equal(a.times_ps, b.times_ps)
    assert np.array_equal(a.channels, b.channels)


def test_config_invariants():
    with pytest.raises(DetectionConfigError):
        DetectionConfig(efficiency_signal=1.5)
    with pytest.raises(DetectionConfigError):
        DetectionConfig(background_signal_cps=-1)
    with pytest.warns(UserWarning, match="multi-pair"):
        DetectionConfig(pair_probability_per_pulse=0.2)


def test_electronic_delay_mirrors_chromatic_offset(paper_delays):
    # explicit 70 ns delay on the idler (paper value) nearly cancels the
    # chromatic offset; the residual shifts both idler peaks together
    cfg = quiet_cfg(idler_electronic_delay_ns=68.4)
    stream = simulate_events(STATE, paper_delays, cfg, seed=3)
    meta = stream.header.metadata
    assert float(meta["chromatic_offset_ns"]) == pytest.approx(-68.4, abs=0.05)
    period = int(round(cfg.rep_period_ps))
    ti = np.unique(stream.times_for("idler") % period)
    assert abs(ti[1] - ti[0]) == 500


# -- 2D histogram -----------------------------------------------------------


def test_two_delta_peak_histogram(paper_delays):
    cfg = quiet_cfg()
    stream = simulate_events(STATE, paper_delays, cfg, seed=4)
    hist = histogram2d(stream, cfg.rep_period_ps, cfg.bin_width_ps)
    assert count_significant_peaks(hist) == 2
    # all mass except rare same-period double-pair accidentals sits in two bins
    two_largest = np.sort(hist.counts.ravel())[-2:].sum()
    assert two_largest >= 0.999 * hist.total
    nz = np.argwhere(hist.counts >= 0.5 * hist.counts.max())
    assert abs(abs(hist.bin_center(nz[1][0]) - hist.bin_center(nz[0][0])) - 1000) < 1e-9
    assert abs(abs(hist.bin_center(nz[1][1], 1) - hist.bin_center(nz[0][1], 1)) - 500) < 1e-9


def test_blurred_peaks_at_paper_jitter(paper_delays):
    cfg = quiet_cfg(jitter_sigma_signal_ps=400.0, jitter_sigma_idler_ps=400.0,
                    generation_spread_ps=200.0, acquisition_s=2.0)
    stream = simulate_events(STATE, paper_delays, cfg, seed=5)
    hist = histogram2d(stream, cfg.rep_period_ps, cfg.bin_width_ps)
    assert count_significant_peaks(hist) == 2


def test_empty_stream_empty_histogram(paper_delays):
    cfg = quiet_cfg(efficiency_signal=0.0, efficiency_idler=0.0)
    stream = simulate_events(STATE, paper_delays, cfg, seed=6)
    hist = histogram2d(stream, cfg.rep_period_ps, cfg.bin_width_ps)
    assert hist.total == 0


def test_background_only_histogram_uniform(paper_delays):
    cfg = quiet_cfg(efficiency_signal=0.0, efficiency_idler=0.0,
                    background_signal_cps=5e4, background_idler_cps=5e4,
                    acquisition_s=50.0)
    stream = simulate_events(STATE, paper_delays, cfg, seed=7)
    hist = histogram2d(stream, cfg.rep_period_ps, bin_width_ps=2500.0)
    pooled = hist.counts[:5, :5].ravel()
    assert pooled.sum() > 500
    _, p_value = chisquare(pooled)
    assert p_value > 0.01


def test_histogram_deterministic(paper_delays):
    cfg = quiet_cfg(jitter_sigma_signal_ps=400.0, jitter_sigma_idler_ps=400.0)
    stream = simulate_events(STATE, paper_delays, cfg, seed=8)
    h1 = histogram2d(stream, cfg.rep_period_ps, cfg.bin_width_ps)
    h2 = histogram2d(stream, cfg.rep_period_ps, cfg.bin_width_ps)
    assert np.array_equal(h1.counts, h2.counts)


def test_histogram_csv_round_trip(tmp_path, paper_delays):
    cfg = quiet_cfg(jitter_sigma_signal_ps=400.0, jitter_sigma_idler_ps=400.0)
    stream = simulate_events(STATE, paper_delays, cfg, seed=9)
    hist = histogram2d(stream, cfg.rep_period_ps, cfg.bin_width_ps)
    path = tmp_path / "hist.csv"
    hist.to_csv(path)
    back = CoincidenceHistogram2D.from_csv(path)
    assert np.array_equal(back.counts, hist.counts)
    assert back.bin_width_ps == hist.bin_width_ps


# -- PCC --------------------------------------------------------------------


def hist_from_counts(counts, bin_width=100.0):
    counts = np.asarray(counts, dtype=np.int64)
    return CoincidenceHistogram2D(counts, bin_width, counts.shape[0] * bin_width)


def test_pcc_perfect_correlation():
    counts = np.zeros((10, 10), dtype=int)
    counts[2, 2] = counts[7, 7] = 500
    h = hist_from_counts(counts)
    assert pcc(h, (250.0, 750.0), (250.0, 750.0)) == pytest.approx(1.0)


def test_pcc_separable_product_is_zero():
    counts = np.zeros((10, 10), dtype=int)
    for i in (2, 7):
        for j in (3, 8):
            counts[i, j] = 250
    h = hist_from_counts(counts)
    assert pcc(h, (250.0, 750.0), (350.0, 850.0)) == pytest.approx(0.0, abs=1e-12)


def test_pcc_zero_variance_raises():
    counts = np.zeros((10, 10), dtype=int)
    counts[2, 2] = counts[2, 7] = 100  # all mass in one signal row
    h = hist_from_counts(counts)
    with pytest.raises(AnalysisError, match="zero variance"):
        pcc(h, (250.0, 750.0), (250.0, 750.0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=10_000), min_size=4, max_size=4),
       st.integers(min_value=2, max_value=50))
def test_pcc_bounds_and_scale_invariance(cells, scale):
    a, b, c, d = cells
    counts = np.zeros((6, 6), dtype=np.int64)
    counts[1, 1], counts[1, 4], counts[4, 1], counts[4, 4] = a, b, c, d
    h = hist_from_counts(counts)
    sel = ((150.0, 450.0), (150.0, 450.0))
    try:
        v = pcc(h, *sel)
    except AnalysisError:
        return  # degenerate marginal: contract says refuse
    assert -1.0 - 1e-12 <= v <= 1.0 + 1e-12
    h2 = hist_from_counts(counts * scale)
    assert pcc(h2, *sel) == pytest.approx(v, abs=1e-12)


def test_pcc_offset_invariance():
    counts = np.zeros((12, 12), dtype=np.int64)
    counts[2, 2], counts[2, 8], counts[8, 2], counts[8, 8] = 40, 11, 7, 55
    h1 = hist_from_counts(counts)
    v1 = pcc(h1, (250.0, 850.0), (250.0, 850.0))
    shifted = np.zeros((12, 12), dtype=np.int64)
    shifted[3:, 3:] = counts[:-3, :-3]  # shift both axes by 3 bins
    h2 = hist_from_counts(shifted)
    v2 = pcc(h2, (550.0, 1150.0), (550.0, 1150.0))
    assert v2 == pytest.approx(v1, abs=1e-12)


# -- post-selection optimizer ------------------------------------------------


def test_optimizer_noiseless_two_peaks(paper_delays):
    cfg = quiet_cfg()
    stream = simulate_events(STATE, paper_delays, cfg, seed=10)
    hist = histogram2d(stream, cfg.rep_period_ps, cfg.bin_width_ps)
    sel = optimize_postselection(hist)
    assert abs(sel.pcc) == pytest.approx(1.0, abs=2e-3)
    assert sel.pcc < 0  # late-signal pairs with early-idler: anticorrelated times
    assert sel.delta_ts_ps == 1000.0
    assert sel.delta_ti_ps == 500.0


def test_optimizer_selection_straddles_peak_separations(paper_delays):
    cfg = quiet_cfg(jitter_sigma_signal_ps=400.0, jitter_sigma_idler_ps=400.0,
                    efficiency_signal=0.5, efficiency_idler=0.15,
                    generation_spread_ps=200.0, acquisition_s=12.5)
    stream = simulate_events(STATE, paper_delays, cfg, seed=11)
    hist = histogram2d(stream, cfg.rep_period_ps, cfg.bin_width_ps)
    sel = optimize_postselection(hist)
    # the dominant peaks themselves sit at the modal-delay separations
    assert abs(abs(sel.peak_ts_ps[1] - sel.peak_ts_ps[0]) - 1000) <= 100
    assert abs(abs(sel.peak_ti_ps[1] - sel.peak_ti_ps[0]) - 500) <= 100
    # exhaustive search on a coarsened grid agrees on the separations
    coarse = histogram2d(stream, cfg.rep_period_ps, bin_width_ps=500.0)
    occ_s = np.flatnonzero(coarse.counts.sum(axis=1) > 0.01 * coarse.counts.sum(axis=1).max())
    occ_i = np.flatnonzero(coarse.counts.sum(axis=0) > 0.01 * coarse.counts.sum(axis=0).max())
    best = None
    for ai in range(len(occ_s)):
        for bi in range(ai + 1, len(occ_s)):
            ts_pair = (coarse.bin_center(occ_s[ai]), coarse.bin_center(occ_s[bi]))
            for ci in range(len(occ_i)):
                for di in range(ci + 1, len(occ_i)):
                    ti_pair = (coarse.bin_center(occ_i[ci], 1), coarse.bin_center(occ_i[di], 1))
                    try:
                        v = abs(pcc(coarse, ts_pair, ti_pair))
                    except AnalysisError:
                        continue
                    if best is None or v > best[0]:
                        best = (v, ts_pair, ti_pair)
    _, ts_pair, ti_pair = best
    assert abs(abs(ts_pair[1] - ts_pair[0]) - 1000) <= 500
    assert abs(abs(ti_pair[1] - ti_pair[0]) - 500) <= 500


def test_optimizer_flat_histogram_small_pcc():
    rng = np.random.default_rng(0)
    counts = rng.poisson(400, (20, 20))
    h = hist_from_counts(counts)
    sel = optimize_postselection(h)
    assert abs(sel.pcc) < 0.25


def test_optimizer_needs_two_occupied_bins():
    counts = np.zeros((10, 10), dtype=np.int64)
    counts[3, 4] = 100
    with pytest.raises(AnalysisError, match="two occupied"):
        optimize_postselection(hist_from_counts(counts))


def test_mc_pcc_matches_discretized_gaussian_oracle(paper_delays):
    # two clean Gaussian peaks (no creation spread): expected bin masses are
    # erf differences; PCC from the analytic 2x2 must match the Monte Carlo
    sigma = 400.0
    cfg = quiet_cfg(jitter_sigma_signal_ps=sigma, jitter_sigma_idler_ps=sigma,
                    generation_spread_ps=0.0, acquisition_s=12.5)
    stream = simulate_events(STATE, paper_delays, cfg, seed=12)
    hist = histogram2d(stream, cfg.rep_period_ps, cfg.bin_width_ps)
    sel = optimize_postselection(hist)

    centers = [(1500.0, 0.0), (500.0, 500.0)]  # modal delays of the two terms

    def bin_mass(mu, lo):
        z1 = (lo - mu) / (np.sqrt(2) * sigma)
        z2 = (lo + 100.0 - mu) / (np.sqrt(2) * sigma)
        return 0.5 * (erf(z2) - erf(z1))

    p = np.zeros((2, 2))
    for mus, mui in centers:
        for a, ts in enumerate(sel.ts_ps):
            for b, ti in enumerate(sel.ti_ps):
                p[a, b] += 0.5 * bin_mass(mus, ts - 50.0) * bin_mass(mui, ti - 50.0)
    p /= p.sum()
    ts = np.array(sel.ts_ps)
    ti = np.array(sel.ti_ps)
    mu_s, mu_i = p.sum(1) @ ts, p.sum(0) @ ti
    cov = ((ts - mu_s)[:, None] * (ti - mu_i)[None, :] * p).sum()
    want = cov / np.sqrt((p.sum(1) @ (ts - mu_s) ** 2) * (p.sum(0) @ (ti - mu_i) ** 2))
    assert sel.pcc == pytest.approx(want, abs=0.02)


# -- CAR ---------------------------------------------------------------------


def test_car_inverse_mu_oracle(paper_delays):
    cfg = quiet_cfg(pair_probability_per_pulse=1e-3, acquisition_s=11.25)
    stream = simulate_events(STATE, paper_delays, cfg, seed=13)
    result = car(stream, cfg.rep_period_ps)
    assert not result.lower_bound
    assert result.car == pytest.approx(1000.0, rel=0.10)


def test_car_drops_fourfold_when_mu_quadruples(paper_delays):
    cfg1 = quiet_cfg(pair_probability_per_pulse=1e-3, acquisition_s=11.25)
    cfg4 = quiet_cfg(pair_probability_per_pulse=4e-3, acquisition_s=11.25)
    car1 = car(simulate_events(STATE, paper_delays, cfg1, seed=14),
               cfg1.rep_period_ps).car
    car4 = car(simulate_events(STATE, paper_delays, cfg4, seed=14),
               cfg4.rep_period_ps).car
    assert car1 / car4 == pytest.approx(4.0, rel=0.15)


def test_car_zero_accidentals_flagged_lower_bound(paper_delays):
    cfg = quiet_cfg(pair_probability_per_pulse=1e-5, acquisition_s=0.01)
    stream = simulate_events(STATE, paper_delays, cfg, seed=15)
    result = car(stream, cfg.rep_period_ps)
    assert result.lower_bound


def test_car_mu_product_constant(paper_delays):
    values = []
    for mu, acq in ((1e-4, 20.0), (1e-3, 11.25), (1e-2, 1.0)):
        with pytest.warns(UserWarning) if mu >= 0.1 else _nullcontext():
            cfg = quiet_cfg(pair_probability_per_pulse=mu, acquisition_s=acq)
        result = car(simulate_events(STATE, paper_delays, cfg, seed=16),
                     cfg.rep_period_ps)
        values.append(result.car * mu)
    for v in values:
        assert v == pytest.approx(1.0, rel=0.15)


class _nullcontext:
    def __enter__(self):
        return None

    def __exit__(self, *exc):
        return False


# -- power scaling ------------------------------------------------------------


def test_power_scaling_noiseless_quadratic(paper_delays):
    cfg = quiet_cfg()
    res = power_scaling_curve([1.0, 2.0, 4.0], cfg, mu_per_mw2=1e-5,
                              state=STATE, delays=paper_delays, expected=True)
    ratios = res.rates_per_s / res.rates_per_s[0]
    assert np.allclose(ratios, [1.0, 4.0, 16.0], rtol=1e-12)
    assert res.slope == pytest.approx(2.0, abs=1e-9)


def test_power_scaling_monte_carlo_exponent(paper_delays):
    cfg = quiet_cfg(efficiency_signal=0.5, efficiency_idler=0.15,
                    acquisition_s=2.0)
    powers = [2, 4, 6, 8, 10, 12, 14, 16]
    res = power_scaling_curve(powers, cfg, mu_per_mw2=1e-5,
                              state=STATE, delays=paper_delays, seed=17)
    assert res.slope == pytest.approx(2.0, abs=0.1)


def test_power_scaling_needs_three_powers(paper_delays):
    with pytest.raises(AnalysisError, match="3 powers"):
        power_scaling_curve([1.0, 2.0], quiet_cfg(), 1e-5, STATE, paper_delays)


def test_zero_power_zero_rate(paper_delays):
    cfg = quiet_cfg()
    res = power_scaling_curve([0.0, 1.0, 2.0, 4.0], cfg, mu_per_mw2=1e-5,
                              state=STATE, delays=paper_delays, expected=True)
    assert res.rates_per_s[0] == 0.0


# -- mode-mixing localization --------------------------------------------------


def test_late_mode_swap_leaves_postselected_cells(paper_delays):
    cfg = quiet_cfg(jitter_sigma_signal_ps=100.0, jitter_sigma_idler_ps=100.0,
                    acquisition_s=2.0)
    base = simulate_events(STATE, paper_delays, cfg, seed=18)
    hist0 = histogram2d(base, cfg.rep_period_ps, cfg.bin_width_ps)
    sel = optimize_postselection(hist0)
    # mid-fiber mixing: the partially-accumulated delay lands well away
    # from all four selected bins (swaps very close to either fiber end
    # would stay within a jitter width of an anchor time)
    swapped = simulate_events(STATE, paper_delays, cfg, seed=18,
                              mode_swap=ModeSwap(z_km=0.5, probability=0.3))
    hist1 = histogram2d(swapped, cfg.rep_period_ps, cfg.bin_width_ps)

    def cells(h):
        return np.array([[h.value_at(a, b) for b in sel.ti_ps] for a in sel.ts_ps])

    c0, c1 = cells(hist0), cells(hist1)
    # swapped photons arrive between the peaks, outside the selected bins,
    # so the renormalized post-selected 2x2 distribution barely moves
    p0 = c0 / c0.sum()
    p1 = c1 / c1.sum()
    assert np.max(np.abs(p0 - p1)) < 0.02
    v0 = pcc(hist0, sel.ts_ps, sel.ti_ps)
    v1 = pcc(hist1, sel.ts_ps, sel.ti_ps)
    assert abs(v1 - v0) < 0.05
    # but the swap is visible in the full histogram as out-of-peak mass
    assert hist1.counts.sum() == pytest.approx(hist0.counts.sum(), rel=0.05)
    mask = np.ones_like(hist0.counts, dtype=bool)
    for a in sel.ts_ps:
        for b in sel.ti_ps:
            mask[hist0.bin_index(a, 0), hist0.bin_index(b, 1)] = False
    out0 = hist0.counts[mask].sum()
    out1 = hist1.counts[mask].sum()
    assert out1 > out0 + 4 * np.sqrt(out0 + 1)


def test_expected_rate_formula():
    cfg = quiet_cfg(efficiency_signal=0.5, efficiency_idler=0.15)
    assert expected_coincidence_rate(cfg) == pytest.approx(1e-3 * 0.075 * 80e6)
