"""Command-line interface.

Subcommands cover the full pipeline: mode solving and dispersion tables,
phase matching, nonlinear propagation, state construction, detection
Monte Carlo, tag-file analysis and report rendering. Machine-readable
outputs land under --out (default: $FIBERPAIR_OUT_DIR or the working
directory). Exit codes: 0 success, 1 physics/domain failure, 2 usage.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .correlate import (AnalysisError, PostSelection, bootstrap_pcc, car,
                        count_significant_peaks, histogram2d,
                        optimize_postselection, power_scaling_curve)
from .coupling import CouplingGridError, build_coupling_tensor
from .detector import (DetectionConfig, DetectionConfigError, simulate_events)
from .dispersion import (BETA2_SI_TO_FS2_PER_MM, TAU_SI_TO_PS_PER_KM,
                         DispersionTable, dispersion_table)
from .materials import MaterialModelError
from .modes import (ModeSolverError, expand_orientations, lambda_from_omega,
                    omega_from_lambda, solve_modes)
from .pairstate import PairStateError, TwoPhotonState, build_state
from .phasematch import (PhaseMatchError, closed_form_for_fiber,
                         enumerate_processes, processes_to_csv,
                         scan_phase_matching)
from .profiles import ProfileError, builtin_profile, load_profile
from .pulseprop import (PropagationError, PumpSpec, TimeGrid,
                        dispersion_length_m, make_pump_state,
                        medium_from_profile, pair_rate_vs_length,
                        spectra_to_csv, seed_vacuum, add_states, propagate)
from .runconfig import RunConfigError
from .tags import TagFormatError, read_tags, write_tags

DOMAIN_ERRORS = (ProfileError, ModeSolverError, PhaseMatchError, CouplingGridError,
                 PairStateError, PropagationError, DetectionConfigError,
                 TagFormatError, AnalysisError, MaterialModelError, RunConfigError,
                 ValueError)


def _fiber(arg: str):
    if arg.startswith("builtin:"):
        return builtin_profile(arg.split(":", 1)[1])
    if Path(arg).exists():
        return load_profile(arg)
    return builtin_profile(arg.removesuffix(".cfg"))


def _out_dir(arg) -> Path:
    root = arg or os.environ.get("FIBERPAIR_OUT_DIR") or "."
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_modes(args) -> int:
    profile = _fiber(args.fiber)
    if args.nm_range:
        lo, hi = (float(x) * 1e-9 for x in args.nm_range.split(":"))
        labels = args.modes.split(",") if args.modes else None
        if labels is None:
            present = solve_modes(profile, lo)
            labels = [m.label for m in present]
        table = dispersion_table(profile, labels, (lo, hi), args.samples)
        out = _out_dir(args.out_dir) / "dispersion.csv"
        table.to_csv(out)
        print(f"wrote {out}")
        return 0
    lam = args.nm * 1e-9
    modes = solve_modes(profile, lam)
    if not modes:
        print(f"no guided modes at {args.nm} nm")
        return 0
    print("mode,beta_rad_per_m,group_number")
    for mode in modes:
        print(f"{mode.label},{mode.beta():.6f},{mode.group_number}")
    return 0


def cmd_phasematch(args) -> int:
    profile = _fiber(args.fiber)
    lam_p = args.pump_nm * 1e-9
    if args.signal_nm:
        lam_s = args.signal_nm * 1e-9
    else:
        try:
            omega_s, _ = closed_form_for_fiber(profile, args.pump_mode, lam_p, args.G)
            lam_cf = lambda_from_omega(omega_s)
            grid = np.linspace(lam_cf - 40e-9, lam_cf + 25e-9, 6)
            crossings = scan_phase_matching(profile, args.pump_mode, lam_p, grid,
                                            g_mismatch=args.G)
            found = [x for xs in crossings.values() for x in xs]
            if not found:
                print("no phase-matched crossing located; supply --signal-nm")
                return 1
            lam_s = float(np.median([x.lambda_s_m for x in found]))
            print(f"closed form: lambda_s = {lam_cf * 1e9:.1f} nm; "
                  f"scan crossing: {lam_s * 1e9:.1f} nm")
        except PhaseMatchError as exc:
            print(f"closed form unavailable ({exc}); supply --signal-nm", file=sys.stderr)
            return 1
    procs = enumerate_processes(profile, args.pump_mode, lam_p, lam_s,
                                g_mismatch=args.G)
    out = _out_dir(args.out_dir) / "processes.csv"
    processes_to_csv(procs, out)
    print(f"{len(procs)} processes; wrote {out}")
    for p in procs:
        print(f"  {p.signal_mode},{p.idler_mode}  lambda_s={p.lambda_s_m * 1e9:.1f} nm "
              f"lambda_i={p.lambda_i_m * 1e9:.1f} nm  dbeta={p.delta_beta:.2f} /m")
    return 0


def cmd_propagate(args) -> int:
    profile = _fiber(args.fiber)
    pump = PumpSpec(duration_fs=args.pump_fs, energy_nj=args.pump_nj,
                    center_nm=args.pump_nm, rep_rate_mhz=args.rep_mhz,
                    launch=((args.pump_mode, 1.0),))
    grid = TimeGrid.for_bandwidth(args.bandwidth_rad_s, args.n_points)
    labels = args.modes.split(",")
    out = _out_dir(args.out_dir)

    frame_tau = None
    if args.signal_band_nm and args.idler_band_nm:
        s_lo, s_hi = (float(x) * 1e-9 for x in args.signal_band_nm.split(":"))
        i_lo, i_hi = (float(x) * 1e-9 for x in args.idler_band_nm.split(":"))
        tab = dispersion_table(profile, [args.pump_mode],
                               (min(s_lo, i_lo) * 0.99, max(s_hi, i_hi) * 1.01), 9)
        frame_tau = 0.5 * (tab.tau(args.pump_mode, 0.5 * (s_lo + s_hi))
                           + tab.tau(args.pump_mode, 0.5 * (i_lo + i_hi)))
    medium = medium_from_profile(profile, labels, pump.omega0, grid,
                                 n2_m2_per_w=args.n2, frame_tau_s_per_m=frame_tau)

    beta2 = medium.table.beta2(args.pump_mode, pump.center_nm * 1e-9)
    print(f"pump-mode beta2 = {beta2 * BETA2_SI_TO_FS2_PER_MM * 1e3:.0f} fs^2/m; "
          f"dispersion length T0^2/beta2 = "
          f"{dispersion_length_m(args.pump_fs, beta2):.3f} m "
          f"(envelope: {dispersion_length_m(args.pump_fs / 1.6651, beta2):.3f} m)")

    wp = pump.omega0
    seed_range = None
    if args.seed_side == "signal":
        seed_range = (wp + args.seed_margin_rad_s, wp + args.bandwidth_rad_s * 0.99)
    elif args.seed_side == "idler":
        seed_range = (wp - args.bandwidth_rad_s * 0.99, wp - args.seed_margin_rad_s)

    if args.signal_band_nm and args.idler_band_nm:
        result = pair_rate_vs_length(
            pump, medium, grid, args.length_m, args.checkpoint_every_m,
            (s_lo, s_hi), (i_lo, i_hi), n_realizations=args.realizations,
            seed=args.seed, fixed_dz_m=args.dz_m, seed_omega_range=seed_range)
        curve = out / "pair_rate.csv"
        result.dispersion_length_m = dispersion_length_m(args.pump_fs, beta2)
        result.to_csv(curve)
        print(f"wrote {curve}")
    # final-state spectra for the last realization setup
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    state = add_states(make_pump_state(pump, grid, labels),
                       seed_vacuum(grid, labels, wp, rng, omega_range=seed_range))
    final, _ = propagate(state, medium, args.length_m, fixed_dz_m=args.dz_m,
                         tol=args.tol)
    spec_file = out / "spectra.csv"
    spectra_to_csv(final, pump.rep_rate_hz, spec_file)
    print(f"wrote {spec_file}")
    return 0


def cmd_build_state(args) -> int:
    profile = _fiber(args.fiber)
    lam_p = args.pump_nm * 1e-9
    lam_s = args.signal_nm * 1e-9
    lam_i = args.idler_nm * 1e-9 if args.idler_nm else None
    procs = enumerate_processes(profile, args.pump_mode, lam_p, lam_s, lam_i,
                                g_mismatch=args.G)
    if not procs:
        print("no processes at this channel", file=sys.stderr)
        return 1
    from .modes import parse_mode_label

    l_p, _, orient_p = parse_mode_label(args.pump_mode)
    pump_label = args.pump_mode + "a" if (l_p >= 1 and orient_p == "none") \
        else args.pump_mode
    involved = {p.signal_mode for p in procs} | {p.idler_mode for p in procs} \
        | {pump_label}
    by_label = {}
    for lam in (lam_p, procs[0].lambda_s_m, procs[0].lambda_i_m):
        for m in expand_orientations(solve_modes(profile, lam)):
            by_label.setdefault(m.label, m)  # prefer pump-wavelength fields
    missing = involved - set(by_label)
    if missing:
        print(f"modes {sorted(missing)} not guided anywhere in this channel",
              file=sys.stderr)
        return 1
    tensor = build_coupling_tensor([by_label[lab] for lab in sorted(involved)],
                                   profile.core_radius_m)
    state = build_state(procs, tensor, args.pump_mode,
                        merge_orientations=args.merge_orientations)
    if args.equal_weights:
        from .pairstate import equal_weight_state

        state = equal_weight_state(state.basis, state.lambda_s_m, state.lambda_i_m)
    out = _out_dir(args.out_dir) / "state.csv"
    state.to_file(out)
    print(f"wrote {out}")
    for (s, i), p in zip(state.basis, state.probabilities):
        print(f"  |{s}>_s |{i}>_i : {p:.4f}")
    return 0


def _write_pcc_report(path, sel: PostSelection, interval=None, n_pairs=None) -> None:
    with open(path, "w") as fh:
        fh.write("[pcc]\n")
        fh.write(f"ts1_ps={sel.ts_ps[0]:.1f}\nts2_ps={sel.ts_ps[1]:.1f}\n")
        fh.write(f"ti1_ps={sel.ti_ps[0]:.1f}\nti2_ps={sel.ti_ps[1]:.1f}\n")
        fh.write(f"pcc={sel.pcc:.6f}\nabs_pcc={abs(sel.pcc):.6f}\n")
        fh.write(f"delta_ts_ps={sel.delta_ts_ps:.1f}\ndelta_ti_ps={sel.delta_ti_ps:.1f}\n")
        if sel.peak_ts_ps:
            fh.write(f"peak_ts1_ps={sel.peak_ts_ps[0]:.1f}\n"
                     f"peak_ts2_ps={sel.peak_ts_ps[1]:.1f}\n"
                     f"peak_ti1_ps={sel.peak_ti_ps[0]:.1f}\n"
                     f"peak_ti2_ps={sel.peak_ti_ps[1]:.1f}\n")
        if interval is not None:
            fh.write(f"bootstrap_lo={interval[0]:.6f}\nbootstrap_hi={interval[1]:.6f}\n")
        if n_pairs is not None:
            fh.write(f"coincidences={n_pairs}\n")


def _analyze_stream(stream, bin_ps: float, out: Path, do_bootstrap=True) -> int:
    rep = stream.header.metadata.get("rep_rate_mhz")
    if rep is None:
        raise AnalysisError("stream lacks rep_rate_mhz metadata")
    period = 1e6 / float(rep)
    hist = histogram2d(stream, period, bin_ps)
    hist.to_csv(out / "histogram2d.csv")
    sel = optimize_postselection(hist)
    interval = None
    if do_bootstrap and hist.total:
        interval = bootstrap_pcc(hist, sel, n_boot=200, seed=0)
    _write_pcc_report(out / "pcc_report.txt", sel, interval, hist.total)
    car_result = car(stream, period)
    car_result.to_csv(out / "car_histogram.csv")
    with open(out / "car_report.txt", "w") as fh:
        fh.write("[car]\n")
        fh.write(f"car={car_result.car:.4f}\n")
        fh.write(f"lower_bound={int(car_result.lower_bound)}\n")
        fh.write(f"n_peaks={count_significant_peaks(hist)}\n")
    print(f"pcc={sel.pcc:+.4f} |pcc|={abs(sel.pcc):.4f} car={car_result.car:.1f}"
          f"{' (lower bound)' if car_result.lower_bound else ''}")
    return 0


def cmd_simulate_detection(args) -> int:
    state = TwoPhotonState.from_file(args.state)
    delays = DispersionTable.from_csv(args.delays)
    cfg = DetectionConfig(
        fiber_length_km=args.length_km,
        jitter_sigma_signal_ps=args.jitter_ps,
        jitter_sigma_idler_ps=args.jitter_ps,
        efficiency_signal=args.efficiency_signal,
        efficiency_idler=args.efficiency_idler,
        background_signal_cps=args.bg_cps,
        background_idler_cps=args.bg_cps,
        pair_probability_per_pulse=args.mu,
        generation_spread_ps=args.spread_ps,
        bin_width_ps=args.bin_ps,
        acquisition_s=args.seconds,
        rep_rate_mhz=args.rep_mhz,
    )
    out = _out_dir(args.out_dir)
    stream = simulate_events(state, delays, cfg, seed=args.seed)
    tag_file = out / ("tags.bin" if args.binary_tags else "tags.txt")
    write_tags(stream, tag_file, binary=args.binary_tags)
    print(f"wrote {tag_file} ({len(stream)} tags)")
    _analyze_stream(stream, cfg.bin_width_ps, out)
    if args.powers:
        powers = [float(x) for x in args.powers.split(",")]
        res = power_scaling_curve(powers, cfg, mu_per_mw2=args.mu_per_mw2,
                                  state=state, delays=delays, seed=args.seed)
        res.to_csv(out / "power_scaling.csv")
        print(f"log-log slope {res.slope:.3f}; wrote {out / 'power_scaling.csv'}")
    return 0


def cmd_analyze(args) -> int:
    stream = read_tags(args.tags)
    return _analyze_stream(stream, args.bin_ps, _out_dir(args.out_dir))


def cmd_report(args) -> int:
    from .reportgen import write_report

    written = write_report(args.run, _out_dir(args.out_dir))
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fiberpair",
        description="Multimode photon-pair source and mode-to-time sorter toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("modes", help="guided LP modes / dispersion table")
    p.add_argument("--fiber", required=True, help="fiber config path or builtin name")
    p.add_argument("--nm", type=float, help="wavelength (nm) for a mode listing")
    p.add_argument("--nm-range", help="lo:hi (nm) to tabulate dispersion")
    p.add_argument("--samples", type=int, default=25)
    p.add_argument("--modes", help="comma-separated labels for the table")
    p.add_argument("--out", dest="out_dir")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("phasematch", help="intermodal four-wave-mixing channels")
    p.add_argument("--fiber", required=True)
    p.add_argument("--pump-nm", type=float, required=True)
    p.add_argument("--pump-mode", default="LP01")
    p.add_argument("--G", type=int, default=2)
    p.add_argument("--signal-nm", type=float)
    p.add_argument("--out", dest="out_dir")
    p.set_defaults(func=cmd_phasematch)

    p = sub.add_parser("propagate", help="multimode nonlinear propagation")
    p.add_argument("--fiber", required=True)
    p.add_argument("--pump-nm", type=float, required=True)
    p.add_argument("--pump-fs", type=float, default=140.0)
    p.add_argument("--pump-nj", type=float, default=0.1)
    p.add_argument("--rep-mhz", type=float, default=80.0)
    p.add_argument("--pump-mode", default="LP01")
    p.add_argument("--length-m", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--realizations", type=int, default=4)
    p.add_argument("--checkpoint-every-m", type=float, default=0.1)
    p.add_argument("--modes", default="LP01,LP11a,LP11b,LP02")
    p.add_argument("--n-points", type=int, default=32768)
    p.add_argument("--bandwidth-rad-s", type=float, default=8.2e14)
    p.add_argument("--n2", type=float, default=2.6e-20)
    p.add_argument("--dz-m", type=float, default=5e-4)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--seed-side", choices=["signal", "idler", "both"], default="signal")
    p.add_argument("--seed-margin-rad-s", type=float, default=4e13)
    p.add_argument("--signal-band-nm", help="lo:hi in nm for the pair-rate curve")
    p.add_argument("--idler-band-nm", help="lo:hi in nm for the pair-rate curve")
    p.add_argument("--out", dest="out_dir")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("build-state", help="two-photon modal state from overlaps")
    p.add_argument("--fiber", required=True)
    p.add_argument("--pump-nm", type=float, required=True)
    p.add_argument("--pump-mode", default="LP01")
    p.add_argument("--G", type=int, default=2)
    p.add_argument("--signal-nm", type=float, required=True)
    p.add_argument("--idler-nm", type=float)
    p.add_argument("--merge-orientations", action="store_true")
    p.add_argument("--equal-weights", action="store_true",
                   help="replace the overlap-derived amplitudes with an "
                        "equal superposition (the coefficients are not "
                        "measured; see README)")
    p.add_argument("--out", dest="out_dir")
    p.set_defaults(func=cmd_build_state)

    p = sub.add_parser("simulate-detection", help="sorter + detector Monte Carlo")
    p.add_argument("--state", required=True)
    p.add_argument("--delays", required=True, help="dispersion CSV for the sorter fiber")
    p.add_argument("--length-km", type=float, default=1.0)
    p.add_argument("--jitter-ps", type=float, default=400.0)
    p.add_argument("--mu", type=float, default=1e-3)
    p.add_argument("--seconds", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--efficiency-signal", type=float, default=0.5)
    p.add_argument("--efficiency-idler", type=float, default=0.15)
    p.add_argument("--bg-cps", type=float, default=0.0)
    p.add_argument("--spread-ps", type=float, default=200.0)
    p.add_argument("--bin-ps", type=float, default=100.0)
    p.add_argument("--rep-mhz", type=float, default=80.0)
    p.add_argument("--binary-tags", action="store_true")
    p.add_argument("--powers", help="comma-separated pump powers (mW) for the scaling table")
    p.add_argument("--mu-per-mw2", type=float, default=1e-5)
    p.add_argument("--out", dest="out_dir")
    p.set_defaults(func=cmd_simulate_detection)

    p = sub.add_parser("analyze", help="PCC/CAR reports from a tag file")
    p.add_argument("--tags", required=True)
    p.add_argument("--bin-ps", type=float, default=100.0)
    p.add_argument("--out", dest="out_dir")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="summary + figures from a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--out", dest="out_dir")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return args.func(args)
    except DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
