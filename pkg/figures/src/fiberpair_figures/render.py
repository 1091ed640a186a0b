"""One renderer per reproduced figure.

Every renderer takes resolved input paths plus the recipe's annotation
block and writes a single image deterministically (fixed dpi, Agg
backend, no timestamps), so repeated invocations are pixel-identical.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .readers import SchemaError, histogram_grid, read_kv_report, read_table

DPI = 150


def _finish(fig, out_path):
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)


def _no_data(ax, message="no data"):
    ax.text(0.5, 0.5, message, ha="center", va="center",
            transform=ax.transAxes, fontsize=14, color="0.4")


def render_power_scaling(inputs, annotations, out_path):
    """Coincidence rate vs pump power on log-log axes (quadratic check)."""
    cols, meta = read_table(inputs["power_scaling"],
                            ("power_mw", "coincidences_per_s"))
    fig, ax = plt.subplots(figsize=(4.6, 3.8))
    good = cols["coincidences_per_s"] > 0
    ax.loglog(cols["power_mw"][good], cols["coincidences_per_s"][good],
              "o", color="#1f4e8c", ms=5)
    if "loglog_slope" in meta:
        slope = float(meta["loglog_slope"])
        p, r = cols["power_mw"][good], cols["coincidences_per_s"][good]
        ref = r[0] * (p / p[0]) ** slope
        ax.loglog(p, ref, "-", color="0.6", lw=1,
                  label=f"slope {slope:.2f}")
        ax.legend(frameon=False, fontsize=9)
    ax.set_xlabel(annotations.get("xlabel", "pump power (mW)"))
    ax.set_ylabel(annotations.get("ylabel", "coincidences (1/s)"))
    fig.tight_layout()
    _finish(fig, out_path)


def render_histogram_map(inputs, annotations, out_path):
    """2D arrival-time histogram with post-selected times and separations."""
    counts, bin_w, period = histogram_grid(inputs["histogram"])
    fig, ax = plt.subplots(figsize=(5.4, 4.6))
    if counts.sum() == 0:
        _no_data(ax)
        ax.set_xlabel("signal arrival time (ns)")
        ax.set_ylabel("idler arrival time (ns)")
        fig.tight_layout()
        _finish(fig, out_path)
        return
    occ = np.argwhere(counts > 0)
    pad = 10
    i_lo, i_hi = max(occ[:, 0].min() - pad, 0), min(occ[:, 0].max() + pad, counts.shape[0])
    j_lo, j_hi = max(occ[:, 1].min() - pad, 0), min(occ[:, 1].max() + pad, counts.shape[1])
    view = counts[i_lo:i_hi, j_lo:j_hi]
    extent = [i_lo * bin_w / 1e3, i_hi * bin_w / 1e3,
              j_lo * bin_w / 1e3, j_hi * bin_w / 1e3]
    im = ax.imshow(view.T, origin="lower", extent=extent, aspect="auto",
                   cmap="inferno")
    fig.colorbar(im, ax=ax, label="coincidences")
    rep = read_kv_report(inputs["pcc_report"])
    ts = [float(rep["ts1_ps"]) / 1e3, float(rep["ts2_ps"]) / 1e3]
    ti = [float(rep["ti1_ps"]) / 1e3, float(rep["ti2_ps"]) / 1e3]
    for t in ts:
        ax.axvline(t, color="c", lw=0.7, alpha=0.7)
    for t in ti:
        ax.axhline(t, color="c", lw=0.7, alpha=0.7)
    # annotate the measured separations (never hard-coded numbers)
    ax.annotate(f"$\\Delta T_s$ = {float(rep['delta_ts_ps']) / 1e3:.1f} ns",
                xy=(0.02, 0.95), xycoords="axes fraction", color="w", fontsize=9)
    ax.annotate(f"$\\Delta T_i$ = {float(rep['delta_ti_ps']) / 1e3:.1f} ns",
                xy=(0.02, 0.89), xycoords="axes fraction", color="w", fontsize=9)
    if "pcc" in rep:
        ax.annotate(f"PCC = {float(rep['pcc']):+.2f}",
                    xy=(0.02, 0.83), xycoords="axes fraction", color="w", fontsize=9)
    ax.set_xlabel("signal arrival time (ns)")
    ax.set_ylabel("idler arrival time (ns)")
    fig.tight_layout()
    _finish(fig, out_path)


def render_histogram_cross_sections(inputs, annotations, out_path):
    """Cross sections through the 2D histogram at the post-selected times."""
    counts, bin_w, period = histogram_grid(inputs["histogram"])
    rep = read_kv_report(inputs["pcc_report"])
    fig, axes = plt.subplots(1, 2, figsize=(8.4, 3.6))
    if counts.sum() == 0:
        for ax in axes:
            _no_data(ax)
        fig.tight_layout()
        _finish(fig, out_path)
        return
    axis_ps = (np.arange(counts.shape[0]) + 0.5) * bin_w / 1e3
    occ = np.argwhere(counts > 0)
    pad = 8

    for k, key in enumerate(("ts1_ps", "ts2_ps")):
        row = int(float(rep[key]) // bin_w)
        axes[0].plot(axis_ps, counts[row, :],
                     color=("#1f4e8c", "#2e8b57")[k], lw=1.2,
                     label=f"$T_s$ = {float(rep[key]) / 1e3:.1f} ns")
    lo, hi = occ[:, 1].min() - pad, occ[:, 1].max() + pad
    axes[0].set_xlim(max(lo, 0) * bin_w / 1e3, hi * bin_w / 1e3)
    axes[0].set_xlabel("idler arrival time (ns)")
    axes[0].set_ylabel("coincidences")
    axes[0].legend(frameon=False, fontsize=8)
    axes[0].set_title("post-selected on the signal photon", fontsize=9)

    for k, key in enumerate(("ti1_ps", "ti2_ps")):
        col = int(float(rep[key]) // bin_w)
        axes[1].plot(axis_ps, counts[:, col],
                     color=("#1f4e8c", "#2e8b57")[k], lw=1.2,
                     label=f"$T_i$ = {float(rep[key]) / 1e3:.1f} ns")
    lo, hi = occ[:, 0].min() - pad, occ[:, 0].max() + pad
    axes[1].set_xlim(max(lo, 0) * bin_w / 1e3, hi * bin_w / 1e3)
    axes[1].set_xlabel("signal arrival time (ns)")
    axes[1].legend(frameon=False, fontsize=8)
    axes[1].set_title("post-selected on the idler photon", fontsize=9)
    fig.tight_layout()
    _finish(fig, out_path)


def render_modal_delays(inputs, annotations, out_path):
    """Relative modal group delays vs wavelength, fundamental as reference."""
    cols, _ = read_table(inputs["dispersion"],
                         ("mode", "lambda_nm", "tau_ps_per_km"))
    fig, ax = plt.subplots(figsize=(5.4, 3.9))
    labels = sorted(set(cols["mode"]))
    ref = annotations.get("reference_mode", "LP01")
    if ref not in labels:
        raise SchemaError(f"reference mode {ref} absent from the dispersion table")
    ref_sel = cols["mode"] == ref
    order = np.argsort(cols["lambda_nm"][ref_sel])
    ref_lam = cols["lambda_nm"][ref_sel][order]
    ref_tau = cols["tau_ps_per_km"][ref_sel][order]
    palette = {"LP11": "#1f4e8c", "LP02": "#b03030"}
    for label in labels:
        if label == ref:
            continue
        sel = cols["mode"] == label
        lam = cols["lambda_nm"][sel]
        tau = cols["tau_ps_per_km"][sel] - np.interp(lam, ref_lam, ref_tau)
        srt = np.argsort(lam)
        ax.plot(lam[srt], tau[srt] / 1e3, lw=1.4,
                color=palette.get(label), label=label)
    ax.axhline(0.0, color="0.6", lw=0.8, ls=":", label=ref)
    for mark in annotations.get("mark_nm", []):
        ax.axvline(float(mark), color="0.7", lw=0.8, ls="--")
    ax.set_xlabel("wavelength (nm)")
    ax.set_ylabel(f"group delay relative to {ref} (ns/km)")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    _finish(fig, out_path)


def render_mixing_spectrum(inputs, annotations, out_path):
    """Per-mode output power spectrum of the nonlinear propagation."""
    cols, _ = read_table(inputs["spectra"],
                         ("lambda_nm", "mode", "spectral_power_dbm"))
    fig, ax = plt.subplots(figsize=(6.2, 3.9))
    floor = float(annotations.get("floor_dbm", -135.0))
    for label in sorted(set(cols["mode"])):
        sel = cols["mode"] == label
        lam = cols["lambda_nm"][sel]
        dbm = cols["spectral_power_dbm"][sel]
        srt = np.argsort(lam)
        lam, dbm = lam[srt], dbm[srt]
        keep = dbm > floor
        ax.plot(lam[keep], dbm[keep], lw=0.8, label=label)
    for mark in annotations.get("mark_nm", []):
        ax.axvline(float(mark), color="0.75", lw=0.8, ls="--")
    ax.set_xlabel("wavelength (nm)")
    ax.set_ylabel("spectral power (dBm per bin)")
    ax.legend(frameon=False, fontsize=7, ncol=2)
    if "xlim_nm" in annotations:
        ax.set_xlim(*[float(x) for x in annotations["xlim_nm"]])
    fig.tight_layout()
    _finish(fig, out_path)


def render_pair_rate(inputs, annotations, out_path):
    """Pair generation rate vs fiber length with the dispersion length marked."""
    cols, meta = read_table(inputs["pair_rate"], ("z_m", "pairs_per_s"))
    fig, ax = plt.subplots(figsize=(5.0, 3.7))
    ax.plot(cols["z_m"], cols["pairs_per_s"], "o-", ms=3.5, color="#1f4e8c")
    if "pump_dispersion_length_m" in meta:
        ld = float(meta["pump_dispersion_length_m"])
        ax.axvline(ld, color="0.6", lw=0.9, ls="--")
        ax.annotate(f"$L_D$ = {ld:.2f} m", xy=(ld, 0.08),
                    xycoords=("data", "axes fraction"), fontsize=8,
                    rotation=90, va="bottom", ha="right")
    ax.set_xlabel("fiber length (m)")
    ax.set_ylabel("pair rate (1/s)")
    fig.tight_layout()
    _finish(fig, out_path)


def render_car_correlogram(inputs, annotations, out_path):
    """Coincidences vs signal-idler delay in pump periods, CAR annotated."""
    cols, meta = read_table(inputs["car_histogram"],
                            ("period_offset", "delay_ns", "coincidences"))
    fig, ax = plt.subplots(figsize=(5.0, 3.7))
    if cols["coincidences"].sum() == 0:
        _no_data(ax)
    else:
        ax.bar(cols["delay_ns"], np.maximum(cols["coincidences"], 0.5),
               width=0.55 * np.median(np.diff(np.sort(cols["delay_ns"]))),
               color="#1f4e8c")
        ax.set_yscale("log")
        if "car" in meta:
            flag = " (lower bound)" if meta.get("lower_bound") == "1" else ""
            ax.annotate(f"CAR = {float(meta['car']):.0f}{flag}",
                        xy=(0.03, 0.93), xycoords="axes fraction", fontsize=9)
    ax.set_xlabel("signal-idler delay (ns)")
    ax.set_ylabel("coincidences")
    fig.tight_layout()
    _finish(fig, out_path)


RENDERERS = {
    "power_scaling": (render_power_scaling, ("power_scaling",)),
    "histogram_map": (render_histogram_map, ("histogram", "pcc_report")),
    "histogram_cross_sections": (render_histogram_cross_sections,
                                 ("histogram", "pcc_report")),
    "modal_delays": (render_modal_delays, ("dispersion",)),
    "mixing_spectrum": (render_mixing_spectrum, ("spectra",)),
    "pair_rate": (render_pair_rate, ("pair_rate",)),
    "car_correlogram": (render_car_correlogram, ("car_histogram",)),
}
