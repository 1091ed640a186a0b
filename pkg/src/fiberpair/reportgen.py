"""Quick-look report: delimited summary plus rendered figures for a run
directory produced by the CLI subcommands."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .correlate import CoincidenceHistogram2D  # noqa: E402

_DPI = 130


def _read_csv_columns(path) -> dict:
    """Tiny delimited reader: skips # lines, returns {column: array}."""
    names, rows = None, []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if names is None:
            names = parts
            continue
        rows.append(parts)
    if names is None:
        return {}
    cols = {}
    for i, name in enumerate(names):
        try:
            cols[name] = np.array([float(r[i]) for r in rows])
        except ValueError:
            cols[name] = np.array([r[i] for r in rows])
    return cols


def _parse_kv_report(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("[") or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def render_histogram_png(hist_csv, out_png, pcc_report=None) -> None:
    hist = CoincidenceHistogram2D.from_csv(hist_csv)
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    extent = [0, hist.period_ps / 1e3, 0, hist.period_ps / 1e3]
    ax.imshow(hist.counts.T, origin="lower", extent=extent, aspect="auto",
              cmap="inferno")
    if pcc_report is not None and Path(pcc_report).exists():
        rep = _parse_kv_report(pcc_report)
        for key_s in ("ts1_ps", "ts2_ps"):
            for key_i in ("ti1_ps", "ti2_ps"):
                if key_s in rep and key_i in rep:
                    ax.plot(float(rep[key_s]) / 1e3, float(rep[key_i]) / 1e3,
                            "c+", ms=11, mew=1.4)
    ax.set_xlabel("signal arrival (ns)")
    ax.set_ylabel("idler arrival (ns)")
    ax.set_title("coincidence histogram")
    fig.tight_layout()
    fig.savefig(out_png, dpi=_DPI)
    plt.close(fig)


def render_pair_rate_png(curve_csv, out_png) -> None:
    data = _read_csv_columns(curve_csv)
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.plot(data["z_m"], data["pairs_per_s"], "o-", ms=3)
    ax.set_xlabel("fiber length (m)")
    ax.set_ylabel("pairs / s")
    ax.set_title("pair generation rate vs length")
    fig.tight_layout()
    fig.savefig(out_png, dpi=_DPI)
    plt.close(fig)


def render_dispersion_png(disp_csv, out_png) -> None:
    rows = _read_csv_columns(disp_csv)
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    labels = sorted(set(rows["mode"]))
    ref = "LP01" if "LP01" in labels else labels[0]
    ref_sel = rows["mode"] == ref
    for label in labels:
        sel = rows["mode"] == label
        lam = rows["lambda_nm"][sel]
        order = np.argsort(rows["lambda_nm"][ref_sel])
        ref_tau = np.interp(lam, rows["lambda_nm"][ref_sel][order],
                            rows["tau_ps_per_km"][ref_sel][order])
        ax.plot(lam, (rows["tau_ps_per_km"][sel] - ref_tau) / 1e3, label=label)
    ax.set_xlabel("wavelength (nm)")
    ax.set_ylabel(f"delay vs {ref} (ns/km)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=_DPI)
    plt.close(fig)


def render_power_scaling_png(power_csv, out_png) -> None:
    data = _read_csv_columns(power_csv)
    fig, ax = plt.subplots(figsize=(4.6, 3.6))
    good = data["coincidences_per_s"] > 0
    ax.loglog(data["power_mw"][good], data["coincidences_per_s"][good], "o")
    ax.set_xlabel("pump power (mW)")
    ax.set_ylabel("coincidences / s")
    fig.tight_layout()
    fig.savefig(out_png, dpi=_DPI)
    plt.close(fig)


_RENDERERS = {
    "histogram2d.csv": ("histogram2d.png", render_histogram_png),
    "pair_rate.csv": ("pair_rate.png", render_pair_rate_png),
    "dispersion.csv": ("dispersion.png", render_dispersion_png),
    "power_scaling.csv": ("power_scaling.png", render_power_scaling_png),
}


def write_report(run_dir, out_dir) -> list[str]:
    """Summarize a run directory: summary.csv plus one PNG per known artifact.

    Returns the list of files written. Input files are never modified.
    """
    run_dir, out_dir = Path(run_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    summary_rows = []
    for name in ("pcc_report.txt", "car_report.txt"):
        path = run_dir / name
        if path.exists():
            for key, value in _parse_kv_report(path).items():
                summary_rows.append((name.replace("_report.txt", ""), key, value))
    for name, (png_name, renderer) in _RENDERERS.items():
        src = run_dir / name
        if not src.exists():
            continue
        if name == "histogram2d.csv":
            renderer(src, out_dir / png_name, pcc_report=run_dir / "pcc_report.txt")
        else:
            renderer(src, out_dir / png_name)
        written.append(str(out_dir / png_name))

    summary = out_dir / "summary.csv"
    with open(summary, "w") as fh:
        fh.write("source,key,value\n")
        for row in summary_rows:
            fh.write(",".join(str(x) for x in row) + "\n")
    written.append(str(summary))
    return written
