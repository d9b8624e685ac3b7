"""PNG figures rendered next to the CSV/JSON outputs of a run."""
from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

params = {
    "axes.labelsize": 9,
    "font.size": 8,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.0,
    "lines.markersize": 3,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


@contextmanager
def style():
    with matplotlib.rc_context(params):
        yield


def _column(records, name):
    return np.array([np.nan if getattr(r, name, None) is None else getattr(r, name) for r in records], float)


def _drift(v):
    return np.abs(v - v[0]) / max(abs(v[0]), 1e-300)


def plot_diagnostics(records, path) -> Path | None:
    """Mass/energy drift and H^1 growth over time."""
    if len(records) < 2:
        return None
    t = _column(records, "t")
    with style():
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(7.0, 2.6))
        for name, c in (("mass", "C0"), ("energy", "C1")):
            d = _drift(_column(records, name))
            ax0.semilogy(t, np.maximum(d, 1e-17), color=c, label=name)
        ax0.set_xlabel("t")
        ax0.set_ylabel("relative drift")
        ax0.legend(frameon=False)
        ax1.plot(t, np.sqrt(_column(records, "h1_sq")), color="k")
        ax1.set_xlabel("t")
        ax1.set_ylabel(r"$\|X\|_{H^1}$")
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def plot_virial(records, path) -> Path | None:
    V = _column(records, "virial")
    if len(records) < 2 or np.all(np.isnan(V)):
        return None
    t = _column(records, "t")
    with style():
        fig, ax = plt.subplots(figsize=(3.6, 2.6))
        ax.plot(t, V, color="C2", label="V")
        ax.plot(t, _column(records, "virial_rate"), color="C3", ls="--", label="V'")
        ax.axhline(0, color="0.6", lw=0.5)
        ax.set_xlabel("t")
        ax.legend(frameon=False)
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def plot_modified_energy(records, path) -> Path | None:
    if len(records) < 2 or records[0].A is None:
        return None
    t = _column(records, "t")
    with style():
        fig, ax = plt.subplots(figsize=(3.6, 2.6))
        for name in ("A", "B", "E", "modE"):
            ax.semilogy(t, np.abs(_column(records, name)) + 1e-300, label=name)
        ax.semilogy(t, np.abs(_column(records, "D")) + 1e-300, ls="--", label="|D|")
        ax.set_xlabel("t")
        ax.legend(frameon=False, ncol=2)
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def plot_convergence(dts, errors, path) -> Path:
    dts, errors = np.asarray(dts), np.asarray(errors)
    with style():
        fig, ax = plt.subplots(figsize=(3.4, 2.6))
        ax.loglog(dts, np.maximum(errors, 1e-17), "o-", color="C0", label="phase error")
        ref = errors[0] * (dts / dts[0]) ** 2 if errors[0] > 0 else None
        if ref is not None:
            ax.loglog(dts, ref, color="0.5", ls=":", label=r"$\propto dt^2$")
        ax.set_xlabel("dt")
        ax.legend(frameon=False)
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def plot_compare(curve, path) -> Path:
    t = np.array([c["t"] for c in curve])
    with style():
        fig, ax = plt.subplots(figsize=(3.6, 2.6))
        ax.semilogy(t, [max(c["frobenius"], 1e-17) for c in curve], "o-", label="Frobenius")
        ax.semilogy(t, [max(c["bures"], 1e-17) for c in curve], "s--", label="Bures")
        ax.set_xlabel("t")
        ax.set_ylabel("distance")
        ax.legend(frameon=False)
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def plot_sphere(report, path) -> Path:
    n = [r["n"] for r in report["degrees"]]
    with style():
        fig, ax = plt.subplots(figsize=(3.6, 2.6))
        ax.semilogy(n, [max(r["spread_rel"], 1e-17) for r in report["degrees"]], "o", label="spread")
        ax.semilogy(n, [max(r["mean_rel_err"], 1e-17) for r in report["degrees"]], "x", label="mean error")
        ax.set_xlabel("degree n")
        ax.legend(frameon=False)
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def render(result, out_dir) -> list[Path]:
    """Every figure that applies to a run's records and reports."""
    out = Path(out_dir)
    made = [
        plot_diagnostics(result.records, out / "diagnostics.png"),
        plot_virial(result.records, out / "virial.png"),
        plot_modified_energy(result.records, out / "modified_energy.png"),
    ]
    s = result.summary
    if "phase_errors" in s:
        made.append(plot_convergence(s["dt_levels"], s["phase_errors"], out / "convergence.png"))
    if "compare.json" in result.reports:
        made.append(plot_compare(result.reports["compare.json"]["curve"], out / "compare.png"))
    if "sphere_report.json" in result.reports:
        made.append(plot_sphere(result.reports["sphere_report.json"], out / "sphere.png"))
    return [p for p in made if p is not None]
