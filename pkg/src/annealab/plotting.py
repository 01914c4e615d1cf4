"""Matplotlib figures for campaign reports, schedules and profiles.

Everything renders off-screen to files.
"""

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
    "legend.frameon": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _figure(width=4.5, height=None):
    golden = (np.sqrt(5) - 1.0) / 2.0
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height or width * golden))
    return fig, ax


def _save(fig, path):
    with plt.rc_context(STYLE):
        fig.savefig(path)
    plt.close(fig)
    return path


def _legend(ax):
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=7)


def plot_residual_curves(curves, path):
    """Median per-spin residual energy against sweeps, one line per (method, N)."""
    fig, ax = _figure()
    lines = defaultdict(list)
    for row in curves:
        lines[row["method"], row["N"]].append(row)
    for (method, n), rows in sorted(lines.items()):
        rows.sort(key=lambda r: r["t_a"])
        t = [r["t_a"] for r in rows]
        med = np.array([r["median_Eres_per_spin"] for r in rows])
        lo = np.array([r["q25"] for r in rows])
        hi = np.array([r["q75"] for r in rows])
        (ln,) = ax.plot(t, med, marker="o", label=f"{method} N={n}")
        ax.fill_between(t, lo, hi, color=ln.get_color(), alpha=0.15, lw=0)
    ax.set_xscale("log")
    if any(r["median_Eres_per_spin"] > 0 for r in curves):
        ax.set_yscale("symlog", linthresh=1e-3)
    ax.set_xlabel("sweeps $t_a$")
    ax.set_ylabel(r"median $E_{\rm res}/N$")
    _legend(ax)
    return _save(fig, path)


def plot_effort_scaling(optimum, scaling, path):
    """Optimal effort ``t_a R`` against sqrt(N) with the fitted slopes in the legend."""
    fig, ax = _figure()
    slopes = {row["method"]: row for row in scaling}
    by_method = defaultdict(list)
    for row in optimum:
        if np.isfinite(row["effort"]):
            by_method[row["method"]].append(row)
    for method, rows in sorted(by_method.items()):
        rows.sort(key=lambda r: r["N"])
        x = np.sqrt([r["N"] for r in rows])
        label = method
        if method in slopes:
            s = slopes[method]
            label += f" (slope {s['slope']:.2f} [{s['ci_low']:.2f}, {s['ci_high']:.2f}])"
        ax.semilogy(x, [r["effort"] for r in rows], marker="s", label=label)
    ax.set_xlabel(r"$\sqrt{N}$")
    ax.set_ylabel("median effort $t_a R$ (sweeps)")
    _legend(ax)
    return _save(fig, path)


def plot_schedules(schedules, path, labels=None):
    """Control value against normalised time for one or more schedules."""
    fig, ax = _figure()
    for k, sched in enumerate(schedules):
        vals = sched.gamma if sched.gamma is not None else sched.beta
        t = np.linspace(0.0, 1.0, len(vals))
        ax.plot(t, vals, label=labels[k] if labels else sched.kind)
    ax.set_xlabel("$t / t_a$")
    ax.set_ylabel(r"$\Gamma$" if schedules and schedules[0].gamma is not None else r"$\beta$")
    _legend(ax)
    return _save(fig, path)


def plot_profile(profile, path):
    fig, ax = _figure()
    ax.errorbar(profile.control, profile.denominator, yerr=profile.stderr, marker="o", capsize=2)
    ax.set_xlabel("$s$" if profile.kind == "quantum" else r"$\beta$")
    ax.set_ylabel("step-size denominator")
    return _save(fig, path)
