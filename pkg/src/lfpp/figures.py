"""Render saved experiment reports as figures.

The compute path never plots; the ``report`` command loads a report file and
writes PNG figures next to the delimited output so the standard views
(log-log exponent fits, KS matrices, quantile envelopes) come out of the box.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def render_report_figures(report, outdir) -> list:
    """Write the figures appropriate for the report kind; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    kind = report.spec.kind
    fn = _RENDERERS.get(kind)
    if fn is None:
        return []
    return fn(report, outdir)


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def _ks_matrix(report, outdir: Path) -> list:
    s = report.summary
    ks = np.array(s["ks_matrix"])
    labels = [f"{g:g}" for g in s["gammas"]]
    fig, ax = plt.subplots(figsize=(4.8, 4.0))
    im = ax.imshow(ks, cmap="viridis")
    ax.set_xticks(range(len(labels)), labels)
    ax.set_yticks(range(len(labels)), labels)
    for i in range(len(labels)):
        for j in range(len(labels)):
            ax.text(j, i, f"{ks[i, j]:.3f}", ha="center", va="center",
                    color="w", fontsize=8)
    ax.set_xlabel("gamma")
    ax.set_ylabel("gamma")
    ax.set_title("two-sample KS distance between normalized arms")
    fig.colorbar(im, ax=ax, shrink=0.8)
    return [_save(fig, outdir / "ks_matrix.png")]


def _euclid(report, outdir: Path) -> list:
    s = report.summary
    g = s["gammas"]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.4, 3.4))
    ax1.plot(g, s["median_ratio"], "o-")
    ax1.axhline(1.0, color="gray", lw=0.8, ls="--")
    ax1.set_xlabel("gamma")
    ax1.set_ylabel("median ratio to Euclidean")
    ax1.invert_xaxis()
    ax2.plot(g, s["interdecile_spread"], "s-", color="tab:red")
    ax2.set_xlabel("gamma")
    ax2.set_ylabel("interdecile spread")
    ax2.invert_xaxis()
    fig.suptitle("normalized distance ratios along the gamma ladder")
    return [_save(fig, outdir / "euclidean_limit.png")]


def _exponent(report, outdir: Path) -> list:
    s = report.summary
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    for xi_key, pts in s["a_eps"].items():
        eps = np.array([p[0] for p in pts])
        a = np.array([p[1] for p in pts])
        slope = s["slope"][xi_key]
        ax.loglog(eps, a, "o", label=f"xi={xi_key} (slope {slope:.3f})")
        c = a[0] / eps[0] ** slope
        ax.loglog(eps, c * eps**slope, "-", lw=0.8, color=ax.lines[-1].get_color())
    ax.set_xlabel("eps")
    ax.set_ylabel("median crossing length")
    ax.legend(fontsize=8)
    ax.set_title("normalizer scaling")
    paths = [_save(fig, outdir / "exponent_scan.png")]
    if len(s["q_hat"]) > 1:
        fig, ax = plt.subplots(figsize=(4.6, 3.6))
        xs = sorted(float(k) for k in s["q_hat"])
        ax.plot(xs, [s["q_hat"][f"{x:g}"] for x in xs], "o-")
        ax.set_xlabel("xi")
        ax.set_ylabel("implied exponent (1 - slope)/xi")
        ax.set_title("implied exponent across temperatures")
        paths.append(_save(fig, outdir / "q_hat.png"))
    return paths


def _xi_infty(report, outdir: Path) -> list:
    s = report.summary
    xs = s["xis"]
    keys = [f"{x:g}" for x in xs]
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.plot(xs, [s["q05"][k] for k in keys], "v-", label="q05")
    ax.plot(xs, [s["q95"][k] for k in keys], "^-", label="q95")
    ax.plot(xs, [s["iqr"][k] for k in keys], "s--", label="IQR")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("xi")
    ax.set_ylabel("rescaled across-annulus statistic")
    ax.legend()
    ax.set_title("high-temperature quantile envelope")
    return [_save(fig, outdir / "xi_infty.png")]


def _annulus(report, outdir: Path) -> list:
    s = report.summary
    r = np.array([p[0] for p in s["median_across"]])
    v = np.array([p[1] for p in s["median_across"]])
    fig, ax = plt.subplots(figsize=(4.8, 3.8))
    ax.loglog(r, v, "o", label="median across")
    c = v[0] / r[0] ** s["slope"]
    ax.loglog(r, c * r ** s["slope"], "-", lw=0.8,
              label=f"slope {s['slope']:.3f}")
    ax.set_xlabel("inner radius")
    ax.set_ylabel("median across-annulus distance")
    ax.legend()
    ax.set_title(f"annulus scaling at xi={s['xi']:g}")
    return [_save(fig, outdir / "annulus_scaling.png")]


def _invariance(report, outdir: Path) -> list:
    a = np.sort([r["across_origin"] for r in report.per_replica])
    b = np.sort([r["across_shifted"] for r in report.per_replica])
    fig, ax = plt.subplots(figsize=(4.8, 3.8))
    ax.step(a, np.arange(1, len(a) + 1) / len(a), where="post", label="origin")
    ax.step(b, np.arange(1, len(b) + 1) / len(b), where="post", label="shifted")
    ax.set_xlabel("across-annulus distance")
    ax.set_ylabel("empirical CDF")
    ks = report.summary["ks"]
    crit = report.summary["ks_critical"]
    ax.set_title(f"KS = {ks:.3f} (critical {crit:.3f})")
    ax.legend()
    return [_save(fig, outdir / "invariance_check.png")]


def _weyl(report, outdir: Path) -> list:
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    if "factor" in report.summary:
        devs = [r["max_rel_dev"] for r in report.per_replica]
        ax.semilogy(range(len(devs)), np.maximum(devs, 1e-18), "o")
        ax.axhline(1e-12, color="r", ls="--", lw=0.8, label="tolerance")
        ax.set_xlabel("replica")
        ax.set_ylabel("max relative deviation")
        ax.set_title(f"field-shift scaling, factor {report.summary['factor']:.6f}")
        ax.legend()
    else:
        oks = [1 if r["sandwich_ok"] else 0 for r in report.per_replica]
        ax.bar(range(len(oks)), oks)
        ax.set_xlabel("replica")
        ax.set_ylabel("sandwich bound holds")
        ax.set_title("two-sided field-shift bound")
    return [_save(fig, outdir / "weyl_check.png")]


_RENDERERS = {
    "continuity": _ks_matrix,
    "euclidean_limit": _euclid,
    "exponent_scan": _exponent,
    "xi_infty": _xi_infty,
    "annulus_scaling": _annulus,
    "invariance_check": _invariance,
    "weyl_check": _weyl,
}
