"""Result summary table and figure rendering.

Figures show the point estimate with its percentile interval for every
(restriction, functional) cell, one series per restriction, and are
written next to the delimited output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def _sig4(x) -> str:
    if x is None:
        return "-"
    return f"{float(x):.4g}"


def summary_lines(records: list[dict]) -> list[str]:
    """Fixed-width table: estimate and CI to 4 significant digits."""
    header = f"{'restriction':<12} {'functional':<36} {'estimate':>12} {'lower':>12} {'upper':>12}"
    lines = [header, "-" * len(header)]
    for rec in records:
        if rec.get("failed"):
            lines.append(
                f"{rec['restriction']:<12} {rec['functional']:<36} "
                f"FAILED: {rec.get('error', '')}"
            )
        else:
            lines.append(
                f"{rec['restriction']:<12} {rec['functional']:<36} "
                f"{_sig4(rec['estimate']):>12} {_sig4(rec.get('lower')):>12} "
                f"{_sig4(rec.get('upper')):>12}"
            )
    return lines


def render_figure(records: list[dict], path) -> None:
    """Point estimates with CI whiskers, one series per restriction."""
    ok = [r for r in records if not r.get("failed")]
    if not ok:
        return
    functionals = list(dict.fromkeys(r["functional"] for r in ok))
    restrictions = list(dict.fromkeys(r["restriction"] for r in ok))
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(functionals)), 4.5))
    width = 0.8 / max(len(restrictions), 1)
    for ri, restriction in enumerate(restrictions):
        xs, ys, lo, hi = [], [], [], []
        for fi, functional in enumerate(functionals):
            for rec in ok:
                if rec["restriction"] == restriction and rec["functional"] == functional:
                    xs.append(fi + (ri - (len(restrictions) - 1) / 2) * width)
                    ys.append(rec["estimate"])
                    lo.append(rec["estimate"] - rec["lower"])
                    hi.append(rec["upper"] - rec["estimate"])
        ax.errorbar(xs, ys, yerr=[lo, hi], fmt="o", capsize=3, label=restriction)
    ax.axhline(0.0, color="grey", linewidth=0.8, linestyle=":")
    ax.set_xticks(range(len(functionals)))
    ax.set_xticklabels(functionals, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("estimate")
    ax.legend(title="restriction", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
