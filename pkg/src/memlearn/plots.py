"""Bar-chart rendering of a MetricsReport, one figure per metric."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def render_report(report, out_dir) -> list[str]:
    """Write fig_<metric>.png per numeric metric; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    policies = list(dict.fromkeys(r.policy for r in report.rows))
    mtps_values = sorted({r.mtps for r in report.rows if r.mtps is not None})
    paths = []
    for metric in report.columns:
        series = {}
        for group in (mtps_values or [None]):
            vals = []
            for p in policies:
                row = next((r for r in report.rows
                            if r.policy == p and r.mtps == group), None)
                v = row.metrics.get(metric) if row else None
                vals.append(v if isinstance(v, (int, float))
                            and not isinstance(v, bool) else None)
            series[group] = vals
        if all(v is None for vals in series.values() for v in vals):
            continue
        fig, ax = plt.subplots(figsize=(6, 3.2))
        n_groups = len(series)
        width = 0.8 / n_groups
        xs = range(len(policies))
        for gi, (group, vals) in enumerate(series.items()):
            offs = [x + gi * width - 0.4 + width / 2 for x in xs]
            label = None if group is None else f"{group:g} MTPS"
            ax.bar(offs, [0.0 if v is None else v for v in vals],
                   width=width, label=label)
        ax.set_xticks(list(xs))
        ax.set_xticklabels(policies, rotation=20, ha="right")
        ax.set_ylabel(metric)
        ax.set_title(f"{report.meta.get('kind')}: {metric}")
        if n_groups > 1:
            ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(out_dir, f"fig_{metric}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
