"""Figures for the report commands.

The ROC curve is always written as a dependency-free SVG. PNG renderings of
the ROC curve and of the importance ranking go through matplotlib (Agg).
"""

from __future__ import annotations

from typing import Sequence

SVG_SIZE = 600
PLOT_LEFT, PLOT_TOP, PLOT_SPAN = 60.0, 40.0, 500.0


def to_svg_xy(fpr: float, tpr: float) -> tuple[float, float]:
    """Map a unit-square ROC point to SVG user coordinates (y grows downward)."""
    return PLOT_LEFT + PLOT_SPAN * fpr, PLOT_TOP + PLOT_SPAN * (1.0 - tpr)


def from_svg_xy(x: float, y: float) -> tuple[float, float]:
    return (x - PLOT_LEFT) / PLOT_SPAN, 1.0 - (y - PLOT_TOP) / PLOT_SPAN


def roc_svg(fpr: Sequence[float], tpr: Sequence[float], auc: float | None = None) -> str:
    x0, y0 = to_svg_xy(0.0, 0.0)
    x1, y1 = to_svg_xy(1.0, 1.0)
    pts = " ".join("{:.3f},{:.3f}".format(*to_svg_xy(a, b)) for a, b in zip(fpr, tpr))
    ticks = []
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        tx, _ = to_svg_xy(t, 0.0)
        _, ty = to_svg_xy(0.0, t)
        ticks.append(f'<line x1="{tx:.1f}" y1="{y0:.1f}" x2="{tx:.1f}" y2="{y0 + 6:.1f}" stroke="black"/>')
        ticks.append(f'<text x="{tx:.1f}" y="{y0 + 22:.1f}" font-size="12" text-anchor="middle">{t:g}</text>')
        ticks.append(f'<line x1="{x0 - 6:.1f}" y1="{ty:.1f}" x2="{x0:.1f}" y2="{ty:.1f}" stroke="black"/>')
        ticks.append(f'<text x="{x0 - 10:.1f}" y="{ty + 4:.1f}" font-size="12" text-anchor="end">{t:g}</text>')
    title = "ROC curve" if auc is None else f"ROC curve (AUC = {auc:.4f})"
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}" '
        f'width="{SVG_SIZE}" height="{SVG_SIZE}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{x0:.1f}" y="{y1:.1f}" width="{PLOT_SPAN:.1f}" height="{PLOT_SPAN:.1f}" '
        'fill="none" stroke="black"/>',
        f'<line class="diagonal" x1="{x0:.1f}" y1="{y0:.1f}" x2="{x1:.1f}" y2="{y1:.1f}" '
        'stroke="gray" stroke-dasharray="6,6"/>',
        *ticks,
        f'<text x="{SVG_SIZE / 2:.1f}" y="{SVG_SIZE - 12:.1f}" font-size="14" '
        'text-anchor="middle">False positive rate</text>',
        f'<text x="16" y="{SVG_SIZE / 2:.1f}" font-size="14" text-anchor="middle" '
        f'transform="rotate(-90 16 {SVG_SIZE / 2:.1f})">True positive rate</text>',
        f'<text x="{SVG_SIZE / 2:.1f}" y="24" font-size="16" text-anchor="middle">{title}</text>',
        f'<polyline class="roc" points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>',
        "</svg>",
    ]
    return "\n".join(lines) + "\n"


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_roc(fpr, tpr, auc, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(fpr, tpr, lw=2, label=f"AUC = {auc:.4f}")
    ax.plot([0, 1], [0, 1], ls="--", color="gray", lw=1)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def plot_importance(ranked: Sequence[tuple[str, float]], path, top: int = 10, kind: str = "gain") -> None:
    """Horizontal bar chart of the ``top`` most important features."""
    plt = _pyplot()
    items = list(ranked)[:top][::-1]
    fig, ax = plt.subplots(figsize=(6, 0.4 * max(len(items), 1) + 1.2))
    ax.barh([name for name, _ in items], [score for _, score in items], color="#1f77b4")
    ax.set_xlabel(f"importance ({kind})")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
