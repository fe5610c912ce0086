"""PNG renderings of the report plot tables (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp.png")
    fig.savefig(tmp, dpi=120, metadata={"Software": None})
    plt.close(fig)
    tmp.replace(path)
    return path


def decay_figure(rows, path) -> Path | None:
    """Scatter of ``log(|psi| sqrt(V))`` against scaled distance, one colour per level."""
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    levels = sorted({int(r["level"]) for r in rows})
    for k in levels:
        pts = [(float(r["t"]), float(r["log_scaled_abs"])) for r in rows if int(r["level"]) == k]
        ax.scatter(*zip(*pts), s=6, label=f"k={k}")
    ax.set_xlabel(r"$d(y,x)/\delta^k$")
    ax.set_ylabel(r"$\log(|\psi|\sqrt{V})$")
    ax.legend(fontsize=7, ncol=2)
    ax.set_title("wavelet decay samples")
    fig.tight_layout()
    return _save(fig, Path(path))


def ratios_figure(rows, path) -> Path | None:
    """Experiment ratio quantiles against the number of points."""
    if not rows:
        return None
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2), sharex=True)
    for ax, key in zip(axes, ("r1", "r2", "r3")):
        for q in ("max", "p95", "p50"):
            pts = sorted((int(r["n"]), float(r[key])) for r in rows if r["quantile"] == q and r[key] not in ("", None))
            if pts:
                ax.plot(*zip(*pts), marker="o", label=q)
        ax.set_xscale("log", base=2)
        ax.set_title(key)
        ax.set_xlabel("n")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, Path(path))
