"""Figure rendering for experiment outputs.

Reads the delimited result files (``summary.csv``, ``sweep.csv``,
``trace_*.csv``) and renders matplotlib figures next to them.  Pure
post-processing: nothing here feeds back into experiments.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

STYLE = {
    "figure.figsize": (7.0, 4.4),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}


def _read_csv(path: Path) -> list[dict]:
    with path.open(newline="", encoding="utf-8") as fh:
        return [dict(row) for row in csv.DictReader(fh)]


def _num(row: dict, key: str) -> float:
    v = row.get(key, "")
    return float(v) if v not in ("", None) else math.nan

def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def fig_regret_vs_horizon(rows: list[dict], out: Path) -> Optional[Path]:
    """Log-log mean regret against horizon, one line per policy, with the
    fitted scaling exponent in the legend."""
    policies = sorted({r["policy"] for r in rows})
    ns_by_policy = {
        p: sorted({int(float(r["n"])) for r in rows if r["policy"] == p}) for p in policies
    }
    if all(len(v) < 2 for v in ns_by_policy.values()):
        return None
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for p in policies:
            pts = sorted(
                (int(float(r["n"])), _num(r, "mean_regret"))
                for r in rows if r["policy"] == p
            )
            ns = np.array([n for n, _ in pts], dtype=float)
            ms = np.array([m for _, m in pts], dtype=float)
            ok = ms > 0
            label = p
            if ok.sum() >= 2:
                slope = np.polyfit(np.log(ns[ok]), np.log(ms[ok]), 1)[0]
                label = f"{p} (slope {slope:.2f})"
            ax.loglog(ns, np.maximum(ms, 1e-12), marker="o", label=label)
        ax.set_xlabel("horizon n")
        ax.set_ylabel("mean final regret")
        ax.set_title("Regret scaling")
        ax.legend()
        return _save(fig, out)


def fig_regret_quantiles(rows: list[dict], out: Path) -> Optional[Path]:
    """Mean / median / tail quantiles of final regret per policy at the
    largest horizon present."""
    if not rows:
        return None
    n_max = max(int(float(r["n"])) for r in rows)
    sel = [r for r in rows if int(float(r["n"])) == n_max]
    if not sel:
        return None
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        xs = np.arange(len(sel))
        width = 0.22
        for off, key in ((-1.0, "mean_regret"), (0.0, "p50"), (1.0, "p95"), (2.0, "p98")):
            ax.bar(xs + off * width, [_num(r, key) for r in sel], width, label=key)
        ax.set_xticks(xs + width / 2)
        ax.set_xticklabels([r["policy"] for r in sel], rotation=15)
        ax.set_ylabel("final regret")
        ax.set_title(f"Regret distribution at n={n_max}")
        ax.legend()
        return _save(fig, out)


def fig_sweep(rows: list[dict], out: Path) -> Optional[Path]:
    """Mean regret (solid) and 95th percentile (dashed) against the swept
    hyperparameter, one color per policy."""
    if not rows:
        return None
    param = rows[0].get("param", "value")
    policies = sorted({r["policy"] for r in rows})
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for p in policies:
            pts = sorted(
                (_num(r, "value"), _num(r, "mean_regret"), _num(r, "p95"))
                for r in rows if r["policy"] == p
            )
            vals = [v for v, _, _ in pts]
            line = ax.plot(vals, [m for _, m, _ in pts], marker="o", label=f"{p} mean")[0]
            ax.plot(vals, [q for _, _, q in pts], linestyle="--", marker="x",
                    color=line.get_color(), alpha=0.7, label=f"{p} p95")
        ax.set_xlabel(param)
        ax.set_ylabel("final regret")
        ax.set_title(f"Regret vs {param}")
        ax.legend()
        return _save(fig, out)


def fig_traces(paths: list[Path], out: Path, max_traces: int = 40) -> Optional[Path]:
    """Overlay of cumulative-regret trajectories."""
    if not paths:
        return None
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for p in sorted(paths)[:max_traces]:
            rows = _read_csv(p)
            if not rows:
                continue
            t = [int(float(r["t"])) for r in rows]
            reg = [float(r["regret"]) for r in rows]
            ax.plot(t, reg, alpha=0.5, linewidth=0.9)
        ax.set_xlabel("t")
        ax.set_ylabel("cumulative regret")
        ax.set_title(f"Regret trajectories ({min(len(paths), max_traces)} shown)")
        return _save(fig, out)


def render_report(directory: Path, out_dir: Path) -> list[Path]:
    """Render every figure the directory's result files support."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    summary = directory / "summary.csv"
    if summary.exists():
        rows = _read_csv(summary)
        for fn, name in (
            (fig_regret_vs_horizon, "regret_vs_horizon.png"),
            (fig_regret_quantiles, "regret_quantiles.png"),
        ):
            path = fn(rows, out_dir / name)
            if path is not None:
                written.append(path)
    sweep = directory / "sweep.csv"
    if sweep.exists():
        path = fig_sweep(_read_csv(sweep), out_dir / "sweep.png")
        if path is not None:
            written.append(path)
    traces = list(directory.glob("trace_*.csv"))
    if traces:
        path = fig_traces(traces, out_dir / "traces.png")
        if path is not None:
            written.append(path)
    return written
