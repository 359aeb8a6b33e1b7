"""Render the experiment figures from results.csv files.

Nothing is recomputed here: every number plotted comes straight from the CSV,
whose header must match the versioned schema exactly.  Rendering is pinned
(Agg backend, fixed style) so identical inputs give identical image bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["SCHEMA", "SchemaError", "PlotSpec", "read_results", "render"]

SCHEMA = (
    "experiment",
    "n",
    "m",
    "h",
    "policy",
    "T",
    "replications",
    "seed",
    "cost_mean",
    "cost_stderr",
)
SCHEMA_VERSION = 1

FIGURE_KINDS = ("fig2a", "fig2b", "regret")

_STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "streamalloc",
}


class SchemaError(ValueError):
    """The input CSV does not carry the expected versioned schema."""


@dataclass(frozen=True)
class PlotSpec:
    csv_path: Path
    kind: str
    out_path: Path
    title: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    n: int
    m: int
    h: Optional[float]
    policy: str
    T: int
    replications: int
    seed: int
    cost_mean: float
    cost_stderr: float


def read_results(path: Path) -> list[ResultRow]:
    """Parse a results file, enforcing the schema comment and header row."""
    lines = Path(path).read_text().splitlines()
    body = []
    version: Optional[int] = None
    for ln in lines:
        if ln.startswith("#"):
            toks = ln[1:].split()
            if len(toks) == 2 and toks[0] == "schema":
                version = int(toks[1])
            continue
        body.append(ln)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"missing or unsupported schema comment (got {version})")
    if not body or tuple(body[0].split(",")) != SCHEMA:
        raise SchemaError(f"header row does not match schema {','.join(SCHEMA)}")
    rows = []
    for ln in body[1:]:
        if not ln.strip():
            continue
        parts = ln.split(",")
        if len(parts) != len(SCHEMA):
            raise SchemaError(f"row has {len(parts)} fields, expected {len(SCHEMA)}")
        rows.append(
            ResultRow(
                experiment=parts[0],
                n=int(parts[1]),
                m=int(parts[2]),
                h=float(parts[3]) if parts[3] else None,
                policy=parts[4],
                T=int(parts[5]),
                replications=int(parts[6]),
                seed=int(parts[7]),
                cost_mean=float(parts[8]),
                cost_stderr=float(parts[9]),
            )
        )
    if not rows:
        raise SchemaError("no data rows")
    return rows


def _series(rows: Sequence[ResultRow], policy: str, h: Optional[float]):
    pts = sorted(
        (r for r in rows if r.policy == policy and r.h == h), key=lambda r: r.n
    )
    return (
        np.array([r.n for r in pts]),
        np.array([r.cost_mean for r in pts]),
        np.array([r.cost_stderr for r in pts]),
    )


def _render_cost_vs_n(rows, ax, policies: dict[str, str]) -> None:
    hs = sorted({r.h for r in rows if r.h is not None})
    for policy, label in policies.items():
        for h in hs:
            n, mean, err = _series(rows, policy, h)
            if n.size == 0:
                continue
            ax.errorbar(n, mean, yerr=err, marker="o", capsize=3,
                        label=f"{label}, h={h:g}")
    n, mean, err = _series(rows, "bound", None)
    if n.size:
        ax.plot(n, mean, "k--", label="lower bound")
    ax.set_xlabel("users n")
    ax.set_ylabel("total cost")
    ax.legend(fontsize=8)


def _render_regret(rows, ax) -> None:
    ts, mean, err = [], [], []
    for r in sorted(rows, key=lambda r: r.T):
        if r.policy == "ifestival_excess":
            ts.append(r.T)
            mean.append(max(r.cost_mean, 1e-12))
            err.append(r.cost_stderr)
    ts = np.array(ts, dtype=float)
    mean = np.array(mean)
    ax.errorbar(ts, mean, yerr=err, marker="o", capsize=3, label="excess pauses")
    ref = ts ** (2.0 / 3.0) * np.log(ts)
    ref *= mean[-1] / ref[-1]
    ax.plot(ts, ref, "k--", label=r"$T^{2/3}\log T$ reference")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("epochs T")
    ax.set_ylabel("excess pauses")
    ax.legend(fontsize=8)


def render(spec: PlotSpec) -> Path:
    """Render one figure; returns the output path."""
    rows = read_results(spec.csv_path)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        if spec.kind == "fig2a":
            _render_cost_vs_n(rows, ax, {"allocate": "channel allocation"})
        elif spec.kind == "fig2b":
            _render_cost_vs_n(
                rows, ax, {"ifestival": "learning", "roundrobin": "round robin"}
            )
        else:
            _render_regret(rows, ax)
        if spec.title:
            ax.set_title(spec.title)
        fig.tight_layout()
        spec.out_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.out_path, metadata={"Software": "streamalloc-plots"})
        plt.close(fig)
    return spec.out_path
