"""MSE, RMSE, MBE and Willmott's index of agreement over masked fields.

All metrics pool every valid pixel (not per-patch averages) and accumulate in
float64.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from hyperaod.errors import DataError


@dataclass
class MetricsReport:
    mse: float
    rmse: float
    mbe: float
    ioa: float
    n_valid: int
    model_name: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _pooled(pred, obs, mask) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    o = np.asarray(obs, dtype=np.float64)
    if p.shape != o.shape:
        raise DataError(f"prediction {p.shape} and observation {o.shape} shapes differ")
    m = np.ones(p.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != p.shape:
        raise DataError(f"mask {m.shape} does not match fields {p.shape}")
    return p[m], o[m]


def index_of_agreement(p: np.ndarray, o: np.ndarray) -> float:
    """1 - sum (P-O)^2 / sum (|P-Obar| + |O-Obar|)^2.

    A zero denominator means both fields equal the observed mean everywhere;
    the index is then 1 if the numerator is also zero and 0 otherwise.
    """
    obar = o.mean()
    num = np.sum((p - o) ** 2)
    den = np.sum((np.abs(p - obar) + np.abs(o - obar)) ** 2)
    if den == 0:
        return 1.0 if num == 0 else 0.0
    return float(min(1.0, max(0.0, 1.0 - num / den)))


def compute_metrics(pred, obs, mask=None, model_name: str = "") -> MetricsReport:
    p, o = _pooled(pred, obs, mask)
    if p.size == 0:
        raise DataError("no valid pixels to score")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(o))):
        raise DataError("non-finite values at valid pixels")
    err = p - o
    mse = float(np.mean(err * err))
    return MetricsReport(mse, math.sqrt(mse), float(np.mean(err)), index_of_agreement(p, o),
                         int(p.size), model_name)


_COLUMNS = (("mse", "MSE (↓)"), ("rmse", "RMSE (↓)"), ("mbe", "MBE (↓|·|)"), ("ioa", "IOA (↑)"))


def best_rows(reports: Sequence[MetricsReport]) -> dict[str, int]:
    """Index of the best report per metric: lowest MSE/RMSE, lowest |MBE|, highest IOA."""
    keys = {
        "mse": lambda r: r.mse,
        "rmse": lambda r: r.rmse,
        "mbe": lambda r: abs(r.mbe),
        "ioa": lambda r: -r.ioa,
    }
    return {k: min(range(len(reports)), key=lambda i: f(reports[i])) for k, f in keys.items()}


def export_table(reports: Sequence[MetricsReport], out_dir=None) -> tuple[str, dict]:
    """Render a markdown table with best values in bold plus its JSON twin.

    When ``out_dir`` is given, writes ``metrics.md`` and ``metrics.json`` there.
    """
    if not reports:
        raise DataError("no reports to tabulate")
    best = best_rows(reports)
    lines = ["| Model | " + " | ".join(title for _, title in _COLUMNS) + " |",
             "|---" * (len(_COLUMNS) + 1) + "|"]
    for i, r in enumerate(reports):
        cells = []
        for key, _ in _COLUMNS:
            text = f"{getattr(r, key):.4f}"
            cells.append(f"**{text}**" if best[key] == i else text)
        lines.append(f"| {r.model_name or f'model{i}'} | " + " | ".join(cells) + " |")
    markdown = "\n".join(lines) + "\n"
    table = {"rows": [r.to_dict() for r in reports],
             "best": {k: reports[i].model_name for k, i in best.items()}}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.md").write_text(markdown)
        (out / "metrics.json").write_text(json.dumps(table, indent=2))
    return markdown, table


def read_table(path) -> list[MetricsReport]:
    table = json.loads(Path(path).read_text())
    return [MetricsReport(**row) for row in table["rows"]]


@dataclass
class ScatterData:
    counts: np.ndarray
    obs_edges: np.ndarray
    pred_edges: np.ndarray
    n_valid: int


def export_scatter(pred, obs, mask=None, *, value_range=(0.0, 1.5), bins: int = 100,
                   out_dir=None, title: Optional[str] = None) -> ScatterData:
    """Density-binned observed-vs-predicted histogram; writes scatter.csv/.png when ``out_dir`` is set.

    Points outside ``value_range`` are not counted.
    """
    p, o = _pooled(pred, obs, mask)
    if p.size == 0:
        raise DataError("no valid pixels for the scatter plot")
    lo, hi = value_range
    counts, oe, pe = np.histogram2d(o, p, bins=bins, range=[[lo, hi], [lo, hi]])
    data = ScatterData(counts.astype(np.int64), oe, pe, int(p.size))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "scatter.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["obs_lo", "obs_hi", "pred_lo", "pred_hi", "count"])
            for i in range(bins):
                for j in range(bins):
                    if data.counts[i, j]:
                        w.writerow([oe[i], oe[i + 1], pe[j], pe[j + 1], int(data.counts[i, j])])
        _plot_scatter(data, out / "scatter.png", title)
    return data


def _plot_scatter(data: ScatterData, path: Path, title: Optional[str]) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.colors import LogNorm

    fig, ax = plt.subplots(figsize=(4.5, 4))
    lo, hi = data.obs_edges[0], data.obs_edges[-1]
    masked = np.ma.masked_equal(data.counts.T, 0)
    im = ax.pcolormesh(data.obs_edges, data.pred_edges, masked, norm=LogNorm(), cmap="viridis")
    ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
    ax.set_xlabel("reference AOD")
    ax.set_ylabel("retrieved AOD")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="pixels")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
