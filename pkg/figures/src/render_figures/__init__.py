"""Render plots from the pricing engine's CSV outputs.

Five figure ids are supported, one per consumed CSV schema:

    cost        xi,C,C_tilde             solid cost curve, dashed average
    beta        H,beta                   nonlinear flux against cash Gamma
    prices_bid  S,V_model,V_bin_min,V_bin_max
    prices_ask  S,V_model,V_bin_min,V_bin_max
    boundary    t,S_f_model,S_f_bin_sigma_min,S_f_bin_sigma_max

Rendering is deterministic: axis limits come from the finite data extents
with five percent padding.  Columns that carry no finite value (the solver's
+inf sentinel for "no exercise region") are dropped from the plot and noted
in the legend.  Invoked as ``render_figures <figure-id> <csv> <out.png>``.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

__all__ = ["FigureSpec", "RenderError", "FIGURE_IDS", "build_figure",
           "render", "main"]

FIGURE_IDS = ("cost", "beta", "prices_bid", "prices_ask", "boundary")

_REQUIRED_COLUMNS = {
    "cost": ("xi", "C", "C_tilde"),
    "beta": ("H", "beta"),
    "prices_bid": ("S", "V_model", "V_bin_min", "V_bin_max"),
    "prices_ask": ("S", "V_model", "V_bin_min", "V_bin_max"),
    "boundary": ("t", "S_f_model", "S_f_bin_sigma_min", "S_f_bin_sigma_max"),
}


class RenderError(RuntimeError):
    """Unusable input: unknown figure id, missing column or empty data."""


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    csv_path: Path
    out_path: Path

    def __post_init__(self):
        if self.figure_id not in FIGURE_IDS:
            raise RenderError(f"unknown figure id {self.figure_id!r}; "
                              f"expected one of {', '.join(FIGURE_IDS)}")


def read_columns(path: Path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    try:
        lines = [line for line in Path(path).read_text().splitlines() if line.strip()]
    except OSError as exc:
        raise RenderError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise RenderError(f"{path} is empty")
    header = [name.strip() for name in lines[0].split(",")]
    missing = [name for name in required if name not in header]
    if missing:
        raise RenderError(f"{path} lacks required column(s): {', '.join(missing)}")
    if len(lines) < 2:
        raise RenderError(f"{path} has a header but no data rows")
    try:
        table = np.array([[float(cell) for cell in line.split(",")]
                          for line in lines[1:]])
    except ValueError as exc:
        raise RenderError(f"{path} holds non-numeric data: {exc}") from exc
    if table.shape[1] != len(header):
        raise RenderError(f"{path} has ragged rows")
    return {name: table[:, idx] for idx, name in enumerate(header)}


def _padded_limits(values: list[np.ndarray]) -> tuple[float, float]:
    finite = np.concatenate([np.asarray(v)[np.isfinite(v)] for v in values])
    if finite.size == 0:
        raise RenderError("no finite data to plot")
    lo, hi = float(finite.min()), float(finite.max())
    pad = 0.05 * (hi - lo) if hi > lo else max(0.05 * abs(hi), 1e-3)
    return lo - pad, hi + pad


def _plot_curves(ax, x, curves) -> list[np.ndarray]:
    """Plot (label, y, style) triples, dropping all-sentinel columns."""
    drawn = []
    for label, y, style in curves:
        if np.isfinite(y).any():
            ax.plot(x, y, style, label=label)
            drawn.append(y)
        else:
            ax.plot([], [], " ", label=f"{label} (no exercise region)")
    if not drawn:
        raise RenderError("every curve is sentinel-valued; nothing to plot")
    return drawn


def build_figure(spec: FigureSpec) -> Figure:
    data = read_columns(spec.csv_path, _REQUIRED_COLUMNS[spec.figure_id])
    fig = Figure(figsize=(6.4, 4.8), dpi=120)
    ax = fig.add_subplot()

    if spec.figure_id == "cost":
        x = data["xi"]
        drawn = _plot_curves(ax, x, [
            ("C", data["C"], "-"),
            ("averaged C", data["C_tilde"], "--"),
        ])
        ax.set_xlabel("traded volume xi")
        ax.set_ylabel("cost fraction")
    elif spec.figure_id == "beta":
        x = data["H"]
        drawn = _plot_curves(ax, x, [("beta(H)", data["beta"], "-")])
        ax.set_xlabel("cash Gamma H")
        ax.set_ylabel("flux beta")
    elif spec.figure_id in ("prices_bid", "prices_ask"):
        x = data["S"]
        side = spec.figure_id.split("_")[1]
        drawn = _plot_curves(ax, x, [
            ("tree, lower volatility", data["V_bin_min"], ":"),
            (f"model ({side})", data["V_model"], "-"),
            ("tree, upper volatility", data["V_bin_max"], ":"),
        ])
        ax.set_xlabel("spot price S")
        ax.set_ylabel("option value")
    else:  # boundary
        x = data["t"]
        drawn = _plot_curves(ax, x, [
            ("model", data["S_f_model"], "--"),
            ("tree, lower volatility", data["S_f_bin_sigma_min"], "-"),
            ("tree, upper volatility", data["S_f_bin_sigma_max"], "-"),
        ])
        ax.set_xlabel("calendar time t")
        ax.set_ylabel("exercise boundary")

    ax.set_xlim(*_padded_limits([x]))
    ax.set_ylim(*_padded_limits(drawn))
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    return fig


def render(spec: FigureSpec) -> Path:
    """Build the figure and write the image; no file is left on failure."""
    fig = build_figure(spec)
    out = Path(spec.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render_figures",
        description="render plots from pricing-engine CSV files")
    parser.add_argument("figure_id", choices=FIGURE_IDS)
    parser.add_argument("csv", nargs="+", help="input CSV file")
    parser.add_argument("out", help="output image path")
    args = parser.parse_args(argv)
    if len(args.csv) != 1:
        print(f"render error: figure {args.figure_id!r} consumes exactly one "
              f"CSV file, got {len(args.csv)}", file=sys.stderr)
        return 1
    try:
        out = render(FigureSpec(figure_id=args.figure_id,
                                csv_path=Path(args.csv[0]),
                                out_path=Path(args.out)))
    except RenderError as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
