from pathlib import Path

import numpy as np
import pytest

from render_figures import (FIGURE_IDS, FigureSpec, RenderError, build_figure,
                            main, render)


def write_csv(path: Path, header: str, rows) -> Path:
    lines = [header] + [",".join(f"{v:.6f}" if not isinstance(v, str) else v
                                 for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def cost_csv(tmp_path):
    xi = np.linspace(0.0, 0.4, 21)
    c = np.where(xi < 0.05, 0.02, np.where(xi <= 0.1, 0.02 - 0.3 * (xi - 0.05), 0.005))
    ct = np.clip(0.02 - 0.12 * xi, 0.005, 0.02)
    return write_csv(tmp_path / "cost_curve.csv", "xi,C,C_tilde", zip(xi, c, ct))


@pytest.fixture
def beta_csv(tmp_path):
    h = np.linspace(0.0, 25.0, 26)
    return write_csv(tmp_path / "beta_curve.csv", "H,beta", zip(h, 0.01 * h))


@pytest.fixture
def curves_csv(tmp_path):
    s = np.linspace(40.0, 60.0, 11)
    lo = np.maximum(s - 50.0, 0.0) + 1.0
    mid = lo + 0.8
    hi = lo + 2.0
    return write_csv(tmp_path / "curves_bid_2x2.csv",
                     "S,V_model,V_bin_min,V_bin_max", zip(s, mid, lo, hi))


@pytest.fixture
def boundary_csv(tmp_path):
    t = np.linspace(0.0, 0.99, 12)
    model = 75.0 - 5.0 * t
    lo = model - 1.0
    hi = model + 1.0
    return write_csv(tmp_path / "boundary_bid_2x2.csv",
                     "t,S_f_model,S_f_bin_sigma_min,S_f_bin_sigma_max",
                     zip(t, model, lo, hi))


class TestRendering:
    def test_all_ids_render(self, tmp_path, cost_csv, beta_csv, curves_csv,
                            boundary_csv):
        sources = {"cost": cost_csv, "beta": beta_csv, "prices_bid": curves_csv,
                   "prices_ask": curves_csv, "boundary": boundary_csv}
        for fid in FIGURE_IDS:
            out = render(FigureSpec(fid, sources[fid], tmp_path / f"{fid}.png"))
            assert out.exists() and out.stat().st_size > 0

    def test_cost_styles(self, cost_csv, tmp_path):
        fig = build_figure(FigureSpec("cost", cost_csv, tmp_path / "c.png"))
        lines = {l.get_label(): l for l in fig.axes[0].lines}
        assert lines["C"].get_linestyle() == "-"
        assert lines["averaged C"].get_linestyle() == "--"

    def test_axis_limits_deterministic(self, curves_csv, tmp_path):
        spec = FigureSpec("prices_bid", curves_csv, tmp_path / "p.png")
        first = build_figure(spec).axes[0]
        second = build_figure(spec).axes[0]
        assert first.get_xlim() == second.get_xlim()
        assert first.get_ylim() == second.get_ylim()
        # extents padded by five percent of the data span
        x = np.linspace(40.0, 60.0, 11)
        assert first.get_xlim() == pytest.approx((39.0, 61.0))

    def test_sentinel_column_omitted_with_note(self, tmp_path):
        t = np.linspace(0.0, 0.99, 8)
        rows = zip(t, [float("inf")] * 8, 70.0 - t, 72.0 - t)
        path = write_csv(tmp_path / "boundary_q0.csv",
                         "t,S_f_model,S_f_bin_sigma_min,S_f_bin_sigma_max", rows)
        fig = build_figure(FigureSpec("boundary", path, tmp_path / "b.png"))
        labels = [l.get_label() for l in fig.axes[0].lines]
        assert "model (no exercise region)" in labels
        drawn = [l for l in fig.axes[0].lines if l.get_xdata().size]
        assert len(drawn) == 2

    def test_all_sentinel_is_an_error(self, tmp_path):
        t = np.linspace(0.0, 0.9, 5)
        inf = [float("inf")] * 5
        path = write_csv(tmp_path / "boundary_inf.csv",
                         "t,S_f_model,S_f_bin_sigma_min,S_f_bin_sigma_max",
                         zip(t, inf, inf, inf))
        with pytest.raises(RenderError):
            build_figure(FigureSpec("boundary", path, tmp_path / "b.png"))


class TestErrors:
    def test_unknown_figure_id(self, cost_csv, tmp_path):
        with pytest.raises(RenderError):
            FigureSpec("pie", cost_csv, tmp_path / "x.png")

    def test_missing_column_named(self, tmp_path):
        path = write_csv(tmp_path / "bad.csv", "xi,C", [(0.0, 0.02)])
        with pytest.raises(RenderError, match="C_tilde"):
            build_figure(FigureSpec("cost", path, tmp_path / "x.png"))

    def test_empty_csv_writes_nothing(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        out = tmp_path / "x.png"
        with pytest.raises(RenderError):
            render(FigureSpec("cost", path, out))
        assert not out.exists()

    def test_header_only_rejected(self, tmp_path):
        path = tmp_path / "header.csv"
        path.write_text("xi,C,C_tilde\n")
        with pytest.raises(RenderError, match="no data rows"):
            build_figure(FigureSpec("cost", path, tmp_path / "x.png"))

    def test_cli_error_exit(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        assert main(["cost", str(path), str(tmp_path / "x.png")]) == 1

    def test_cli_success(self, cost_csv, tmp_path):
        out = tmp_path / "ok.png"
        assert main(["cost", str(cost_csv), str(out)]) == 0
        assert out.exists()

    def test_cli_exactly_one_csv(self, cost_csv, tmp_path):
        assert main(["cost", str(cost_csv), str(cost_csv),
                     str(tmp_path / "x.png")]) == 1
