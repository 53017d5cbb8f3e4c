from pathlib import Path

import pytest

from dmcvqkd_figures.render import (
    FigureSpecError,
    build_figure,
    load_spec,
    main,
    render,
)

SPECS_DIR = Path(__file__).resolve().parents[1] / "specs"

HEADER = (
    "axis,value,rate,raw_rate,lower_bound_D,delta_ec,p_pass,n_cutoff,fw_gap,"
    "fw_iterations,sdp_feas_tol,sdp_gap_tol,epsilon,seed,runtime_s,version,"
    "fingerprint,status"
)


def write_csv(path: Path, rows):
    lines = [HEADER]
    for value, rate in rows:
        lines.append(
            f"length_km,{value},{rate},{rate},1.99,1.98,1.0,8,1e-6,10,1e-8,1e-8,"
            f"1e-9,7,0.5,0.1.0,abc123,ok"
        )
    path.write_text("\n".join(lines) + "\n")


def write_spec(path: Path, csv_names, log_y=True):
    series = "\n".join(
        f'[[series]]\ncsv = "{name}"\nlabel = "series {i}"\n'
        for i, name in enumerate(csv_names)
    )
    path.write_text(
        f"""
[figure]
title = "test figure"
x_label = "distance (km)"
y_label = "rate"
log_y = {str(log_y).lower()}
output = "out.png"

{series}
"""
    )


def test_render_basic(tmp_path):
    write_csv(tmp_path / "a.csv", [(10, 1e-3), (20, 5e-4)])
    write_csv(tmp_path / "b.csv", [(10, 2e-3), (20, 8e-4)])
    write_spec(tmp_path / "fig.toml", ["a.csv", "b.csv"])
    out = render(tmp_path / "fig.toml")
    assert out.exists()
    fig = build_figure(load_spec(tmp_path / "fig.toml"))
    ax = fig.axes[0]
    assert ax.get_yscale() == "log"
    assert len(ax.get_lines()) == 2
    assert [ln.get_label() for ln in ax.get_lines()] == ["series 0", "series 1"]


def test_missing_column_is_loud(tmp_path):
    (tmp_path / "bad.csv").write_text("axis,value\nlength_km,10\n")
    write_spec(tmp_path / "fig.toml", ["bad.csv"])
    with pytest.raises(FigureSpecError, match="missing columns.*rate"):
        render(tmp_path / "fig.toml")


def test_empty_csv_is_loud(tmp_path):
    (tmp_path / "empty.csv").write_text(HEADER + "\n")
    write_spec(tmp_path / "fig.toml", ["empty.csv"])
    with pytest.raises(FigureSpecError, match="no data rows"):
        render(tmp_path / "fig.toml")
    assert not (tmp_path / "out.png").exists()


def test_zero_rates_dropped_from_log_with_footnote(tmp_path):
    write_csv(tmp_path / "a.csv", [(10, 1e-3), (20, 0.0), (30, 0.0)])
    write_spec(tmp_path / "fig.toml", ["a.csv"])
    fig = build_figure(load_spec(tmp_path / "fig.toml"))
    ax = fig.axes[0]
    assert len(ax.get_lines()[0].get_xdata()) == 1
    notes = [t.get_text() for t in fig.texts]
    assert any("2 zero-rate" in n for n in notes)


def test_linear_scale_keeps_zero_rates(tmp_path):
    write_csv(tmp_path / "a.csv", [(10, 1e-3), (20, 0.0)])
    write_spec(tmp_path / "fig.toml", ["a.csv"], log_y=False)
    fig = build_figure(load_spec(tmp_path / "fig.toml"))
    ax = fig.axes[0]
    assert ax.get_yscale() == "linear"
    assert len(ax.get_lines()[0].get_xdata()) == 2


def test_spec_requires_series(tmp_path):
    (tmp_path / "fig.toml").write_text(
        '[figure]\ntitle = "t"\nx_label = "x"\ny_label = "y"\noutput = "o.png"\n'
    )
    with pytest.raises(FigureSpecError, match="at least one series"):
        load_spec(tmp_path / "fig.toml")


def test_cli_reports_errors(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("axis,value\nlength_km,10\n")
    write_spec(tmp_path / "fig.toml", ["bad.csv"])
    code = main([str(tmp_path / "fig.toml")])
    assert code == 1
    assert "missing columns" in capsys.readouterr().err


EXPECTED_SERIES = {
    "distance_families.toml": 3,
    "amplitude_sweep.toml": 2,
    "distance_trusted_detector.toml": 3,
    "distance_excess_noise.toml": 3,
    "amplitude_trusted_detector.toml": 1,
    "postselection_radius.toml": 2,
}


@pytest.mark.parametrize("spec_name", sorted(EXPECTED_SERIES))
def test_checked_in_figures_regenerate(spec_name, tmp_path):
    spec_path = SPECS_DIR / spec_name
    spec = load_spec(spec_path)
    fig = build_figure(spec)
    ax = fig.axes[0]
    assert len(ax.get_lines()) == EXPECTED_SERIES[spec_name]
    assert ax.get_yscale() == "log"
    assert ax.get_xlabel() and ax.get_ylabel()
    out = render(spec_path, out_dir=tmp_path)
    assert out.exists() and out.stat().st_size > 0
