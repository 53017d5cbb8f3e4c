import re

import pytest

from dmcvqkd.cli import main
from dmcvqkd.scenario import ConfigError, parse_config

FAST_NUMERICS = """
[numerics]
n_cutoff = 3
fw_max_iterations = 25
"""

MINIMAL = """
[constellation]
alpha = 0.6

[channel]
length_km = 10.0
excess_noise = 0.01
"""


def write(tmp_path, text, name="scenario.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_parse_minimal_config_defaults():
    scenario, sweep = parse_config(MINIMAL)
    assert scenario.alpha == 0.6
    assert scenario.detector.eta_d == 1.0
    assert scenario.beta == 0.956
    assert scenario.numerics.n_cutoff == 12
    assert sweep is None


def test_parse_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown key channel.attenuaton"):
        parse_config(MINIMAL.replace("excess_noise", "attenuaton"))
    with pytest.raises(ConfigError, match=r"unknown section \[chanel\]"):
        parse_config(MINIMAL.replace("[channel]", "[chanel]") + "\n")


def test_parse_rejects_out_of_range_detector():
    text = MINIMAL + "\n[detector]\neta_d = 1.3\n"
    with pytest.raises(ConfigError, match="eta_d"):
        parse_config(text)


def test_parse_collects_multiple_errors():
    bad = """
[constellation]
alpha = 0.6
alhpa = 0.7

[channel]
length_km = 10.0
exces_noise = 0.01
"""
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    message = str(err.value)
    assert "constellation.alhpa" in message
    assert "channel.exces_noise" in message


def test_parse_device_table_and_nu_s_exclusive():
    text = MINIMAL + """
[source]
nu_s = 0.01

  [source.device]
  modulation_variance = 0.7
"""
    with pytest.raises(ConfigError, match="mutually exclusive"):
        parse_config(text)


def test_parse_device_table_builds_budget():
    text = MINIMAL + """
[source]
trusted = true

  [source.device]
  modulation_variance = 1.0
  extinction_db = 30.0
"""
    scenario, _ = parse_config(text)
    nu, residual = scenario.resolved_source_noise()
    assert abs(nu - 1e-3) < 1e-12
    assert residual == 0.0


def test_parse_sweep_section_range():
    text = MINIMAL + """
[sweep]
axis = "length_km"
start = 10.0
stop = 30.0
step = 10.0
"""
    _, sweep = parse_config(text)
    assert sweep.axis == "length_km"
    assert sweep.values == (10.0, 20.0, 30.0)


def test_parse_sweep_rejects_bad_axis():
    text = MINIMAL + """
[sweep]
axis = "wavelength"
values = [1.0]
"""
    with pytest.raises(ConfigError, match="sweep.axis"):
        parse_config(text)


def test_validate_command(tmp_path, capsys):
    path = write(tmp_path, MINIMAL)
    assert main(["validate", path]) == 0
    out = capsys.readouterr().out
    assert "config ok" in out

    bad = write(tmp_path, MINIMAL + "\n[detector]\neta_d = 1.3\n", "bad.toml")
    assert main(["validate", bad]) == 2
    assert "eta_d" in capsys.readouterr().err


def test_run_command_minimal(tmp_path, capsys):
    path = write(tmp_path, MINIMAL + FAST_NUMERICS)
    out_csv = tmp_path / "single.csv"
    assert main(["run", path, "--out", str(out_csv)]) == 0
    printed = capsys.readouterr().out
    assert "rate=" in printed
    lines = out_csv.read_text().splitlines()
    assert lines[0].startswith("axis,value,rate")
    assert lines[1].endswith(",ok")


def test_sweep_deterministic_output(tmp_path):
    path = write(tmp_path, MINIMAL + FAST_NUMERICS)
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["sweep", path, "--axis", "length_km", "--values", "5,10", "--seed", "7"]
    assert main(argv + ["--out", str(out1)]) == 0
    assert main(argv + ["--out", str(out2)]) == 0

    def strip_runtime(text: str) -> str:
        lines = text.splitlines()
        cols = lines[0].split(",")
        idx = cols.index("runtime_s")
        return "\n".join(
            ",".join(v for i, v in enumerate(ln.split(",")) if i != idx)
            for ln in lines
        )

    assert strip_runtime(out1.read_text()) == strip_runtime(out2.read_text())
    # rows ordered by axis value and carry provenance
    rows = out1.read_text().splitlines()[1:]
    values = [float(r.split(",")[1]) for r in rows]
    assert values == sorted(values)
    assert all(re.search(r",7,\d", r) for r in rows)  # seed column


def test_sweep_continues_after_point_failure(tmp_path):
    # a zero-distance, huge-noise point fails in ec_cost (all mass discarded)
    text = MINIMAL + FAST_NUMERICS + """
[postselection]
delta_a = 40.0
"""
    path = write(tmp_path, text)
    out = tmp_path / "fail.csv"
    code = main(["sweep", path, "--axis", "length_km", "--values", "5", "--out", str(out)])
    assert code == 3
    rows = out.read_text().splitlines()[1:]
    assert len(rows) == 1
    assert "error:" in rows[0]


def test_convergence_command(tmp_path, capsys):
    path = write(tmp_path, MINIMAL + FAST_NUMERICS)
    assert main(["convergence", path]) == 0
    out = capsys.readouterr().out
    assert "relative rate drift" in out
    assert "n_cutoff=5" in out
