import subprocess
import sys

import pytest
from hypothesis import given, settings, strategies as st

from cylsde.cli import main
from cylsde.config import SCHEMA, ConfigError, format_value, normalize, parse_config, serialize

SCALARS = {
    "int": st.integers(1, 10**6),
    "float": st.floats(1e-6, 1e6, allow_nan=False),
    "bool": st.booleans(),
}
SIMPLE_KEYS = [k for k, (t, check, _) in SCHEMA.items() if t in SCALARS and check is None or
               k in ("n_paths", "dt", "t_final", "k_modes", "workers", "tolerance", "dim", "cases", "gap_dt")]


@st.composite
def configs(draw):
    keys = draw(st.lists(st.sampled_from(SIMPLE_KEYS), unique=True, max_size=8))
    lines = []
    for k in keys:
        kind = SCHEMA[k][0]
        value = draw(SCALARS[kind]) if kind in SCALARS else draw(st.lists(st.floats(-10, 10), min_size=1, max_size=3))
        lines.append(f"{k} = {format_value(value)}\n")
    if draw(st.booleans()):
        lines.append(f"strides = {format_value(draw(st.lists(st.integers(1, 64), min_size=1, max_size=4)))}\n")
    return "".join(lines)


@settings(max_examples=100, deadline=None)
@given(configs())
def test_roundtrip_canonical_text(text):
    assert serialize(parse_config(text)) == text


@settings(max_examples=50, deadline=None)
@given(configs(), st.sampled_from(["", "   ", "# note"]))
def test_normalize_then_roundtrip(text, pad):
    noisy = "".join(f"  {line.replace(' = ', '=')}   {pad}\n" for line in text.splitlines())
    assert serialize(parse_config(noisy)) == normalize(noisy) == text


def test_errors_cite_line_and_column():
    with pytest.raises(ConfigError) as exc:
        parse_config("kind = isometry\nn_paths = -5\n")
    assert exc.value.line == 2 and exc.value.column == 11
    assert "line 2" in str(exc.value) and "n_paths" in str(exc.value)
    with pytest.raises(ConfigError) as exc:
        parse_config("\n  colour = red\n")
    assert exc.value.line == 2 and exc.value.column == 3
    with pytest.raises(ConfigError) as exc:
        parse_config("dt = 0.1\ndt = 0.2\n")
    assert exc.value.line == 2
    with pytest.raises(ConfigError) as exc:
        parse_config("dt = fast\n")
    assert "float" in str(exc.value)
    with pytest.raises(ConfigError):
        parse_config("just words\n")
    with pytest.raises(ConfigError):
        parse_config("", required=("kind",))


def test_params_split():
    cfg = parse_config("kind = qv # comment\nseed = 3\nintegrand = smooth\nv = 1.0, 2.0\nladder = 0.1, 0.05, 0.025\n")
    assert cfg.kind == "qv" and cfg.get("seed") == 3
    assert cfg.params() == {"integrand": "smooth", "v": [1.0, 2.0]}


def test_cli_pass_and_csv(tmp_path, capsys):
    out = tmp_path / "r.csv"
    args = ["isometry", "--seed", "4", "--n-paths", "4000", "--dt", "0.01", "--out", str(out)]
    assert main(args) == 0
    assert capsys.readouterr().out.startswith("PASS isometry")
    first = out.read_bytes()
    assert main(args) == 0
    assert out.read_bytes() == first


def test_cli_config_file(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("kind = duality\nn_paths = 20\ndt = 0.01\nseed = 1\n")
    assert main(["duality", "--config", str(cfg)]) == 0
    cfg.write_text("kind = duality\nn_paths = -5\n")
    assert main(["duality", "--config", str(cfg)]) == 2
    assert "line 2" in capsys.readouterr().err
    cfg.write_text("kind = qv\n")
    assert main(["duality", "--config", str(cfg)]) == 2


def test_cli_usage_errors(capsys):
    assert main(["frobnicate"]) == 2
    assert main(["isometry", "--n-paths", "50", "--seed", "1", "--dt", "0.01"]) == 2
    assert main(["isometry", "--ci", "--dt", "0.01"]) == 2
    assert "seed" in capsys.readouterr().err
    assert main(["isometry", "--seed", "-1"]) == 2
    assert main(["isometry", "--seed", "1", "--dt", "0.3"]) == 2


def test_cli_fail_exit_code(tmp_path):
    # an impossible tolerance makes a statistical metric fail honestly
    cfg = tmp_path / "c.cfg"
    cfg.write_text("tolerance = 1e-9\n")
    assert main(["isometry", "--config", str(cfg), "--seed", "1", "--n-paths", "200", "--dt", "0.01"]) == 1


def test_cli_solve_path_out(tmp_path):
    path = tmp_path / "p.csv"
    assert main(["solve", "--seed", "2", "--n-paths", "4000", "--dt", "0.01", "--path-out", str(path),
                 "--out", str(tmp_path / "r.csv")]) == 0
    lines = path.read_text().splitlines()
    assert lines[0] == "step,time,coord_0" and lines[-1].startswith("# seed=2")


def test_cli_refine(tmp_path, capsys):
    cfg = tmp_path / "r.cfg"
    cfg.write_text("kind = qv\nintegrand = smooth\nexpected_slope = 1.0\nslope_tol = 0.05\n")
    code = main(["refine", "--config", str(cfg), "--ladder", "0.008,0.004,0.002", "--seed", "0", "--n-paths", "100",
                 "--dt", "0.002"])
    out = capsys.readouterr().out
    assert code == 0 and "rung,param,error" in out and "PASS refine qv" in out


def test_module_entry_point_selftest():
    proc = subprocess.run([sys.executable, "-m", "cylsde", "selftest"], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert proc.stdout.strip().startswith("PASS selftest 5/5")
