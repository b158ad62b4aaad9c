import json
import os
import shutil
import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cli_cases import ABORTING, FAILING, MALFORMED, PASSING, SUITE_BAD_EXTRA, SUITE_FAIL_EXTRA, SUITE_PASS
from pmelab import cli
from pmelab.experiments import ConfigError, ScenarioConfig


def run(argv, out):
    return cli.dispatch(argv + ["--out", str(out)])


def test_no_arguments_is_usage_error(capsys):
    assert cli.dispatch([]) == 2
    assert "usage:" in capsys.readouterr().err


def test_unknown_subcommand(capsys):
    assert cli.dispatch(["bogus"]) == 2
    assert "invalid choice" in capsys.readouterr().err


def test_help_lists_defaults(capsys):
    assert cli.dispatch(["converge", "--help"]) == 0
    out = capsys.readouterr().out
    assert "[potential]" in out and "cfl_fraction = 0.45" in out


def test_minimal_config_gets_defaults():
    cfg = cli.parse_config("[scenario]\nm = 1.5\ndim = 1\n[potential]\nform = quadratic\n")
    assert cfg == ScenarioConfig(m=1.5, dim=1, form="quadratic")
    assert cfg.cells == 400 and cfg.gamma == 0.5


def test_duplicate_key_names_key():
    with pytest.raises(ConfigError, match=r"line +3.*option 'm'"):
        cli.parse_config("[scenario]\nm = 1.5\nm = 1.6\n")


def test_unknown_key_has_line_number():
    with pytest.raises(ConfigError, match=r"line 3.*'cellz'"):
        cli.parse_config("[grid]\nlower = -1\ncellz = 10\n")


def test_key_in_wrong_section():
    with pytest.raises(ConfigError, match=r"belongs in \[grid\]"):
        cli.parse_config("[scenario]\ncells = 10\n")


def test_unknown_section():
    with pytest.raises(ConfigError, match="unknown section"):
        cli.parse_config("[misc]\nx = 1\n")


def test_regime_violation_message(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("[scenario]\ncommand = lemma34\nm = 2.5\n")
    assert cli.dispatch(["lemma34", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "requires 1<m<2" in capsys.readouterr().err


def test_command_mismatch(tmp_path):
    assert run(["eq2", "--config", "lemma34"], tmp_path) == 2


@given(
    st.builds(
        ScenarioConfig,
        command=st.sampled_from(["solve", "eq2", "converge", "lemma35"]),
        m=st.floats(1.01, 5.0),
        dim=st.sampled_from([1, 2]),
        a=st.floats(1e-4, 0.5),
        k_prime=st.none() | st.floats(0.0, 1.0),
        c0_scan=st.lists(st.floats(1e-6, 0.5), max_size=3).map(tuple),
        initial_height=st.none() | st.floats(0.0, 2.0),
        cells=st.integers(8, 1000),
        plot=st.booleans(),
        coeffs=st.lists(st.floats(-3, 3), max_size=4).map(tuple),
    )
)
def test_config_round_trip(cfg):
    assert cli.parse_config(cli.serialize(cfg)) == cfg


def test_bundled_configs_valid():
    names = {p.stem for p in cli.bundled_configs()}
    assert {"quad_m15", "quad_m3", "lemma34", "eq2", "lemma35", "barenblatt_m2"} <= names
    for p in cli.bundled_configs():
        cli.load_config(p)


@pytest.mark.parametrize("name", sorted(PASSING))
def test_exit_codes(name, tmp_path):
    assert run(PASSING[name], tmp_path / "pass") == 0
    assert run(FAILING[name], tmp_path / "fail") == 1
    assert run(MALFORMED[name], tmp_path / "bad") == 2


def test_runtime_abort_exit_code(tmp_path):
    assert run(ABORTING, tmp_path) == 3
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["outcome"] == "ERROR" and "domain too small" in man["message"]


def test_manifest_lists_every_file(tmp_path):
    assert run(PASSING["converge"], tmp_path) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert sorted(man["artifacts"]) == sorted(os.listdir(tmp_path))
    assert {"rate.json", "distances.csv", "distances.svg", "config.cfg", "report.json"} <= set(man["artifacts"])
    assert man["outcome"] == "PASS" and man["version"]


def test_outputs_are_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert run(PASSING["eq2"], tmp_path / sub) == 0
        assert run(PASSING["solve"], tmp_path / sub / "solve") == 0
    for root, _, files in os.walk(tmp_path / "a"):
        for f in files:
            if f == "manifest.json":
                continue
            a = os.path.join(root, f)
            b = a.replace(str(tmp_path / "a"), str(tmp_path / "b"))
            with open(a, "rb") as fa, open(b, "rb") as fb:
                assert fa.read() == fb.read(), f


def test_written_config_reloads(tmp_path):
    assert run(PASSING["lemma34"], tmp_path) == 0
    assert cli.load_config(tmp_path / "config.cfg") == cli.load_config("lemma34")


def test_env_default_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("PMELAB_OUT", str(tmp_path))
    assert cli.dispatch(PASSING["lemma34"]) == 0
    assert (tmp_path / "lemma34" / "report.json").exists()


def _suite_dir(tmp_path, extra=None):
    d = tmp_path / "cfgs"
    d.mkdir()
    for name in SUITE_PASS:
        shutil.copy(cli._resolve_config(name), d / f"{name}.cfg")
    if extra:
        (d / "zz_extra.cfg").write_text(extra)
    return d


@pytest.mark.parametrize("extra,code", [(None, 0), (SUITE_FAIL_EXTRA, 1), (SUITE_BAD_EXTRA, 2)])
def test_suite_exit_codes(tmp_path, extra, code):
    d = _suite_dir(tmp_path, extra)
    out = tmp_path / "out"
    assert cli.dispatch(["suite", "--config-dir", str(d), "--jobs", "2", "--out", str(out)]) == code
    summary = json.loads((out / "summary.json").read_text())
    assert list(summary) == sorted(summary)
    assert summary["lemma34"]["outcome"] == "PASS"


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pmelab.cli"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "usage" in proc.stderr
