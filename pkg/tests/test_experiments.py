import csv
import json
import os

import pytest
from hypothesis import given, strategies as st

from sandflip.experiments import (
    ConfigError,
    RunManifest,
    emit_config,
    emit_plot_script,
    parse_config,
    run_experiment,
)
from sandflip.experiments.cli import main
from sandflip.experiments.config import OUTPUT_ENV
from sandflip.experiments.plotting import ManifestError
from sandflip.experiments.runner import COLUMNS

MINIMAL = """
# minimal relaxation run
[model]
model = sf
alpha = 0.5
[topology]
n = 100000
[run]
scenario = E1
"""


def small(scenario_lines, n=2000, model="kind = sf\nalpha = 0.5", extra=""):
    return f"[model]\n{model}\n[topology]\nn = {n}\n{extra}[run]\n{scenario_lines}\n"


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- config ------------------------------------------------------------------


def test_minimal_config_gets_defaults(monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    s = parse_config(MINIMAL)
    assert s.scenario == "E1" and s.model.alpha == 0.5 and s.topology.n == 100000
    assert s.topology.is_ring and s.initial.kind == "product" and s.initial.rho == 0.5
    assert s.replicas >= 1 and s.sample_times == (0.25, 0.5, 1.0, 2.0)
    assert s.output_dir == os.path.join("sandflip-out", "E1")


def test_env_var_sets_default_output_dir_only(monkeypatch, tmp_path):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    assert parse_config(MINIMAL).output_dir == os.path.join(str(tmp_path), "E1")
    assert parse_config(MINIMAL + "output_dir = elsewhere\n").output_dir == "elsewhere"


@pytest.mark.parametrize(
    "text,line,fragment",
    [
        (small("scenario = E1", model="kind = sf\nalpha = -1"), 3, "nonnegative"),
        (small("scenario = E6", model="kind = sa\nalpha = 0.5\nbeta = 0.5\ngamma = 0.1"), 5, "gamma"),
        (small("scenario = E1\ncolour = red"), 8, "colour"),
        (small("scenario = E9"), 7, "scenario"),
        (small("scenario = E1\nreplicas = 0"), 8, "replicas"),
        (small("scenario = E1\nsample_times = 2, 1"), 8, "sorted"),
        (small("scenario = E2"), 7, "alpha >= 1"),
        (small("scenario = E1\nreplicas = many"), 8, "replicas"),
        ("[model]\nkind = sf\nalpha = 0.5\n[run]\nscenario = E1\n", None, "'n'"),
        ("[model]\nkind = sf\nalpha 0.5\n", 3, "key = value"),
        ("[physics]\nkind = sf\n", 1, "physics"),
    ],
)
def test_config_errors_name_the_line(text, line, fragment):
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert fragment in str(e.value)
    assert e.value.line == line
    if line:
        assert str(e.value).startswith(f"line {line}:")


finite = st.floats(0.0, 5.0, allow_nan=False)
unit = st.floats(0.0, 1.0)


@st.composite
def config_texts(draw):
    variant = draw(st.sampled_from(["sf", "sa"]))
    if variant == "sf":
        fam = draw(st.sampled_from(["pure", "glauber", "biased"]))
        model = f"kind = sf\nalpha = {draw(finite)!r}\nflip = {fam}\n"
        if fam == "glauber":
            model += f"gamma = {draw(st.floats(-0.5, 0.5))!r}\n"
        if fam == "biased":
            model += f"kappa = {draw(st.floats(-0.99, 0.99))!r}\n"
    else:
        model = f"kind = sa\nalpha = {draw(finite)!r}\nbeta = {draw(finite)!r}\n"
    top = draw(st.sampled_from(["ring", "interval"]))
    n = draw(st.integers(3, 10**6))
    init_kind = draw(st.sampled_from(["product", "all_ones", "all_twos", "single_one"]))
    init = f"kind = {init_kind}\n"
    if init_kind == "product":
        init += f"rho = {draw(unit)!r}\n"
    if init_kind == "single_one":
        init += f"y = {draw(st.integers(0, n - 1))}\n"
    times = sorted(draw(st.lists(st.floats(0, 100), max_size=5)))
    run = (
        f"scenario = custom\nreplicas = {draw(st.integers(1, 1000))}\nseed = {draw(st.integers(0, 2**64 - 1))}\n"
        f"sample_times = {', '.join(map(repr, times))}\nworkers = {draw(st.integers(1, 8))}\n"
        f"output_dir = out/{draw(st.integers(0, 99))}\n"
    )
    return f"[model]\n{model}[topology]\nkind = {top}\nn = {n}\n[initial]\n{init}[run]\n{run}"


@given(config_texts())
def test_parse_emit_roundtrip(text):
    spec = parse_config(text)
    assert parse_config(emit_config(spec)) == spec


@pytest.mark.parametrize(
    "model,scenario,top",
    [
        ("kind = sf\nalpha = 0.5", "E1", "ring"),
        ("kind = sf\nalpha = 2", "E2", "ring"),
        ("kind = sf\nalpha = 0.4", "E3", "ring"),
        ("kind = sf\nalpha = 0.25\nflip = glauber\ngamma = 0.25", "E4", "ring"),
        ("kind = sa\nalpha = 0.3\nbeta = 0.7", "E5", "ring"),
        ("kind = sa\nalpha = 0.5\nbeta = 0.5", "E6", "ring"),
        ("kind = sf\nalpha = 1", "E7", "interval"),
    ],
)
def test_catalog_defaults_roundtrip(model, scenario, top):
    spec = parse_config(f"[model]\n{model}\n[topology]\nkind = {top}\nn = 1000\n[run]\nscenario = {scenario}\n")
    assert parse_config(emit_config(spec)) == spec


# -- runs --------------------------------------------------------------------


def test_e1_csv_theory_column_and_determinism(tmp_path):
    spec = parse_config(small("scenario = E1\nreplicas = 3\nseed = 17"))
    m1 = run_experiment(spec, str(tmp_path / "a"))
    m2 = run_experiment(spec, str(tmp_path / "b"))
    a = (tmp_path / "a" / "data.csv").read_bytes()
    assert a == (tmp_path / "b" / "data.csv").read_bytes()
    rows = read_rows(tmp_path / "a" / "data.csv")
    assert tuple(rows[0]) == COLUMNS
    t1 = [r for r in rows[1:] if r[0] == "1.0" and r[1] == "-1"]
    assert float(t1[0][4]) == pytest.approx(0.283834, abs=1e-6)
    assert m1.verify() and m2.verify()
    assert [f["sha256"] for f in m1.files] == [f["sha256"] for f in m2.files]


def test_manifest_and_summary_contents(tmp_path):
    spec = parse_config(small("scenario = E1\nreplicas = 2\nseed = 5"))
    m = run_experiment(spec, str(tmp_path))
    loaded = RunManifest.load(tmp_path / "manifest.json")
    assert loaded.master_seed == 5 and len(loaded.replica_seeds) == 2
    assert parse_config(loaded.spec_text) == spec
    assert loaded.verify()
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert set(summary) >= {"scenario", "params", "checks", "manifest_path"}
    assert summary["manifest_path"] == "manifest.json"
    for c in summary["checks"]:
        assert set(c) == {"name", "measured", "expected", "tolerance", "pass"}
    (tmp_path / "data.csv").write_text("tampered\n")
    assert not m.verify()


def test_e5_theory_is_linear_drift(tmp_path):
    text = small("scenario = E5\nreplicas = 2", model="kind = sa\nalpha = 0.3\nbeta = 0.7",
                 extra="[initial]\nrho = 0.2\n")
    run_experiment(parse_config(text), str(tmp_path))
    rows = read_rows(tmp_path / "data.csv")[1:]
    for r in rows:
        t = float(r[0])
        if t <= 1.9:
            assert float(r[4]) == pytest.approx(0.2 + 0.4 * t)


def test_partial_run_is_flagged(tmp_path):
    cfg = tmp_path / "slow.cfg"
    cfg.write_text(small("scenario = E1\nreplicas = 1000\ntime_budget = 0.2", n=100000))
    assert main(["run", str(cfg), "-o", str(tmp_path / "out")]) == 2
    m = RunManifest.load(tmp_path / "out" / "manifest.json")
    assert m.partial and 0 < len(m.replica_seeds) < 1000
    assert json.loads((tmp_path / "out" / "summary.json").read_text())["partial"]


def test_plot_script(tmp_path):
    spec = parse_config(small("scenario = E1\nreplicas = 2"))
    m = run_experiment(spec, str(tmp_path))
    text = emit_plot_script(m)
    assert str(tmp_path) not in text and "data.csv" in text
    assert text.count("(measured)") == 1 and text.count("(theory)") == 1
    compile(text, "plot.py", "exec")
    empty = RunManifest("", "0", 0, [], 0.0, [], str(tmp_path))
    with pytest.raises(ManifestError):
        emit_plot_script(empty)
    os.remove(tmp_path / "data.csv")
    with pytest.raises(FileNotFoundError):
        emit_plot_script(m)


# -- command line --------------------------------------------------------------


def test_cli_exit_codes(tmp_path):
    assert main(["run", str(tmp_path / "missing.cfg")]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text(small("scenario = E1", model="kind = sf\nalpha = -1"))
    assert main(["run", str(bad)]) == 1
    big = tmp_path / "big.cfg"
    big.write_text(small("scenario = custom", n=20))
    assert main(["oracle", str(big)]) == 1
    assert main(["nonsense"]) == 1
    assert main(["plot", str(tmp_path / "nowhere")]) == 1


def test_cli_run_oracle_plot(tmp_path):
    cfg = tmp_path / "e1.cfg"
    cfg.write_text(small("scenario = E1\nreplicas = 4", n=20000))
    out = tmp_path / "run"
    assert main(["run", str(cfg), "-o", str(out)]) == 0
    assert main(["plot", str(out)]) == 0
    assert (out / "plot.py").exists()
    small_cfg = tmp_path / "o.cfg"
    small_cfg.write_text(small("scenario = custom\nsample_times = 0.1, 1, 10", n=8))
    assert main(["oracle", str(small_cfg), "-o", str(tmp_path / "oracle")]) == 0
    report = json.loads((tmp_path / "oracle" / "oracle.json").read_text())
    assert all(report["domination_all_ones_below_all_twos"].values())
    assert tuple(read_rows(tmp_path / "oracle" / "oracle.csv")[0]) == COLUMNS


def test_cli_check_passes():
    assert main(["check"]) == 0
