import json
import subprocess
import sys

import numpy as np
import pytest

from lrcov.cli import EXIT_INPUT, EXIT_IO, EXIT_OK, EXIT_USAGE, main, parse_range
from lrcov.errors import IoError, NonNumeric, ParseError, TooFewRows
from lrcov.estimator import debiased_sigma
from lrcov.io import SCHEMA_VERSION, emit_report, ingest_csv, load_report, render
from lrcov.longmemory import longmemory_test
from lrcov.simulate import ScenarioSpec, gen_scenario, monte_carlo
from lrcov.structural import structural_test
from lrcov.tuning import TuningGrid, mv_select

from conftest import make_data


def write_csv(path, y, X, header=None):
    k = X.shape[1]
    header = header or ["y"] + [f"x{j + 1}" for j in range(k)]
    rows = [",".join(header)]
    rows += [",".join(repr(float(v)) for v in (yi, *xi)) for yi, xi in zip(y, X)]
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def pollution_like(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((730, 3))
    y = X @ [1.0, -0.5, 0.2] + rng.standard_normal(730)
    return write_csv(tmp_path / "data.csv", y, X)


# -------------------------------------------------------------- ingestion


def test_ingest_adds_intercept(pollution_like):
    d = ingest_csv(pollution_like)
    assert (d.n, d.p) == (730, 4)
    assert np.all(d.X[:, 0] == 1.0)


def test_ingest_keeps_existing_constant(tmp_path):
    rng = np.random.default_rng(1)
    X = np.column_stack([rng.standard_normal(60), np.ones(60)])
    d = ingest_csv(write_csv(tmp_path / "c.csv", rng.standard_normal(60), X))
    assert d.p == 2
    assert np.sum(np.all(d.X == 1.0, axis=0)) == 1


def test_ingest_bad_cell_names_row_and_column(tmp_path):
    path = write_csv(tmp_path / "bad.csv", np.zeros(60), np.zeros((60, 2)))
    lines = path.read_text().splitlines()
    lines[5] = "0.0,abc,0.0"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(NonNumeric) as err:
        ingest_csv(path)
    assert (err.value.row, err.value.col) == (6, 2)
    assert "row 6" in str(err.value) and "column 2" in str(err.value)


def test_ingest_ragged_row(tmp_path):
    path = write_csv(tmp_path / "r.csv", np.zeros(60), np.zeros((60, 2)))
    lines = path.read_text().splitlines()
    lines[10] = "1,2"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as err:
        ingest_csv(path)
    assert err.value.row == 11


def test_ingest_nonfinite(tmp_path):
    path = write_csv(tmp_path / "n.csv", np.zeros(60), np.zeros((60, 1)))
    lines = path.read_text().splitlines()
    lines[3] = "nan,0"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(NonNumeric):
        ingest_csv(path)


def test_ingest_too_few_rows(tmp_path):
    with pytest.raises(TooFewRows):
        ingest_csv(write_csv(tmp_path / "s.csv", np.zeros(49), np.zeros((49, 1))))


def test_ingest_missing_file(tmp_path):
    with pytest.raises(IoError):
        ingest_csv(tmp_path / "nope.csv")


def test_ingest_not_utf8(tmp_path):
    path = tmp_path / "latin.csv"
    path.write_bytes(b"y,x\n" + b"1,\xe9\n" * 60)
    with pytest.raises(ParseError):
        ingest_csv(path)


# ---------------------------------------------------------- serialization


@pytest.fixture(scope="module")
def reports():
    d = make_data(150, p=2, seed=3)
    structural = structural_test(d, m=3, tau=0.4, B=49, seed=1)
    lm = longmemory_test(d, m=3, tau=0.4, B=49, seed=1, b=0.2)
    mc = monte_carlo([ScenarioSpec("CP1", 120, 0.0), ScenarioSpec("CP1", 120, 1.0)],
                     "structural", 3, base_seed=2, test_config={"m": 3, "tau": 0.4, "B": 29},
                     levels=(0.05, 0.1, 0.2))
    sel = mv_select(d, TuningGrid((2, 3, 4), (0.3, 0.35, 0.4)), "structural", B_mv=20, seed=1)
    curve = debiased_sigma(d, 3, 0.4)
    return {"structural": structural, "lm": lm, "mc": mc, "sel": sel, "curve": curve}


def _same(a, b):
    if isinstance(a, np.ndarray):
        return np.array_equal(a, np.asarray(b), equal_nan=True)
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(_same(a[k], b[k]) for k in a)
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    return a == b


@pytest.mark.parametrize("key", ["structural", "lm", "mc", "sel", "curve"])
def test_round_trip(reports, key, tmp_path):
    rep = reports[key]
    path = tmp_path / "r.json"
    emit_report(rep, "json", path)
    back = load_report(path)
    assert type(back) is type(rep)
    for name in vars(rep):
        assert _same(getattr(rep, name), getattr(back, name)), name
    assert json.loads(path.read_text())["schema_version"] == SCHEMA_VERSION


def test_lm_json_has_four_p_values(reports):
    doc = json.loads(render(reports["lm"]))
    assert sorted(doc["p_values"]) == ["kpss", "ks", "rs", "vs"]


def test_mc_csv_one_row_per_cell_and_level(reports):
    lines = render(reports["mc"], "csv").strip().splitlines()
    assert lines[0] == "cell,scenario,n,delta_or_d,statistic,level,rate,ci"
    assert len(lines) - 1 == 2 * 3


def test_csv_forms(reports):
    assert len(render(reports["curve"], "csv").splitlines()) == 151
    assert len(render(reports["lm"], "csv").splitlines()) == 5
    assert len(render(reports["sel"], "csv").splitlines()) == 10
    assert render(reports["sel"], "csv").count(",1\n") == 1


def test_emit_unwritable(reports, tmp_path):
    with pytest.raises(IoError):
        emit_report(reports["structural"], "json", tmp_path / "missing" / "out.json")


def test_load_rejects_other_schema(tmp_path):
    path = tmp_path / "x.json"
    path.write_text(json.dumps({"schema_version": 99, "kind": "TestReport"}))
    with pytest.raises(ParseError):
        load_report(path)


# -------------------------------------------------------------------- CLI


def test_parse_range():
    assert parse_range("3:6", integer=True) == [3, 4, 5, 6]
    assert parse_range("0.2:0.3:0.05") == [0.2, 0.25, 0.3]
    assert parse_range("8,12,16", integer=True) == [8, 12, 16]


@pytest.fixture
def small_csv(tmp_path):
    d = make_data(120, p=2, seed=5)
    return write_csv(tmp_path / "d.csv", d.y, d.X[:, 1:])


def run(*argv):
    return main([str(a) for a in argv])


def test_cli_estimate(small_csv, tmp_path):
    out = tmp_path / "sigma.json"
    assert run("estimate", "--input", small_csv, "--m", 3, "--tau", 0.4, "--output", out) == 0
    curve = load_report(out)
    assert curve.values.shape == (120, 2, 2) and curve.m == 3


def test_cli_structural_byte_identical(small_csv, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert run("test-structural", "--input", small_csv, "--m", 3, "--tau", 0.4,
                   "--B", 49, "--seed", 7, "--output", path) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_cli_longmemory(small_csv, tmp_path):
    out = tmp_path / "lm.csv"
    assert run("test-longmemory", "--input", small_csv, "--m", 3, "--tau", 0.4, "--b", 0.2,
               "--B", 49, "--seed", 1, "--format", "csv", "--output", out) == EXIT_OK
    assert out.read_text().splitlines()[0] == "statistic,value,p_value"


def test_cli_select_tuning(small_csv, tmp_path):
    out = tmp_path / "sel.json"
    assert run("select-tuning", "--input", small_csv, "--criterion", "structural",
               "--seed", 3, "--m-grid", "2:4", "--tau-grid", "0.3:0.4:0.05", "--B-mv", 20,
               "--output", out) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["kind"] == "TuningSelection" and doc["m_star"] in (2, 3, 4)


def test_cli_simulate_and_csv(tmp_path):
    out, table = tmp_path / "mc.json", tmp_path / "mc.csv"
    args = ["simulate", "--scenario", "CP4", "--n", 120, "--delta", "0:1:0.5", "--reps", 2,
            "--test", "structural", "--m", 3, "--tau", 0.4, "--B", 19, "--seed", 7,
            "--output", out, "--csv", table]
    assert run(*args) == EXIT_OK
    first = out.read_bytes()
    assert run(*args) == EXIT_OK
    assert out.read_bytes() == first
    assert len(table.read_text().splitlines()) == 1 + 3 * 2


def test_cli_estimate_d(tmp_path):
    sim = gen_scenario(ScenarioSpec("APPD", 300, 0.2, seed=1)).data
    path = write_csv(tmp_path / "appd.csv", sim.y, sim.X[:, 1:])
    out = tmp_path / "d.json"
    assert run("estimate-d", "--input", path, "--m-grid", "4,6,8", "--output", out) == EXIT_OK
    doc = json.loads(out.read_text())
    assert set(doc["points"]) == {"m", "log_m", "mean_log_norm"} and "d_hat" in doc


def test_cli_config_precedence(small_csv, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"input": str(small_csv), "m": 3, "tau": 0.4, "B": 29, "seed": 1}))
    out = tmp_path / "o.json"
    assert run("test-structural", "--config", cfg, "--B", 39, "--output", out) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["tuning"]["B"] == 39 and doc["tuning"]["m"] == 3


def test_cli_usage_errors(small_csv, tmp_path):
    # missing seed, conflicting tuning choices, unknown config key, bad flag
    assert run("test-structural", "--input", small_csv, "--m", 3, "--tau", 0.4) == EXIT_USAGE
    assert run("test-structural", "--input", small_csv, "--seed", 1) == EXIT_USAGE
    assert run("test-structural", "--input", small_csv, "--seed", 1, "--m", 3, "--tau", 0.4,
               "--auto-tune") == EXIT_USAGE
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run("estimate", "--input", small_csv, "--config", cfg) == EXIT_USAGE
    assert run("estimate", "--nonsense") == EXIT_USAGE


def test_cli_input_and_io_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("y,x\n1,2\n")
    assert run("estimate", "--input", bad) == EXIT_INPUT
    assert run("estimate", "--input", tmp_path / "missing.csv") == EXIT_IO


def test_cli_numerical_error_code(tmp_path):
    rng = np.random.default_rng(0)
    X = np.column_stack([rng.standard_normal(80), np.zeros(80)])
    path = write_csv(tmp_path / "sing.csv", rng.standard_normal(80), X)
    code = run("test-structural", "--input", path, "--m", 3, "--tau", 0.4, "--B", 19,
               "--seed", 1)
    assert code == 4


def test_console_entry_point(small_csv):
    proc = subprocess.run([sys.executable, "-m", "lrcov", "estimate", "--input", str(small_csv),
                           "--m", "3", "--tau", "0.4", "--format", "csv"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == "t,s11,s12,s21,s22"
