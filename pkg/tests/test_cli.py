import numpy as np
import pytest

from jackson_dynamics import analytics
from jackson_dynamics.cli import compare_rows, main, theory_rows
from jackson_dynamics.config import HEADER, parse_config, read_rows, write_rows
from jackson_dynamics.errors import KeyMismatch, ParseError

DATA = __import__("pathlib").Path(__file__).parent / "data"

FAMILY = """\
# two-queue family
[network]
n = 2
mu = 0.3 0.2
rho = 0.3 0.7
routing_row = 0 {p}
routing_row = {p2} 0
[run]
duration = 2e5
seed = 5
subrun_length = 1e4
chains = 2
[probe]
omega = 0.1, 1
pair = 1 2
pair = 2 1
pair = 1 1
"""


def family_cfg(p=0.1):
    return FAMILY.format(p=p, p2=2 * p)


@pytest.fixture
def write(tmp_path):
    def _write(name, text):
        path = tmp_path / name
        path.write_text(text)
        return path
    return _write


def run_cli(*args):
    return main([str(a) for a in args])


# config parsing

def test_parse_family():
    cfg = parse_config(family_cfg())
    assert cfg.n == 2 and cfg.pairs == [(0, 1), (1, 0), (0, 0)]
    assert cfg.routing == [[0.0, 0.1], [0.2, 0.0]]
    assert cfg.omegas == [0.1, 1.0] and cfg.duration == 2e5 and cfg.chains == 2


@pytest.mark.parametrize("text,line,field", [
    ("n = 1\nmu = 1\nrho = 0.5\ngamma = 0.5\nrouting_row = 0\n", 3, "rho"),
    ("n = 1\nmu = 1 2\nrho = 0.5\nrouting_row = 0\n", 2, "mu"),
    ("n = 1\nmu = 1\nrho = 0.5\nrouting_row = 0\ncolour = red\n", 5, "colour"),
    ("n = 1\nmu = x\nrho = 0.5\nrouting_row = 0\n", 2, "mu"),
    ("n = 1\nmu = 1\nrho = 0.5\nrouting_row = 0\npair = 1 3\n", 5, "pair"),
    ("n = 2\nmu = 1 1\nrho = 0.5 0.5\nrouting_row = 0 0\n", 4, "routing_row"),
])
def test_parse_errors(text, line, field):
    with pytest.raises(ParseError) as info:
        parse_config(text)
    assert info.value.line == line and info.value.field == field
    assert f"line {line}" in str(info.value)


def test_parse_missing_rates():
    with pytest.raises(ParseError, match="one of gamma or rho"):
        parse_config("n = 1\nmu = 1\nrouting_row = 0\n")


# validate

def test_validate_prints_gamma(write, capsys):
    assert run_cli("validate", "--config", write("a.cfg", family_cfg())) == 0
    out = capsys.readouterr().out
    gamma = [float(v) for v in out.splitlines()[1].split("=")[1].split()]
    np.testing.assert_allclose(gamma, [0.062, 0.131], atol=1e-15)


def test_validate_row_sum(write, capsys):
    text = family_cfg().replace("routing_row = 0.2 0", "routing_row = 1.3 0")
    assert run_cli("validate", "--config", write("b.cfg", text)) == 1
    assert "routing row 1 sums to 1.3" in capsys.readouterr().out


def test_validate_both_rates(write, capsys):
    text = family_cfg() + "gamma = 0.1 0.1\n"
    assert run_cli("validate", "--config", write("c.cfg", text)) == 2
    assert "exactly one of gamma and rho" in capsys.readouterr().err


def test_usage_errors(write, tmp_path):
    cfg = write("d.cfg", family_cfg())
    assert run_cli("validate", "--config", tmp_path / "missing.cfg") == 2
    assert run_cli("theory", "--config", cfg, "--omega", "1,zz") == 2
    with pytest.raises(SystemExit) as info:
        run_cli("launch", "--config", cfg)
    assert info.value.code == 2


# theory

def test_theory_rows(write, tmp_path):
    cfg = write("e.cfg", family_cfg())
    out = tmp_path / "t.csv"
    assert run_cli("theory", "--config", cfg, "--omega", "0.5", "--out", out) == 0
    rows = read_rows(out.read_text())
    # two off-diagonal pairs with two rows each, one diagonal pair with one
    assert len(rows) == 2 * 2 + 1
    diag = [r for r in rows if r["alpha"] == r["beta"]]
    assert diag[0]["value"] == analytics.mm1_busy_corr(0.3, 0.3, 0.5)
    assert out.read_text().splitlines()[0] == ",".join(HEADER)


def test_theory_uncoupled(write):
    cfg = parse_config(family_cfg(0.0))
    rows = theory_rows(cfg)
    by_key = {}
    for r in rows:
        by_key.setdefault((r["alpha"], r["beta"], r["omega"]), {})[r["source"]] = r["value"]
    for key, vals in by_key.items():
        if key[0] != key[1]:
            assert vals["theory1"] == vals["theory0"]


# compare and collapse

def test_compare_self_and_type2_constant():
    cfg = parse_config(family_cfg(0.05).replace("omega = 0.1, 1", "omega = 0.02 0.05 0.1 0.3 1 2"))
    theory = theory_rows(cfg)
    rows = compare_rows(cfg, theory, theory)
    assert all(r["difference"] == 0 for r in rows)
    for a, b in ((0, 1), (1, 0)):
        norm2 = np.array([r["norm2"] for r in rows if (r["alpha"], r["beta"]) == (a, b)])
        dL = cfg.routing[b][a] * cfg.mu[b]
        np.testing.assert_allclose(norm2, dL, rtol=1e-12)
        assert np.ptp(norm2) <= 1e-12 * dL


def test_compare_key_mismatch():
    cfg = parse_config(family_cfg())
    theory = theory_rows(cfg)
    with pytest.raises(KeyMismatch):
        compare_rows(cfg, theory, theory[:-1])


def test_oracle_uncoupled_matches_theory(write, tmp_path):
    text = family_cfg(0.0) + "cutoffs = 30 70\n"
    cfg = write("f.cfg", text)
    assert run_cli("oracle", "--config", cfg, "--out", tmp_path / "o.csv") == 0
    assert run_cli("theory", "--config", cfg, "--out", tmp_path / "t.csv") == 0
    oracle = {(r["alpha"], r["beta"], r["omega"]): r["value"] for r in read_rows((tmp_path / "o.csv").read_text())}
    for r in read_rows((tmp_path / "t.csv").read_text()):
        if r["source"] == "theory0":
            assert oracle[(r["alpha"], r["beta"], r["omega"])] == pytest.approx(r["value"], abs=1e-8)


def test_simulate_compare_collapse(write, tmp_path, capsys):
    cfg = write("g.cfg", family_cfg(0.05))
    sim1, sim2 = tmp_path / "s1.csv", tmp_path / "s2.csv"
    assert run_cli("simulate", "--config", cfg, "--out", sim1) == 0
    assert run_cli("simulate", "--config", cfg, "--out", sim2, "--workers", "2") == 0
    assert sim1.read_bytes() == sim2.read_bytes()
    assert run_cli("theory", "--config", cfg, "--out", tmp_path / "t.csv") == 0
    assert run_cli("compare", "--config", cfg, tmp_path / "t.csv", sim1, "--out", tmp_path / "c.csv") == 0
    assert "rows within" in capsys.readouterr().err
    assert run_cli("collapse", "--config", cfg, sim1, "--out", tmp_path / "k.csv") == 0
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert lines[0] == ",".join(HEADER + ["subtracted", "norm1", "norm2"])
    assert len(lines) == 1 + 4
    # a different seed gives different bytes
    assert run_cli("simulate", "--config", cfg, "--out", sim2, "--seed", "6") == 0
    assert sim1.read_bytes() != sim2.read_bytes()


def test_compare_fails_on_bad_fit(write, tmp_path):
    cfg = write("h.cfg", family_cfg(0.05))
    sim = tmp_path / "s.csv"
    assert run_cli("simulate", "--config", cfg, "--out", sim) == 0
    rows = read_rows(sim.read_text())
    for r in rows:
        r["value"] *= 1.5
    bad = tmp_path / "bad.csv"
    bad.write_text(write_rows(rows))
    assert run_cli("theory", "--config", cfg, "--out", tmp_path / "t.csv") == 0
    assert run_cli("compare", "--config", cfg, tmp_path / "t.csv", bad) == 1


def test_csv_round_trip():
    rows = [dict(source="sim", alpha=1, beta=0, omega=0.1, value=1 / 3, stderr=1e-3),
            dict(source="oracle", alpha=0, beta=0, omega=2.0, value=0.2)]
    text = write_rows(rows)
    assert text.splitlines()[1].startswith("oracle,1,1,2,")
    back = read_rows(text)
    assert back[1]["value"] == 1 / 3 and back[1]["alpha"] == 1 and back[0]["stderr"] is None
    with pytest.raises(ParseError):
        read_rows("a,b\n1,2\n")


def test_golden_csv(tmp_path):
    out = tmp_path / "golden.csv"
    assert run_cli("simulate", "--config", DATA / "golden.cfg", "--out", out) == 0
    assert out.read_bytes() == (DATA / "golden_sim.csv").read_bytes()
