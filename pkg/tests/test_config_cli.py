import numpy as np
import pytest

from reflectsde import cli, config as cf
from reflectsde.errors import ParseError, ValidationError

SIM = """# interval with a frozen driver
domain.kind = interval
domain.lo = 0
domain.hi = 1
field.kind = identity
driver.N = 4
driver.T = 1
driver.seed = 5
start.x0 = (0.3)
"""

COUPLE = """domain.kind = triangle
coupling.kind = synchronous
driver.N = 6
driver.T = 1
driver.seed = 1
ensemble.paths = 10
start.x0 = (1, 0.2)
start.y0 = (2, 0.2)
"""


def run(text, kind, out, **kw):
    return cli.run_experiment(cf.parse_config(text, kind), str(out), **kw)


# --- parsing -----------------------------------------------------------------


def test_minimal_config():
    cfg = cf.parse_config(SIM, "simulate")
    assert (cfg.N, cfg.T, cfg.seed, cfg.substeps, cfg.paths) == (4, 1.0, 5, 64, 1)
    assert cfg.lines["driver.seed"] == 8
    assert cfg.echo().splitlines()[0] == "domain.hi = 1"


def test_missing_key_is_named():
    with pytest.raises(ValidationError) as err:
        cf.parse_config(SIM.replace("driver.seed = 5\n", ""), "simulate")
    assert "driver.seed" in str(err.value)


def test_every_problem_reported():
    text = SIM.replace("driver.seed = 5\n", "").replace("driver.N = 4", "driver.N = 25")
    with pytest.raises(ValidationError) as err:
        cf.parse_config(text, "simulate")
    msg = str(err.value)
    assert "driver.seed" in msg and "driver.N" in msg and "line 6" in msg


@pytest.mark.parametrize("line,needle", [
    ("nonsense", "line 10"),
    ("a = 1", "malformed key"),
    ("driver.N = 5", "duplicate key"),
    ("driver.extra =", "empty value"),
])
def test_parse_errors_carry_line_numbers(line, needle):
    with pytest.raises(ParseError) as err:
        cf.parse_config(SIM + line + "\n", "simulate")
    assert needle in str(err.value)


@pytest.mark.parametrize("key,val", [
    ("driver.T", "0.3"), ("driver.substeps", "6"), ("ensemble.paths", "0"),
    ("domain.kind", "torus"), ("field.kind", "spiral"),
])
def test_bad_values_rejected(key, val):
    text = "\n".join(ln for ln in SIM.splitlines() if not ln.startswith(key)) + f"\n{key} = {val}\n"
    with pytest.raises(ValidationError) as err:
        cf.parse_config(text, "simulate")
    assert key in str(err.value)


def test_kind_mismatch():
    with pytest.raises(ValidationError):
        cf.parse_config(SIM + "experiment.kind = couple\n", "simulate")
    with pytest.raises(ValidationError):
        cf.parse_config(SIM)


def test_point_and_level_helpers():
    # [TRIVIAL]
    assert np.array_equal(cf.parse_points("(0,0) (4, 0) (1,1)"), [[0, 0], [4, 0], [1, 1]])
    assert np.array_equal(cf.parse_points("1.5, 2"), [[1.5, 2.0]])
    with pytest.raises(ValueError):
        cf.parse_points("(1,2) (3)")
    assert cf.parse_levels("4..7") == [4, 5, 6, 7]
    assert cf.parse_levels("2, 5 9") == [2, 5, 9]


def test_functions():
    # [TRIVIAL]
    z = np.array([3.0, 4.0])
    assert cf.parse_function("x2")(z) == 4.0
    assert cf.parse_function("min(x1, 2)")(z) == 2.0
    assert cf.parse_function("norm")(z) == 5.0
    assert cf.parse_function("const(1.5)")(z) == 1.5
    with pytest.raises(ValueError):
        cf.parse_function("exp(x1)")


def test_domain_builders():
    cfg = cf.parse_config(SIM.replace("domain.kind = interval", "domain.kind = rectangle")
                          .replace("start.x0 = (0.3)", "start.x0 = (0.5, 0.5)")
                          + "domain.bounds = -1 1 0 2\n", "simulate")
    dom = cf.build_domain(cfg)
    assert dom.dim == 2 and cf.build_field(cfg).d == 2


# --- runner ------------------------------------------------------------------


def test_zero_driver_gives_constant_rows(tmp_path):
    rep = run(SIM, "simulate", tmp_path, test_driver="zero")
    assert rep.exit_code == cli.EXIT_OK
    data = np.loadtxt(tmp_path / "trajectory_0000.csv", delimiter=",", skiprows=1)
    assert np.all(data[:, 1] == 0.3) and np.all(data[:, 2:] == 0.0)
    text = (tmp_path / "report.txt").read_text()
    assert "master seed: 5" in text and "status: ok (exit 0)" in text


def test_ramp_driver_hits_wall(tmp_path):
    # [DERIVED] x0 = 0.3, w = -t: pinned at 0 from t = 0.3 on, L_1 = 0.7
    rep = run(SIM, "simulate", tmp_path, test_driver="ramp")
    assert rep.exit_code == cli.EXIT_OK
    last = np.loadtxt(tmp_path / "trajectory_0000.csv", delimiter=",", skiprows=1)[-1]
    assert last[1] == pytest.approx(0.0, abs=1e-12) and last[2] == pytest.approx(0.7)


def test_couple_passes_and_is_reproducible(tmp_path):
    a = run(COUPLE, "couple", tmp_path / "a")
    b = run(COUPLE, "couple", tmp_path / "b")
    assert a.exit_code == cli.EXIT_OK
    for name in ("couplings.csv", "coupling_0003.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    c = run(COUPLE, "couple", tmp_path / "c", seed=2)
    assert (tmp_path / "a" / "couplings.csv").read_bytes() != \
        (tmp_path / "c" / "couplings.csv").read_bytes()


def test_violation_exit_code(tmp_path):
    text = SIM.replace("domain.hi = 1", "domain.hi = 10") + "invariant.norm_max = 0.01\n"
    rep = run(text, "simulate", tmp_path)
    assert rep.exit_code == cli.EXIT_VIOLATION
    assert any(ln.startswith("FAIL norm bound") for ln in rep.lines)


def test_runtime_error_exit_code(tmp_path):
    rep = run(SIM.replace("(0.3)", "(3.0)"), "simulate", tmp_path)
    assert rep.exit_code == cli.EXIT_ERROR
    assert "ERROR" in rep.text


def test_converge_writes_ladder(tmp_path):
    text = """domain.kind = half_line
field.kind = identity
driver.T = 1
driver.seed = 3
driver.substeps = 4
ensemble.paths = 200
converge.levels = 2..4
converge.f = min(x1, 2)
start.x0 = (0)
"""
    run(text, "converge", tmp_path)
    head = (tmp_path / "ladder.csv").read_text().splitlines()[0]
    assert head.split(",") == ["level", "mean", "se", "delta", "delta_se"]


def test_main_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("domain.kind = disc\nnonsense\n")
    assert cli.main(["simulate", "--config", str(bad)]) == cli.EXIT_ERROR
    assert "line 2" in capsys.readouterr().err
    good = tmp_path / "good.cfg"
    good.write_text(SIM)
    code = cli.main(["simulate", "--config", str(good), "--out", str(tmp_path / "o"),
                     "--test-driver", "zero"])
    assert code == cli.EXIT_OK
