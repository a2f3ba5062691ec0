import numpy as np
import pytest

from stmoments.cli import ConfigError, build_config, main, parse_kv
from stmoments.csvio import read_csv

SMALL = {
    "exact": ["n_points=5"],
    "solve-ode": ["N=8"],
    "solve-spde": ["P=2", "N=4"],
    "infsup": ["lams=1,100", "n_inner=15"],
    "stability": ["N=4,8"],
    "convergence": ["schemes=CN", "j_min=2", "j_max=4"],
    "mc": ["R=50", "k_mc=0.0625", "record_every=4"],
}
SCHEMA = {
    "exact": ["t", "first_moment", "second_moment_diag"],
    "solve-ode": ["m", "n", "U_mn"],
    "solve-spde": ["p", "t", "U_pp_diag"],
    "infsup": ["scheme", "lam", "gamma_k", "gamma_sigma"],
    "stability": ["scheme", "z", "q", "D", "alpha", "beta", "theta", "gamma_k", "C_k", "C"],
    "convergence": ["scheme", "k", "error_raw", "error_post", "cg_iterations", "rate_raw", "rate_post"],
    "mc": ["t", "mean", "second_moment_diag", "stderr"],
}


def run(tmp_path, cmd, sets, name="out.csv", extra=()):
    out = tmp_path / name
    argv = [cmd, "--out", str(out), *extra]
    for s in sets:
        argv += ["--set", s]
    return main(argv), out


def strip_version(text):
    return "\n".join(ln for ln in text.splitlines() if not ln.startswith("# version="))


@pytest.mark.parametrize("cmd", list(SMALL))
def test_subcommand_writes_csv(tmp_path, cmd):
    code, out = run(tmp_path, cmd, SMALL[cmd])
    assert code == 0
    prov, cols, rows = read_csv(out.read_text())
    assert cols == SCHEMA[cmd]
    assert prov["command"] == cmd and "version" in prov
    assert rows and all(len(r) == len(cols) for r in rows)


@pytest.mark.parametrize("cmd", ["solve-ode", "mc", "infsup"])
def test_reproducible(tmp_path, cmd):
    _, a = run(tmp_path, cmd, SMALL[cmd], "a.csv", ["--seed", "3"])
    _, b = run(tmp_path, cmd, SMALL[cmd], "b.csv", ["--seed", "3"])
    assert strip_version(a.read_text()) == strip_version(b.read_text())


def test_mc_seed_changes_output(tmp_path):
    _, a = run(tmp_path, "mc", SMALL["mc"], "a.csv", ["--seed", "1"])
    _, b = run(tmp_path, "mc", SMALL["mc"], "b.csv", ["--seed", "2"])
    assert strip_version(a.read_text()) != strip_version(b.read_text())


def test_exact_values(tmp_path):
    _, out = run(tmp_path, "exact", ["n_points=3", "lam=3", "rho2=1.5", "T=2"])
    prov, _, rows = read_csv(out.read_text())
    from stmoments.closed_form import continuous_stability_constant
    assert float(prov["C_continuous"]) == pytest.approx(continuous_stability_constant(3.0, 1.5, 2.0), rel=1e-15)
    assert float(rows[-1][1]) == pytest.approx(np.exp(-6.0))
    assert float(rows[-1][2]) == pytest.approx(np.exp(-9.0))


@pytest.mark.parametrize("sets", [["bogus=1"], ["schemes="], ["R=0"], ["lam=-1"], ["scheme=XX"], ["N=abc"]])
def test_invalid_config_exit_2(tmp_path, capsys, sets):
    cmd = {"schemes=": "stability", "R=0": "mc"}.get(sets[0], "solve-ode")
    code, out = run(tmp_path, cmd, sets)
    assert code == 2
    assert "invalid config key" in capsys.readouterr().err
    assert not out.exists()


def test_ill_posed_exit_1(tmp_path, capsys):
    code, _ = run(tmp_path, "solve-ode", ["scheme=CN", "T=4", "N=4", "lam=1", "rho2=20"])
    assert code == 1
    assert "beta_1" in capsys.readouterr().err


def test_config_file_roundtrip(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("# scalar solve\nscheme = iE\nN = 8\nlam=2.5  # comment\n")
    kv = parse_kv(cfgfile.read_text())
    assert kv == {"scheme": "iE", "N": "8", "lam": "2.5"}
    cfg = build_config("solve-ode", kv)
    assert (cfg.scheme, cfg.N, cfg.lam) == ("iE", 8, 2.5)
    code, out = run(tmp_path, "solve-ode", [], extra=["--config", str(cfgfile)])
    assert code == 0
    prov, _, _ = read_csv(out.read_text())
    assert prov["scheme"] == "iE" and prov["N"] == "8" and float(prov["lam"]) == 2.5
    # --set overrides the file
    code, out = run(tmp_path, "solve-ode", ["N=4"], "b.csv", ["--config", str(cfgfile)])
    assert read_csv(out.read_text())[0]["N"] == "4"


def test_build_config_errors():
    with pytest.raises(ConfigError, match="invalid config key 'j_max'"):
        build_config("convergence", {"j_min": "4", "j_max": "4"})
    with pytest.raises(ConfigError):
        parse_kv("no equals sign")
