import json
import subprocess
import sys

import numpy as np
import pytest

from zefoz.cli import main
from zefoz.config import ConfigError, load_config, parse_config
from zefoz.tensors import PR_YSO_SITE1

BASE = {
    "spin_two_I": 5,
    "q_principal_MHz": [0.5624, 4.4450],
    "g_principal_kHz_per_G": [2.86, 3.05, 11.56],
    "euler_deg": [-99.7, 55.7, -40.0],
}


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def data_rows(text):
    return [ln for ln in text.splitlines() if ln and not ln.startswith("#")]


def test_bundled_config_is_site1():
    cfg = load_config()
    t = cfg.tensors()
    assert cfg.euler_convention == "zyz"
    np.testing.assert_allclose(cfg.q_principal_MHz, (PR_YSO_SITE1["E"], PR_YSO_SITE1["D"]))
    np.testing.assert_allclose(np.linalg.eigvalsh(t.m_matrix), np.array([2.86, 3.05, 11.56]) / 1000)
    assert load_config("site1_pr_yso") == cfg


def test_config_round_trip():
    cfg = parse_config(dict(BASE))
    again = parse_config(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg and again.hash == cfg.hash
    assert cfg.with_convention("zxz").hash != cfg.hash


@pytest.mark.parametrize("patch, key", [
    ({"colour": 1}, "colour"),
    ({"q_principal_MHz": [0.5, 0.0]}, "q_principal_MHz"),
    ({"g_principal_kHz_per_G": [1, 2]}, "g_principal_kHz_per_G"),
    ({"g_principal_kHz_per_G": [1, -2, 3]}, "g_principal_kHz_per_G"),
    ({"euler_convention": "abc"}, "euler_convention"),
    ({"spin_two_I": 0}, "spin_two_I"),
    ({"spin_two_I": 40}, "spin_two_I"),
    ({"c2_axis": [0, 0, 0]}, "c2_axis"),
    ({"euler_deg": [1, "x", 3]}, "euler_deg"),
])
def test_config_errors_name_the_key(patch, key):
    with pytest.raises(ConfigError) as err:
        parse_config({**BASE, **patch})
    assert err.value.key == key and key in str(err.value)


def test_missing_key():
    raw = dict(BASE)
    del raw["euler_deg"]
    with pytest.raises(ConfigError, match="euler_deg"):
        parse_config(raw)


def test_levels_shape_and_metadata(capsys):
    code, out, _ = run(["levels", "--end", "732", "173", "-219", "--points", "100"], capsys)
    assert code == 0
    meta = [ln for ln in out.splitlines() if ln.startswith("#")]
    assert any("config_hash" in m for m in meta) and any("euler_convention: zyz" in m for m in meta)
    assert any("units" in m for m in meta)
    rows = data_rows(out)
    assert rows[0] == "Bx,By,Bz,E_0,E_1,E_2,E_3,E_4,E_5"
    assert len(rows) == 101 and all(len(r.split(",")) == 9 for r in rows[1:])


def test_levels_is_deterministic(capsys):
    args = ["levels", "--end", "100", "-50", "300", "--points", "20", "--subsite", "b"]
    assert run(args, capsys)[1] == run(args, capsys)[1]


def test_levels_points_file(tmp_path, capsys):
    pts = tmp_path / "pts.csv"
    pts.write_text("# fields\n0,0,10\n0,0,20\n5,5,30\n")
    code, out, _ = run(["levels", "--points-file", str(pts)], capsys)
    assert code == 0 and len(data_rows(out)) == 4


def test_levels_zero_length_path(capsys):
    assert run(["levels", "--end", "1", "1", "1", "--points", "0"], capsys)[0] == 1
    assert run(["levels", "--end", "1", "1", "1", "--points", "1"], capsys)[0] == 1


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**BASE, "q_principal_MHz": [0.5, -1.0]}))
    code, _, err = run(["levels", "--config", str(bad), "--end", "1", "0", "0"], capsys)
    assert code == 1 and "q_principal_MHz" in err
    code, _, err = run(["levels", "--convention", "qqq", "--end", "1", "0", "0"], capsys)
    assert code == 1 and "euler_convention" in err


def test_usage_error_exit_code(capsys):
    assert run(["frobnicate"], capsys)[0] == 1
    assert run(["sensitivity", "--field", "1", "2"], capsys)[0] == 1


def test_convention_override_is_recorded(capsys):
    _, out, _ = run(["levels", "--convention", "zyx-intrinsic", "--end", "1", "0", "0", "--points", "2"], capsys)
    assert "# euler_convention: zyx-intrinsic" in out


def test_output_dir_override(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("ZEFOZ_OUTPUT_DIR", str(tmp_path))
    assert run(["levels", "--end", "1", "0", "0", "--points", "3", "--out", "sub/levels.csv"], capsys)[0] == 0
    assert len(data_rows((tmp_path / "sub" / "levels.csv").read_text())) == 4


def test_spectrum_command(capsys):
    code, out, _ = run(["spectrum", "--end", "0", "300", "0", "--points", "5", "--window", "0", "40"], capsys)
    assert code == 0
    rows = data_rows(out)
    assert rows[0] == "point_index,Bx,By,Bz,subsite,lo,hi,freq_MHz,intensity"
    assert len(rows) == 1 + 5 * 30


def test_sensitivity_zero_field_flagged(capsys):
    code, out, _ = run(["sensitivity", "--transition", "1,2", "--field", "0", "0", "0"], capsys)
    assert code == 0
    assert out.count("degeneracy_flag: true") == 2


def test_sensitivity_reports_both_sites(capsys):
    code, out, _ = run(["sensitivity", "--transition", "2,4", "--field", "300", "100", "-50"], capsys)
    assert code == 0
    assert "[subsite a]" in out and "[subsite b]" in out and "gradient_norm_ratio_b_over_a" in out
    assert "hessian_axis_3" in out and "classification" in out


def test_sensitivity_bad_label_lists_available(capsys):
    code, _, err = run(["sensitivity", "--transition", "+1/2<->+9/2", "--field", "300", "0", "0"], capsys)
    assert code == 1 and "available" in err


def test_search_isotropic_is_empty(capsys):
    code, out, _ = run(["search", "--config", "isotropic_zeeman", "--transition", "2,3",
                        "--lower", "-500", "-500", "-500", "--upper", "500", "500", "500"], capsys)
    assert code == 0
    rows = data_rows(out)
    assert rows == ["Bx,By,Bz,freq_MHz,grad_norm,lambda1,lambda2,lambda3,class,subsite,iterations,transition"]


def test_search_reversed_box(capsys):
    code, _, err = run(["search", "--transition", "1,2", "--lower", "10", "0", "0",
                        "--upper", "0", "10", "10"], capsys)
    assert code == 1 and "lower" in err


def test_search_small_box_with_report(tmp_path, capsys):
    rep = tmp_path / "report.txt"
    args = ["search", "--transition", "1/2<->3/2", "--convention", "zyx-intrinsic",
            "--lower", "500", "200", "-400", "--upper", "800", "400", "-150", "--step", "25",
            "--report", str(rep), "--workers", "2"]
    code, out, _ = run(args, capsys)
    assert code == 0
    rows = data_rows(out)[1:]
    assert rows, "expected the critical point near (635, 297, -272) G"
    freqs = [float(r.split(",")[3]) for r in rows]
    assert any(abs(f - 8.6472) < 1e-3 for f in freqs)
    assert "[critical_point 0]" in rep.read_text()
    # identical output with one worker
    args[-1] = "1"
    assert run(args, capsys)[1] == out


def test_fit_bundled(capsys):
    code, out, _ = run(["fit", "--bundled", "zero_field", "--model", "exponential"], capsys)
    assert code == 0
    t2 = float(next(ln for ln in out.splitlines() if ln.startswith("T2:")).split()[1])
    assert t2 == pytest.approx(500e-6, rel=0.05)

    def rms(model):
        _, o, _ = run(["fit", "--bundled", "critical_point", "--model", model], capsys)
        return o, float(next(ln for ln in o.splitlines() if ln.startswith("residual_rms")).split()[1])

    out_q, rq = rms("mims_quadratic")
    _, re_ = rms("exponential")
    tm = float(next(ln for ln in out_q.splitlines() if ln.startswith("TM:")).split()[1])
    assert tm == pytest.approx(0.082, rel=0.05)
    assert rq < re_


def test_fit_errors(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run(["fit", "--data", str(empty), "--model", "exponential"], capsys)[0] == 1
    few = tmp_path / "few.csv"
    few.write_text("t_s,intensity\n0,1\n1,0.5\n2,0.25\n")
    code, _, err = run(["fit", "--data", str(few), "--model", "exponential"], capsys)
    assert code == 1 and "at least 4" in err
    assert run(["fit", "--data", str(tmp_path / "missing.csv"), "--model", "exponential"], capsys)[0] == 1


def test_generate_then_fit(tmp_path, capsys):
    data = tmp_path / "d.csv"
    curve = tmp_path / "curve.csv"
    code, _, _ = run(["generate", "--model", "mims_quadratic", "--params", "1", "0.082",
                      "--times", "0.002", "0.16", "30", "--noise", "0.01", "--seed", "4",
                      "--out", str(data)], capsys)
    assert code == 0 and "# seed: 4" in data.read_text()
    code, out, _ = run(["fit", "--data", str(data), "--model", "mims_quadratic",
                        "--curve-out", str(curve)], capsys)
    assert code == 0 and "converged: true" in out
    assert len(data_rows(curve.read_text())) == 201


def test_generate_invalid(capsys):
    assert run(["generate", "--model", "exponential", "--params", "1", "-1",
                "--times", "0", "1", "10"], capsys)[0] == 1


def test_entry_point_runs():
    res = subprocess.run([sys.executable, "-m", "zefoz", "levels", "--end", "0", "0", "10", "--points", "2"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "E_5" in res.stdout
