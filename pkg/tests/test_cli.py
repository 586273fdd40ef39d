import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from wishart_tails.cli import COND_HEADER, HIST_HEADER, RATE_HEADER, WEIGHTS_HEADER, fmt, main, parse_range
from wishart_tails.distributions import zf_exact


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_edges(capsys):
    code, out, _ = run(capsys, "edges", "--alpha", "2")
    assert code == 0
    rec = json.loads(out)
    assert rec["a"] == pytest.approx(0.171573, abs=1e-6)
    assert rec["b"] == pytest.approx(5.828427, abs=1e-6)


def test_rate_has_zero_row_at_ergodic_value(capsys):
    code, out, _ = run(capsys, "rate", "--alpha", "2", "--rho", "1", "--receiver", "mmse", "--z", "0.2:4.0:0.01")
    assert code == 0
    table = rows(out)
    assert table[0] == RATE_HEADER
    zs = np.array([float(r[0]) for r in table[1:]])
    rates = np.array([float(r[7]) for r in table[1:]])
    i = np.argmin(np.abs(zs - math.sqrt(2)))
    assert zs[i] == pytest.approx(math.sqrt(2), abs=1e-11)
    assert abs(rates[i]) < 1e-11
    assert np.all(rates >= -1e-12)
    regimes = {r[1] for r in table[1:]}
    assert regimes == {"inner", "outer_low", "outer_high"}


def test_rate_with_dims_includes_logpdfs(capsys):
    code, out, _ = run(capsys, "rate", "--M", "6", "--N", "3", "--rho", "10", "--z", "0.5,1,2.5", "--format", "json")
    assert code == 0
    recs = json.loads(out)
    # the ergodic point is always added when the range straddles it
    assert [r["z"] for r in recs] == [0.5, 1.0, pytest.approx(1.084428877), 2.5]
    assert recs[2]["rate"] == pytest.approx(0.0, abs=1e-12)
    assert all(r["logpdf_analytic"] is not None for r in recs)


def test_outage_at_gamma_median(capsys, caplog):
    target = float(zf_exact(6, 3, 10.0).ppf(0.5))
    code, out, err = run(capsys, "outage", "--M", "6", "--N", "3", "--rho", "10", "--receiver", "zf", "--target", repr(target))
    assert code == 0
    assert json.loads(out)["probability"] == pytest.approx(0.5, abs=1e-6)
    assert "rho only rescales" in caplog.text


def test_outage_db(capsys):
    code, out, _ = run(capsys, "outage", "--M", "6", "--N", "3", "--rho", "10", "--target-db", "10", "--method", "gaussian")
    assert code == 0
    assert json.loads(out)["target_sinr"] == pytest.approx(10.0)


def test_pdf_columns(capsys):
    code, out, _ = run(capsys, "pdf", "--M", "6", "--N", "3", "--rho", "10", "--receiver", "zf", "--grid-size", "512")
    assert code == 0
    table = rows(out)
    assert table[0] == ["z", "sinr", "pdf_analytic", "pdf_gaussian", "pdf_gamma_fit", "pdf_exact"]
    data = np.array(table[1:], dtype=float)
    assert np.allclose(data[:, 1], 10 * data[:, 0])
    assert np.max(np.abs(data[:, 2] - data[:, 5])) < 1e-8


def test_weights_profiles(capsys):
    code, out, _ = run(capsys, "weights", "--alpha", "1", "--receiver", "zf", "--z", "3", "--grid-size", "21")
    assert code == 0
    table = rows(out)
    assert table[0] == WEIGHTS_HEADER
    det = [r for r in table[1:] if r[2] == "detached"]
    assert len(det) == 1
    assert float(det[0][3]) == pytest.approx(4.5) and float(det[0][4]) == pytest.approx(0.75)
    assert float(det[0][5]) == pytest.approx(3.5935, abs=1e-3)


def test_weights_default_z_values(capsys):
    code, out, _ = run(capsys, "weights", "--alpha", "2", "--receiver", "zf", "--grid-size", "11")
    assert code == 0
    zs = sorted({float(r[0]) for r in rows(out)[1:]})
    assert len(zs) == 5


@pytest.mark.parametrize(
    "argv",
    [
        ["edges", "--alpha", "0.5"],
        ["rate", "--alpha", "2", "--receiver", "mmse"],
        ["rate", "--alpha", "2", "--rho", "1", "--z", "1:0:0.1"],
        ["rate", "--alpha", "3", "--M", "4", "--N", "2", "--rho", "1"],
        ["pdf", "--alpha", "2", "--rho", "1"],
        ["outage", "--M", "6", "--N", "3", "--rho", "1"],
        ["mc", "--M", "6", "--N", "3", "--rho", "1", "--samples", "10"],
        ["rate", "--alpha", "2", "--rho", "-1"],
    ],
)
def test_invalid_input_exits_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert err


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["rate", "--receiver", "bogus"])
    assert exc.value.code == 2


def test_verify_quick(capsys, tmp_path):
    report = tmp_path / "report.json"
    code, _, err = run(capsys, "verify", "--alpha", "2", "--rho", "1", "--quick", "--out", str(report))
    assert code == 0
    data = json.loads(report.read_text())
    assert data["passed"] and "weight_balance" in data["families"]
    assert "max=" in err


def test_verify_degenerate_warning_still_passes(capsys):
    code, out, err = run(capsys, "verify", "--alpha", "1", "--receiver", "zf", "--quick")
    assert code == 0
    assert any("Gaussian approximation breaks down" in w for w in json.loads(out)["warnings"])


def test_verify_fault_injection(capsys):
    code, out, _ = run(capsys, "verify", "--alpha", "2", "--rho", "1", "--quick", "--self-test-fault")
    assert code == 1
    assert not json.loads(out)["passed"]


def test_mc_outputs_and_determinism(capsys, tmp_path):
    args = ["mc", "--M", "6", "--N", "3", "--rho", "10", "--receiver", "zf", "--samples", "5000", "--seed", "7",
            "--bins", "32", "--weights-z", "0.8:1.2", "--x-bins", "4"]
    assert run(capsys, *args, "--out-dir", str(tmp_path / "a"))[0] == 0
    assert run(capsys, *args, "--out-dir", str(tmp_path / "b"), "--workers", "2")[0] == 0
    for name in ("mc_hist.csv", "mc_summary.json", "mc_weights.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    hist = rows((tmp_path / "a" / "mc_hist.csv").read_text())
    assert hist[0] == HIST_HEADER and len(hist) == 33
    assert rows((tmp_path / "a" / "mc_weights.csv").read_text())[0] == COND_HEADER
    summary = json.loads((tmp_path / "a" / "mc_summary.json").read_text())
    assert summary["ks"]["exact"] < summary["ks_critical_1pct"]
    assert summary["sinr"]["mean"] == pytest.approx(40 / 3, abs=4 * summary["sinr"]["mean_se"])
    assert set(summary["tv"]) == {"analytic", "gaussian", "gamma_fit", "exact"}


def test_mc_all_streams_skips_ks(capsys, tmp_path):
    code, _, _ = run(capsys, "mc", "--M", "4", "--N", "2", "--rho", "1", "--samples", "1000", "--all-streams",
                     "--out-dir", str(tmp_path))
    assert code == 0
    summary = json.loads((tmp_path / "mc_summary.json").read_text())
    assert summary["ks"] is None and summary["z"]["count"] == 2000


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "wishart_tails", "edges", "--alpha", "4"], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout) == {"alpha": 4.0, "a": 1.0, "b": 9.0}


def test_number_format():
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(None) == ""
    assert len(fmt(math.pi * 1e10).replace(".", "").rstrip("0")) <= 13


def test_parse_range():
    assert np.allclose(parse_range("0.1:0.5:0.1"), [0.1, 0.2, 0.3, 0.4, 0.5])
    assert np.allclose(parse_range("1,2,5"), [1, 2, 5])
