from __future__ import annotations

import csv
import io
import json
import math

import numpy as np
import pytest

from levyfpt.cli import emit_csv, format_value, parse_range, run


def read_csv(text: str):
    lines = text.splitlines()
    assert lines[0].startswith("# ")
    manifest = json.loads(lines[0][2:])
    rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    return manifest, rows[0], rows[1:]


def test_fpt_pdf_matches_bm_oracle(capsys):
    code = run(["fpt-pdf", "--family", "bm", "--mu", "0", "--sigma", "1", "--level", "3", "--tmax", "30"])
    assert code == 0
    manifest, header, rows = read_csv(capsys.readouterr().out)
    assert header == ["t", "density"]
    assert manifest["level"] == 3.0
    t = np.array([float(r[0]) for r in rows])
    f = np.array([float(r[1]) for r in rows])
    assert t.size == 3000 and t[-1] == pytest.approx(30.0)
    exact = 3.0 / np.sqrt(2 * np.pi * t**3) * np.exp(-9.0 / (2 * t))
    np.testing.assert_allclose(f, exact, atol=1e-8)


def test_unknown_flag_is_usage_error(capsys):
    assert run(["fpt-pdf", "--family", "bm", "--level", "1", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_subcommand(capsys):
    assert run([]) == 2


@pytest.mark.parametrize("cmd", ["fpt-pdf", "simulate", "price-european", "calibrate",
                                 "price-perpetual", "price-barrier"])
def test_help_exists(cmd, capsys):
    assert run([cmd, "--help"]) == 0
    assert "usage" in capsys.readouterr().out


def test_domain_error_exit_code(capsys):
    code = run(["fpt-pdf", "--family", "nts", "--alpha", "3", "--theta", "1", "--beta", "0",
                "--gamma", "1", "--level", "1"])
    assert code == 1
    assert "ParameterError" in capsys.readouterr().err


def test_mutually_exclusive_maturity(capsys):
    code = run(["price-european", "--family", "bm", "--sigma", "0.2", "--spot", "100", "--kind", "call",
                "--strikes", "100", "--maturity", "1", "--maturity-days", "365"])
    assert code == 2


def test_price_european_and_params_file(tmp_path, capsys):
    cfg = tmp_path / "m.json"
    cfg.write_text(json.dumps({"family": "bm", "params": {"sigma": 0.3, "mu": 5.0}}))
    code = run(["price-european", "--params", str(cfg), "--sigma", "0.2", "--spot", "100", "--rate", "0.05",
                "--kind", "call", "--strikes", "90:10:110", "--maturity-days", "365"])
    assert code == 0
    _, header, rows = read_csv(capsys.readouterr().out)
    assert header == ["strike", "maturity", "kind", "price"]
    assert [float(r[0]) for r in rows] == [90.0, 100.0, 110.0]
    # flag overrides file; drift is replaced by the risk-neutral one
    from levyfpt import black_scholes
    expected = black_scholes(100.0, np.array([90.0, 100.0, 110.0]), 1.0, 0.05, 0.0, 0.2)
    np.testing.assert_allclose([float(r[3]) for r in rows], expected, atol=1e-6)


def test_simulate_outputs_and_determinism(tmp_path):
    args = ["simulate", "--family", "nig", "--standard", "--theta", "1", "--beta", "-0.3", "--level", "1",
            "--steps", "48", "--paths", "300", "--seed", "5", "--bins", "4"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(args + ["-o", str(a), "--histogram", str(tmp_path / "h.csv"), "--threads", "1"]) == 0
    assert run(args + ["-o", str(b), "--threads", "2"]) == 0
    rows_a = read_csv(a.read_text())[2]
    assert rows_a == read_csv(b.read_text())[2]
    _, header, hist = read_csv((tmp_path / "h.csv").read_text())
    assert header == ["bin_left", "bin_right", "relative_frequency"]
    hits = sum(1 for r in rows_a if r[1] != "")
    assert sum(float(r[2]) for r in hist) == pytest.approx(hits / 300)


def test_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("LEVYFPT_THREADS", "2")
    out = tmp_path / "s.csv"
    assert run(["simulate", "--family", "bm", "--level", "1", "--steps", "10", "--paths", "20",
                "-o", str(out)]) == 0
    assert read_csv(out.read_text())[0]["threads"] == 2


def test_price_perpetual_scan(capsys):
    code = run(["price-perpetual", "--family", "bm", "--sigma", "0.2", "--spot", "100", "--rate", "0.05",
                "--kind", "put", "--strike", "100", "--moneyness", "0.8:0.1:1.2"])
    assert code == 0
    _, header, rows = read_csv(capsys.readouterr().out)
    assert header == ["moneyness", "spot", "price", "exercise_level", "immediate"]
    assert len(rows) == 5
    assert float(rows[0][3]) == pytest.approx(100 * 2.5 / 3.5)


def test_price_barrier(tmp_path, capsys):
    cfg = tmp_path / "bm.json"
    cfg.write_text(json.dumps({"family": "bm", "params": {"sigma": 0.1267}}))
    code = run(["price-barrier", "--params", str(cfg), "--spot", "1968.89", "--rate", "0.0012",
                "--div", "0.0194", "--barrier", "1750", "--maturity", "1.0", "--kind", "call",
                "--direction", "down", "--inout", "in", "--strikes", "1600:100:1800"])
    assert code == 0
    _, header, rows = read_csv(capsys.readouterr().out)
    assert header == ["strike", "price"]
    np.testing.assert_allclose([float(r[1]) for r in rows], [63.2297578, 32.962453, 14.1357028], atol=1e-5)


def test_price_barrier_wrong_side(capsys):
    code = run(["price-barrier", "--family", "bm", "--sigma", "0.2", "--spot", "100", "--barrier", "120",
                "--maturity", "1", "--kind", "call", "--direction", "down", "--inout", "in",
                "--strikes", "100"])
    assert code == 1


def test_calibrate(tmp_path, capsys):
    from levyfpt import BrownianMotion, MarketSpec, risk_neutral, synthetic_chain, write_chain
    market = MarketSpec(100.0, 0.01, 0.0)
    chain = synthetic_chain(risk_neutral(BrownianMotion(0.25), 0.01, 0.0), market, [95.0, 100.0, 105.0],
                            [0.5])
    write_chain(chain, tmp_path / "c.csv")
    out = tmp_path / "fit.json"
    code = run(["calibrate", "--family", "bm", "--sigma", "0.1", "--spot", "100", "--rate", "0.01",
                "--chain", str(tmp_path / "c.csv"), "--save-model", str(out)])
    assert code == 0
    _, header, rows = read_csv(capsys.readouterr().out)
    values = dict(rows)
    assert float(values["sigma"]) == pytest.approx(0.25, abs=1e-6)
    assert json.loads(out.read_text())["params"]["sigma"] == pytest.approx(0.25, abs=1e-6)
    # usage: missing initial values
    assert run(["calibrate", "--family", "nig", "--theta", "1", "--spot", "100",
                "--chain", str(tmp_path / "c.csv")]) == 2
    # I/O
    assert run(["calibrate", "--family", "bm", "--sigma", "0.1", "--spot", "100",
                "--chain", str(tmp_path / "missing.csv")]) == 1


def test_missing_family_is_usage_error(capsys):
    assert run(["fpt-pdf", "--level", "1", "--sigma", "1"]) == 2


def test_emit_csv_header_only_and_round_trip(tmp_path):
    path = tmp_path / "e.csv"
    emit_csv([], path, ("a", "b"))
    assert path.read_bytes() == b"a,b\n"
    values = [0.1, 1 / 3, math.pi * 1e-300, 2.0**60 + 1, -0.0, 1e300]
    emit_csv([(v,) for v in values], path, ("x",))
    back = [float(line) for line in path.read_text().splitlines()[1:]]
    assert back == values
    emit_csv(np.array(values)[:, None], path, ("x",))
    assert [float(line) for line in path.read_text().splitlines()[1:]] == values


def test_format_value():
    assert format_value(3) == "3"
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(True) == "true"
    assert format_value("call") == "call"


@pytest.mark.parametrize("text,expected", [
    ("1600:25:1700", [1600.0, 1625.0, 1650.0, 1675.0, 1700.0]),
    ("0.8:0.1:1.2", [0.8, 0.9, 1.0, 1.1, 1.2]),
    ("1,2.5,3", [1.0, 2.5, 3.0]),
])
def test_parse_range(text, expected):
    np.testing.assert_allclose(parse_range(text), expected, rtol=1e-14)


@pytest.mark.parametrize("text", ["1:0:2", "3:1:2", "", "a,b"])
def test_parse_range_rejects(text):
    import argparse
    with pytest.raises(argparse.ArgumentTypeError):
        parse_range(text)


def test_emit_csv_large_file_is_fast(tmp_path):
    import time
    rows = np.random.default_rng(0).random((10**6, 2))
    start = time.perf_counter()
    emit_csv(rows, tmp_path / "big.csv", ("t", "density"))
    assert time.perf_counter() - start < 5.0
    assert (tmp_path / "big.csv").read_text().count("\n") == 10**6 + 1
