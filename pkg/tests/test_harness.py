import json
import math
import subprocess
import sys

import numpy as np
import pytest

from biotallard.ade_solver import Layout
from biotallard.discretization import build_grid
from biotallard.errors import ConfigError, ResolutionError
from biotallard.harness import cli
from biotallard.harness.config import parse_config
from biotallard.harness.mms import ConvergenceTable, default_case, mms_error, mms_study
from biotallard.harness.studies import steady_response, transfer_study
from biotallard.permeability import PermeabilitySeries, eval_hat, sample_series

MATERIAL = {"rho_s": 2.5, "rho_f": 1.0, "phi": 0.3, "alpha": 0.8, "c0": 0.5, "eta": 0.5,
            "alpha_inf": 1.5, "lame": [1.0, 0.7]}


def _doc(**blocks):
    doc = {"version": 1, "material": MATERIAL, "permeability": {"terms": [[0.5, 1.0]]},
           "grid": {"d": 1, "extents": [1.0], "cells": [8]},
           "solver": {"dt": 0.05, "T": 0.5, "u0": "exp(-30*(x-0.5)**2)"},
           "forcing": {"f": "sin(pi*x)*cos(2*t)"},
           "probes": [{"name": "p3", "field": "p", "index": 3}]}
    doc.update(blocks)
    return {k: v for k, v in doc.items() if v is not None}


def _write(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=2))
    return path


# configuration ---------------------------------------------------------------


def test_schema_error_names_line(tmp_path):
    mat = {k: v for k, v in MATERIAL.items() if k != "phi"}
    text = json.dumps(_doc(material=mat), indent=2)
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "s.json")
    msg = str(exc.value)
    assert "'phi' is a required property" in msg
    line = int(msg.split(":")[1])
    assert '"material"' in text.splitlines()[line - 1]


def test_syntax_error_names_line_and_column():
    with pytest.raises(ConfigError, match=r"^s.json:3:\d+:"):
        parse_config('{\n  "version": 1,\n  "mode" "ade"\n}', "s.json")


@pytest.mark.parametrize(
    "change,pattern",
    [
        ({"version": 2}, "version"),
        ({"mode": "explode"}, "mode"),
        ({"grid": {"d": 3, "extents": [1.0], "cells": [4]}}, "grid"),
        ({"unknown": 1}, "unknown"),
    ],
)
def test_schema_violations(change, pattern):
    with pytest.raises(ConfigError, match=pattern):
        parse_config(json.dumps(_doc(**change)))


def test_value_errors_are_anchored():
    sc = parse_config(json.dumps(_doc(grid={"d": 1, "extents": [-1.0], "cells": [8]}), indent=2), "s.json")
    with pytest.raises(ConfigError, match=r"s.json:\d+: grid: extents must be positive"):
        sc.grid()


def test_mode_requires_blocks():
    sc = parse_config(json.dumps(_doc(permeability=None)))
    with pytest.raises(ConfigError, match="requires a 'permeability' block"):
        sc.require("compare")
    sc.require("ade")


def test_expressions_and_tabulated_forcing():
    sc = parse_config(json.dumps(_doc(forcing={"f": {"profile": "x", "times": [0, 1], "values": [0, 2]}})))
    f = sc.forcing(1).f
    assert np.allclose(f(0.5, np.array([[0.25], [1.0]])), [[0.25], [1.0]])
    cfg = sc.solver_config(1)
    assert cfg.u0(np.array([[0.5]]))[0, 0] == pytest.approx(1.0)
    with pytest.raises(ConfigError, match="component"):
        parse_config(json.dumps(_doc(forcing={"f": ["x", "y"]}))).forcing(1)
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config(json.dumps(_doc(forcing={"f": "sin(("}))).forcing(1)


def test_probe_validation():
    sc = parse_config(json.dumps(_doc(probes=[{"field": "q", "index": 0}])))
    with pytest.raises(ConfigError, match="unknown field"):
        sc.probes(Layout(build_grid(1, [1.0], [8]), 1))
    sc = parse_config(json.dumps(_doc(probes=[{"field": "p", "index": 8}])))
    with pytest.raises(ConfigError, match="out of range"):
        sc.probes(Layout(build_grid(1, [1.0], [8]), 1))


def test_fit_block_from_csv(tmp_path):
    from biotallard.permeability import write_samples_csv

    truth = PermeabilitySeries(1.0, 1.0, ((0.2, 1.0), (3.0, 0.5)))
    write_samples_csv(tmp_path / "s.csv", sample_series(truth, np.logspace(-2, 2, 30)))
    sc = parse_config(json.dumps({"version": 1, "permeability": {"fit": {"samples": "s.csv", "N": 2}}}),
                      base_dir=tmp_path)
    assert np.allclose(np.array(sc.series().terms), np.array(truth.terms), rtol=1e-8)


# command line ----------------------------------------------------------------


@pytest.mark.parametrize("command", ["run-ade", "run-conv"])
def test_run_modes_write_artifacts(tmp_path, command):
    cfg = _write(tmp_path, _doc())
    out = tmp_path / "out"
    assert cli.main([command, "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "ok" and summary["steps"] == 10
    assert (out / "config.json").read_text() == cfg.read_text()
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("t,energy,p3")
    meta = json.loads((out / "final_state.bin.json").read_text())
    assert np.fromfile(out / "final_state.bin").size == meta["size"]


def test_runs_are_deterministic_and_reproducible(tmp_path):
    cfg = _write(tmp_path, _doc())
    assert cli.main(["--config", str(cfg), "run-ade", "--out", str(tmp_path / "a"), "--quiet"]) == 0
    assert cli.main(["run-ade", "--config", str(cfg), "--out", str(tmp_path / "b"), "--quiet"]) == 0
    a, b = (tmp_path / d / "trajectory.csv" for d in "ab")
    assert a.read_bytes() == b.read_bytes()
    # re-running the echoed config reproduces the summary
    assert cli.main(["run-ade", "--config", str(tmp_path / "a" / "config.json"), "--out", str(tmp_path / "c"),
                     "--quiet"]) == 0
    sa, sc = (json.loads((tmp_path / d / "summary.json").read_text()) for d in "ac")
    assert sa == sc


def test_check_and_fit_modes(tmp_path):
    out = tmp_path / "chk"
    cfg = _write(tmp_path, _doc(check={"nu0": 1.0}))
    assert cli.main(["check", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["holds"] is True and len(rep["per_term_margins"]) == 1
    truth = PermeabilitySeries(1.0, 1.0, ((0.5, 1.0),))
    smp = [[s.omega, s.value.real, s.value.imag] for s in sample_series(truth, np.logspace(-1, 1, 12))]
    cfg = _write(tmp_path, {"version": 1, "mode": "fit", "permeability": {"fit": {"samples": smp, "N": 1}}}, "fit.json")
    assert cli.run_scenario(cfg, out=tmp_path / "fit") == 0
    fitted = PermeabilitySeries.from_json((tmp_path / "fit" / "series.json").read_text())
    assert fitted.terms[0] == pytest.approx((0.5, 1.0), rel=1e-8)


def test_compare_mode(tmp_path):
    cfg = _write(tmp_path, _doc(compare={"dts": [0.02, 0.01, 0.005]}, solver={"dt": 0.02, "T": 0.4, "theta": 1.0}))
    assert cli.main(["compare", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["observed_order"] > 0.8
    assert len((tmp_path / "o" / "convergence.csv").read_text().splitlines()) == 4


def test_mms_and_transfer_modes(tmp_path):
    cfg = _write(tmp_path, _doc(mms={"refinements": [[8, 0.02], [16, 0.01], [32, 0.005]], "T": 0.2},
                                transfer={"omegas": [0.0, 1.0, 2.0]}))
    assert cli.main(["mms", "--config", str(cfg), "--out", str(tmp_path / "m"), "--quiet"]) == 0
    orders = json.loads((tmp_path / "m" / "summary.json").read_text())["orders"]
    assert min(orders) > 1.8
    assert cli.main(["transfer", "--config", str(cfg), "--out", str(tmp_path / "t"), "--quiet"]) == 0
    assert json.loads((tmp_path / "t" / "summary.json").read_text())["max_rel_err"] < 1e-3


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1, "mode": }')
    assert cli.main(["run-ade", "--config", str(bad), "--quiet"]) == 2
    assert cli.run_scenario(tmp_path / "missing.json", "ade") == 2
    assert cli.run_scenario(_write(tmp_path, _doc(mode="check")), None, tmp_path / "x") == 2
    c_star = 0.5 / (5.0 * 2.05)
    singular = _doc(permeability={"terms": [[1.01 * c_star, 1.0], [2.02 * c_star, 2.0]]})
    assert cli.run_scenario(_write(tmp_path, singular, "sing.json"), "ade", tmp_path / "s") == 1
    summary = json.loads((tmp_path / "s" / "summary.json").read_text())
    assert summary["status"] == "failed" and "SingularSystem" in summary["error"]


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, _doc(check={"nu0": 1.0}))
    res = subprocess.run([sys.executable, "-m", "biotallard", "check", "--config", str(cfg), "--out",
                          str(tmp_path / "o"), "--quiet"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    res = subprocess.run([sys.executable, "-m", "biotallard", "check"], capture_output=True, text=True)
    assert res.returncode == 2 and "--config" in res.stderr


def test_run_batch(tmp_path):
    cfgs = [_write(tmp_path, _doc(check={"nu0": nu}), f"c{k}.json") for k, nu in enumerate((0.5, 2.0))]
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    codes = cli.run_batch(cfgs + [bad], "check", tmp_path / "batch", workers=2)
    assert codes == [0, 0, 2]
    assert (tmp_path / "batch" / "000_c0" / "report.json").exists()


# studies ---------------------------------------------------------------------


def test_transfer_guard_and_static_gain():
    s = PermeabilitySeries(0.5, 5.0, ((0.5, 1.0), (2.0, 0.5)))
    with pytest.raises(ResolutionError):
        transfer_study(s, [10.0], dt=0.05)
    row = transfer_study(s, [0.0])[0]
    assert row.expected == pytest.approx(0.5 / 5.0 * 1.5)
    assert row.rel_err < 1e-10


def test_steady_response_is_linear_in_terms():
    s = PermeabilitySeries(1.0, 1.0, ((0.3, 1.0), (2.0, 0.5)))
    w = 1.5
    total = steady_response(s, w, 0.01)
    parts = sum(steady_response(p, w, 0.01, settle=40 * 2.0 / p.c.max()) for p in s.split())
    assert total == pytest.approx(parts, rel=1e-8)
    assert abs(total - eval_hat(s, w)) < 1e-4 * abs(eval_hat(s, w))


def test_mms_table_and_guards(tmp_path, params, series1):
    case = default_case(params, series1, d=1)
    with pytest.raises(ValueError):
        mms_study(case, [((8,), 0.02), ((16,), 0.01)])
    table = mms_study(case, [((8,), 0.02), ((16,), 0.01), ((32,), 0.005)], T_end=0.2)
    assert isinstance(table, ConvergenceTable) and len(table.orders) == 2
    table.to_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().startswith("level,")
    coarse = mms_error(case, (8,), 0.02, 0.2, 0.5)
    assert coarse == pytest.approx(table.rows[0]["error"])
    assert math.isfinite(coarse) and coarse > 0
