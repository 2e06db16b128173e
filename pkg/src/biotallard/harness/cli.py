"""Command-line entry point and scenario runner.

Every run writes into its output directory:

* ``config.json``: the input document, echoed verbatim,
* ``summary.json``: mode, status and headline numbers,
* mode-specific artefacts (``trajectory.csv``, ``convergence.csv``,
  ``report.json``, ``series.json``, ``transfer.csv``, ``final_state.bin``).

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..ade_solver import Layout, assemble_system, norm_probe, run, save_state
from ..conv_oracle import run_convolution
from ..discretization import build_ops
from ..errors import BiotAllardError, ConfigError
from ..material import assemble_material_law, check_wellposedness
from .config import Scenario, load_config
from .mms import default_case, mms_study
from .studies import compare_study, transfer_study

__all__ = ["main", "run_scenario", "run_batch", "COMMANDS"]

log = logging.getLogger("biotallard")

COMMANDS = {
    "fit": "fit",
    "check": "check",
    "run-ade": "ade",
    "run-conv": "convolution",
    "compare": "compare",
    "mms": "mms",
    "transfer": "transfer",
}


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if math.isnan(x) or math.isinf(x) else x
    if isinstance(x, np.integer):
        return int(x)
    return x


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2) + "\n")


# --------------------------------------------------------------------------
# modes
# --------------------------------------------------------------------------


def _mode_fit(sc: Scenario, out: Path) -> dict:
    mat = sc.material() if "material" in sc.data else None
    blk = sc.data["permeability"]
    res = sc.run_fit(blk.get("eta_k", mat.eta_k if mat else 1.0), blk.get("F", mat.F if mat else 1.0))
    (out / "series.json").write_text(res.series.to_json() + "\n")
    log.info("fit: N=%d residual=%.3e after %d iterations", res.series.N, res.residual, res.iterations)
    return {"series": res.series.to_dict(), "residual": res.residual, "iterations": res.iterations}


def _mode_check(sc: Scenario, out: Path) -> dict:
    blk = sc.data["check"]
    rep = check_wellposedness(sc.material(), sc.series(), blk["nu0"], blk.get("d", 1))
    _write_json(out / "report.json", rep.to_dict())
    log.info("%s", rep.table())
    return {"holds": rep.holds, "c_min": rep.c_min, "nu0_admissible_range": rep.to_dict()["nu0_admissible_range"]}


def _mode_run(sc: Scenario, out: Path, convolution: bool) -> dict:
    params = sc.material()
    series = sc.series()
    grid = sc.grid()
    cfg = sc.solver_config(grid.d)
    forcing = sc.forcing(grid.d)
    ops = build_ops(grid)
    if convolution:
        probes = sc.probes(Layout(grid, 1))
        traj = run_convolution(params, series, grid, cfg, forcing, probes, ops=ops)
    else:
        law = assemble_material_law(params, series, grid.d)
        stepper = assemble_system(law, ops, cfg)
        probes = sc.probes(stepper.layout) + [norm_probe(stepper, "p", "|p|")]
        traj = run(stepper, cfg, forcing, probes)
    traj.to_csv(out / "trajectory.csv")
    save_state(out / "final_state.bin", traj.final, traj.layout)
    log.info("%s: %d steps, final energy %.6e", "convolution" if convolution else "ade", len(traj), traj.energy[-1])
    return {
        "steps": len(traj),
        "T": float(traj.times[-1]),
        "initial_energy": traj.initial_energy,
        "final_energy": float(traj.energy[-1]),
        "max_energy": float(np.max(traj.energy)),
    }


def _mode_compare(sc: Scenario, out: Path) -> dict:
    grid = sc.grid()
    cfg = sc.solver_config(grid.d)
    res = compare_study(sc.material(), sc.series(), grid, cfg.T, sc.data["compare"]["dts"],
                        sc.forcing(grid.d), theta=cfg.theta)
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dt", "max_diff", "order"])
        for k, (dt, md) in enumerate(zip(res.dts, res.max_diff)):
            w.writerow([repr(dt), repr(md), "" if k == 0 else repr(res.orders[k - 1])])
    log.info("compare: max_diff=%s observed order %.3f", res.max_diff, res.observed_order)
    return {"max_diff": res.max_diff[-1], "max_diff_per_dt": res.max_diff, "dt": res.dts,
            "observed_order": res.observed_order}


def _mode_mms(sc: Scenario, out: Path) -> dict:
    blk = sc.data["mms"]
    refs = [(tuple(np.atleast_1d(c).tolist()), dt) for c, dt in blk["refinements"]]
    d = len(refs[0][0])
    case = default_case(sc.material(), sc.series(), d)
    table = mms_study(case, refs, T_end=blk.get("T", 1.0), theta=blk.get("theta", 0.5),
                      kind=blk.get("kind", "spacetime"))
    table.to_csv(out / "convergence.csv")
    log.info("mms: orders %s", [f"{o:.3f}" for o in table.orders])
    return {"kind": table.kind, "theta": table.theta, "errors": [r["error"] for r in table.rows],
            "orders": table.orders}


def _mode_transfer(sc: Scenario, out: Path) -> dict:
    blk = sc.data["transfer"]
    om = blk["omegas"]
    omegas = np.logspace(*om["logspace"][:2], int(om["logspace"][2])) if isinstance(om, dict) else om
    rows = transfer_study(sc.series(), omegas, blk.get("dt"), theta=blk.get("theta", 0.5))
    with open(out / "transfer.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega", "measured_re", "measured_im", "expected_re", "expected_im", "rel_err"])
        for r in rows:
            w.writerow([repr(x) for x in (r.omega, r.measured.real, r.measured.imag,
                                          r.expected.real, r.expected.imag, r.rel_err)])
    worst = max(r.rel_err for r in rows)
    log.info("transfer: worst relative error %.3e over %d frequencies", worst, len(rows))
    return {"max_rel_err": worst, "omegas": [r.omega for r in rows]}


_RUNNERS = {
    "fit": _mode_fit,
    "check": _mode_check,
    "ade": lambda sc, out: _mode_run(sc, out, convolution=False),
    "convolution": lambda sc, out: _mode_run(sc, out, convolution=True),
    "compare": _mode_compare,
    "mms": _mode_mms,
    "transfer": _mode_transfer,
}


def run_scenario(config, mode: str | None = None, out=None) -> int:
    """Execute one scenario and return its exit code.

    ``mode`` overrides the document's ``mode`` field; ``out`` defaults to a
    ``run_<mode>`` directory beside the config file.
    """
    try:
        sc = load_config(config)
        mode = mode or sc.mode
        if mode is None:
            raise ConfigError(f"{config}: no mode given on the command line or in the document")
        if sc.mode is not None and sc.mode != mode:
            log.warning("command-line mode '%s' overrides document mode '%s'", mode, sc.mode)
        sc.require(mode)
    except ConfigError as exc:
        log.error("%s", exc)
        return 2
    out = Path(out) if out is not None else Path(config).parent / f"run_{mode}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(sc.text)
    summary = {"mode": mode, "schema_version": sc.data["version"], "seed": sc.seed}
    try:
        summary.update(_RUNNERS[mode](sc, out))
        summary["status"] = "ok"
        code = 0
    except ConfigError as exc:
        log.error("%s", exc)
        summary.update(status="config_error", error=str(exc))
        code = 2
    except (BiotAllardError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        summary.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        code = 1
    _write_json(out / "summary.json", summary)
    return code


def _batch_worker(args):
    cfg, mode, out, quiet = args
    _setup_logging(quiet)
    return run_scenario(cfg, mode, out)


def run_batch(configs, mode: str | None = None, out_root=None, workers: int | None = None,
              quiet: bool = True) -> list[int]:
    """Run scenarios in parallel, one process per scenario; returns exit codes in order."""
    jobs = []
    for k, cfg in enumerate(configs):
        out = None if out_root is None else Path(out_root) / f"{k:03d}_{Path(cfg).stem}"
        jobs.append((str(cfg), mode, out, quiet))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_batch_worker, jobs))


def _setup_logging(quiet: bool) -> None:
    logging.basicConfig(format="%(levelname)s: %(message)s", stream=sys.stderr, force=True,
                        level=logging.WARNING if quiet else logging.INFO)


def _add_globals(p: argparse.ArgumentParser) -> None:
    # SUPPRESS lets the flags appear before or after the subcommand
    p.add_argument("--config", default=argparse.SUPPRESS, help="scenario JSON document")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: run_<mode> beside the config)")
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="only report warnings and errors")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="biotallard", description=__doc__.splitlines()[0])
    _add_globals(ap)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _add_globals(sub.add_parser(name, help=f"run mode '{COMMANDS[name]}'"))
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if not hasattr(args, "config"):
        ap.error("--config is required")
    _setup_logging(getattr(args, "quiet", False))
    return run_scenario(args.config, COMMANDS[args.command], getattr(args, "out", None))


if __name__ == "__main__":
    sys.exit(main())
