"""Frequency-response and ADE-versus-convolution studies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..ade_solver import Forcing, SolverConfig, assemble_system, integrate_ade, run
from ..conv_oracle import run_convolution
from ..discretization import Grid, build_ops
from ..errors import ResolutionError
from ..material import MaterialParams, assemble_material_law
from ..permeability import PermeabilitySeries, eval_hat

__all__ = ["TransferRow", "transfer_study", "steady_response", "CompareResult", "compare_study", "collapse_psi"]


@dataclass(frozen=True)
class TransferRow:
    omega: float
    measured: complex
    expected: complex
    rel_err: float


def steady_response(series: PermeabilitySeries, omega: float, dt: float, theta: float = 0.5,
                    settle: float = 40.0, periods: int = 4) -> complex:
    """Complex gain of the standalone ADEs driven by ``g(t) = sin(omega t)``.

    The run lasts ``settle * max(c_j)`` (transient decay) plus ``periods``
    whole periods; ``a sin + b cos`` is then fitted by least squares over the
    final periods and ``a + i b`` is returned. ``omega = 0`` drives with
    ``g = 1`` and returns the settled value.
    """
    c_max = float(np.max(series.c))
    if omega == 0:
        n = int(math.ceil(settle * c_max / dt))
        return complex(integrate_ade(series, np.ones(n + 1), dt, theta)[-1])
    period = 2 * math.pi / omega
    n_tail = int(round(periods * period / dt))
    n = int(math.ceil(settle * c_max / dt)) + n_tail
    t = dt * np.arange(n + 1)
    psi = integrate_ade(series, np.sin(omega * t), dt, theta)
    tt, yy = t[-n_tail:], psi[-n_tail:]
    basis = np.stack([np.sin(omega * tt), np.cos(omega * tt)], axis=1)
    (a, b), *_ = np.linalg.lstsq(basis, yy, rcond=None)
    return complex(a, b)


def transfer_study(series: PermeabilitySeries, omegas: Sequence[float], dt: float | None = None,
                   theta: float = 0.5, guard: float = 0.1, **kw) -> list[TransferRow]:
    """Measured versus predicted gain at each frequency.

    ``dt=None`` picks ``0.05 / omega`` per frequency (capped by ``min(c_j)/4``
    so every relaxation time stays resolved).

    Raises
    ------
    ResolutionError
        If ``omega * dt > guard`` for any requested frequency.
    """
    rows = []
    c_min = float(np.min(series.c))
    for w in omegas:
        w = float(w)
        step = dt
        if step is None:
            step = c_min / 4 if w == 0 else min(0.05 / w, c_min / 4)
        if w * step > guard:
            raise ResolutionError(f"omega*dt = {w * step:.3g} exceeds {guard} at omega = {w:.6g}")
        meas = steady_response(series, w, step, theta, **kw)
        expd = complex(eval_hat(series, w))
        rows.append(TransferRow(w, meas, expd, abs(meas - expd) / abs(expd)))
    return rows


# --------------------------------------------------------------------------
# ADE versus convolution
# --------------------------------------------------------------------------


def collapse_psi(traj, N: int) -> np.ndarray:
    """Stack ``(v, sigma, p, sum_j Psi_j)`` over time from an ADE trajectory."""
    sl = traj.layout.slices
    out = []
    for U in traj.states:
        psi = sum(U[sl[f"psi{j}"]] for j in range(N)) if N else np.zeros(traj.layout.grid.n_psi)
        out.append(np.concatenate([U[sl["v"]], U[sl["sigma"]], U[sl["p"]], psi]))
    return np.array(out)


@dataclass
class CompareResult:
    dts: list
    max_diff: list
    orders: list

    @property
    def observed_order(self) -> float:
        return float(min(self.orders)) if self.orders else float("nan")

    def to_dict(self) -> dict:
        return {"dt": self.dts, "max_diff": self.max_diff, "orders": self.orders,
                "observed_order": self.observed_order}


def compare_study(params: MaterialParams, series: PermeabilitySeries | None, grid: Grid, T: float,
                  dts: Sequence[float], forcing: Forcing, theta: float = 1.0) -> CompareResult:
    """Max-over-time weighted L2 gap between ADE and convolution runs per ``dt``.

    Orders are computed from consecutive gaps and the ``dt`` ratios.
    """
    if len(dts) < 2:
        raise ValueError("at least 2 time steps are required")
    ops = build_ops(grid)
    law = assemble_material_law(params, series, grid.d)
    N = 0 if series is None else series.N
    diffs = []
    for dt in dts:
        cfg = SolverConfig(dt=dt, T=T, theta=theta)
        ta = run(assemble_system(law, ops, cfg), cfg, forcing, keep_states=True)
        tc = run_convolution(params, series, grid, cfg, forcing, keep_states=True, ops=ops)
        gap = collapse_psi(ta, N) - np.array(tc.states)
        diffs.append(float(np.sqrt(np.max(np.sum(tc.weights * gap**2, axis=1)))))
    orders = [math.log(diffs[k] / diffs[k + 1]) / math.log(dts[k] / dts[k + 1]) for k in range(len(dts) - 1)]
    return CompareResult(list(map(float, dts)), diffs, orders)
