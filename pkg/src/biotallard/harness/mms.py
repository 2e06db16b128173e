"""Manufactured solutions and refinement studies for the ADE integrator.

Sources are obtained symbolically by substituting closed-form ``u``, ``p`` and
``Psi_j`` into every equation of the first-order system (the body force is
zero and each equation receives its own source term). Manufactured ``u`` and
``p`` must vanish on the boundary.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import sympy

from ..ade_solver import Forcing, Layout, SolverConfig, assemble_system, run
from ..discretization import build_grid, build_ops
from ..material import MaterialParams, assemble_material_law, sym_pairs
from ..permeability import PermeabilitySeries

__all__ = ["MmsCase", "ConvergenceTable", "default_case", "mms_error", "mms_study", "static_balance_error"]

X = sympy.symbols("x y")
T = sympy.Symbol("t")


@dataclass
class MmsCase:
    """Closed-form fields and the sources that make them exact solutions."""

    params: MaterialParams
    series: PermeabilitySeries
    d: int
    u: list
    p: object
    psi: list
    extents: tuple = (1.0,)
    _fns: dict = field(default=None, repr=False)

    def __post_init__(self):
        d = self.d
        if len(self.u) != d or any(len(ps) != d for ps in self.psi):
            raise ValueError("vector fields need d components")
        if len(self.psi) != self.series.N:
            raise ValueError("one auxiliary field per series term is required")
        self._fns = self._derive()

    def _derive(self):
        d, prm, law = self.d, self.params, assemble_material_law(self.params, self.series, self.d)
        x = X[:d]
        u = [sympy.sympify(c) for c in self.u]
        p = sympy.sympify(self.p)
        psi = [[sympy.sympify(c) for c in ps] for ps in self.psi]
        v = [sympy.diff(c, T) for c in u]
        eps = [[sympy.Rational(1, 2) * (sympy.diff(u[i], x[j]) + sympy.diff(u[j], x[i])) for j in range(d)]
               for i in range(d)]
        C = prm.tensor(d)
        sig = [[sum(C[i, j, k, l] * eps[k][l] for k in range(d) for l in range(d)) for j in range(d)]
               for i in range(d)]
        pairs = sym_pairs(d)

        g_v = [
            prm.rho * sympy.diff(v[i], T)
            - sum(sympy.diff(sig[i][j], x[j]) for j in range(d))
            + prm.alpha * sympy.diff(p, x[i])
            + prm.rho_f * sum(sympy.diff(ps[i], T) for ps in psi)
            for i in range(d)
        ]
        g_p = (
            prm.c0 * sympy.diff(p, T)
            + prm.alpha * sum(sympy.diff(v[i], x[i]) for i in range(d))
            + sum(sympy.diff(ps[i], x[i]) for ps in psi for i in range(d))
        )
        g_psi = [
            [law.a[j] * sympy.diff(ps[i], T) + law.b[j] * ps[i] + sympy.diff(p, x[i]) + prm.rho_f * sympy.diff(v[i], T)
             for i in range(d)]
            for j, ps in enumerate(psi)
        ]
        args = (T, *x)

        def vec(exprs):
            fs = [sympy.lambdify(args, sympy.simplify(e), "numpy") for e in exprs]

            def fn(t, pts):
                pts = np.atleast_2d(pts)
                cols = [np.broadcast_to(np.asarray(f(t, *pts.T), dtype=float), (len(pts),)) for f in fs]
                return np.stack(cols, axis=-1)

            return fn

        def scal(expr):
            f = vec([expr])
            return lambda t, pts: f(t, pts)[:, 0]

        return {
            "v": vec(v),
            "sigma": vec([sig[i][j] for i, j in pairs]),
            "p": scal(p),
            "psi": [vec(ps) for ps in psi],
            "u": vec(u),
            "g_v": vec(g_v),
            "g_p": scal(g_p),
            "g_psi": [vec(gp) for gp in g_psi],
        }

    def forcing(self) -> Forcing:
        f = self._fns
        return Forcing(g_v=f["g_v"], g_p=f["g_p"], g_psi=f["g_psi"])

    def exact(self, layout: Layout, t: float) -> np.ndarray:
        """Manufactured state sampled at the staggered locations of ``layout``."""
        g = layout.grid
        f = self._fns
        faces = lambda fn, interior: np.concatenate(  # noqa: E731
            [fn(t, g.faces(a, interior))[:, a] for a in range(g.d)]
        )
        parts = [faces(f["v"], True)]
        parts += [f["sigma"](t, g.sigma_points(k))[:, k] for k in range(g.nsym)]
        parts.append(f["p"](t, g.centers()))
        parts += [faces(fp, False) for fp in f["psi"]]
        return np.concatenate(parts)


def default_case(params: MaterialParams | None = None, series: PermeabilitySeries | None = None, d: int = 1) -> MmsCase:
    """Smooth trigonometric/polynomial case without boundary symmetries."""
    if params is None:
        params = MaterialParams(rho_s=2.5, rho_f=1.0, phi=0.3, alpha=0.8, c0=0.5, eta=0.5,
                                alpha_inf=1.5, lame=(1.0, 0.7))
    if series is None:
        series = PermeabilitySeries.from_material(params, [(0.5, 1.0)])
    x, y = X
    t = T
    if d == 1:
        u = [sympy.sin(sympy.pi * x) * (1 + x / 2) * sympy.sin(t + sympy.Rational(3, 10))]
        p = x * (1 - x) * sympy.exp(x) * sympy.cos(2 * t)
        psi = [[sympy.cos(sympy.pi * x / 2 + sympy.Rational(j + 1, 5)) * sympy.sin(t + j) + x**2 * sympy.cos(t)]
               for j in range(series.N)]
        extents = (1.0,)
    else:
        bump = sympy.sin(sympy.pi * x) * sympy.sin(sympy.pi * y)
        u = [bump * (1 + x / 2) * sympy.sin(t + sympy.Rational(3, 10)), bump * (1 - y / 3) * sympy.cos(t)]
        p = x * (1 - x) * y * (1 - y) * sympy.exp(x) * sympy.cos(2 * t)
        psi = [[sympy.cos(x + y + j) * sympy.sin(t), sympy.sin(x - y + j) * sympy.cos(t)] for j in range(series.N)]
        extents = (1.0, 1.0)
    return MmsCase(params=params, series=series, d=d, u=u, p=p, psi=psi, extents=extents)


def mms_error(case: MmsCase, cells, dt: float, T_end: float, theta: float) -> float:
    """Mass-weighted error of the full state at ``T_end``."""
    grid = build_grid(case.d, case.extents, cells)
    ops = build_ops(grid)
    law = assemble_material_law(case.params, case.series, case.d)
    cfg = SolverConfig(dt=dt, T=T_end, theta=theta)
    stepper = assemble_system(law, ops, cfg)
    U0 = case.exact(stepper.layout, 0.0)
    traj = run(stepper, cfg, case.forcing(), U0=U0)
    err = traj.final - case.exact(stepper.layout, cfg.nsteps * dt)
    return math.sqrt(stepper.inner(err, err))


@dataclass
class ConvergenceTable:
    kind: str
    theta: float
    rows: list

    @property
    def orders(self) -> list:
        return [r["order"] for r in self.rows[1:]]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["level", "h", "dt", "error", "order"])
            w.writeheader()
            for r in self.rows:
                w.writerow({k: ("" if r[k] is None else repr(r[k])) for k in w.fieldnames})


def mms_study(case: MmsCase, refinements: Sequence[tuple], T_end: float = 1.0, theta: float = 0.5,
              kind: str = "spacetime") -> ConvergenceTable:
    """Errors and observed orders over ``refinements = [(cells, dt), ...]``.

    Orders are measured against ``dt`` for ``kind="time"`` and against the
    mesh width otherwise.
    """
    if len(refinements) < 3:
        raise ValueError("at least 3 refinement levels are required")
    rows = []
    for lvl, (cells, dt) in enumerate(refinements):
        cells = tuple(np.atleast_1d(cells).tolist())
        h = max(L / n for L, n in zip(case.extents, cells))
        err = mms_error(case, cells, dt, T_end, theta)
        order = None
        if rows:
            prev = rows[-1]
            ratio = prev["dt"] / dt if kind == "time" else prev["h"] / h
            order = math.log(prev["error"] / err) / math.log(ratio)
        rows.append({"level": lvl, "h": h, "dt": dt, "error": err, "order": order})
    return ConvergenceTable(kind=kind, theta=theta, rows=rows)


def static_balance_error(params: MaterialParams, series: PermeabilitySeries, cells, d: int = 1,
                         nsteps: int = 20, theta: float = 0.5, seed: int = 0) -> float:
    """Run from a random time-independent discrete state with balancing sources.

    The sources are ``G = (M1 + A_h) U*``, so ``U*`` is an exact discrete
    steady state and the returned max error reflects rounding only.
    """
    grid = build_grid(d, [1.0] * d, cells)
    ops = build_ops(grid)
    law = assemble_material_law(params, series, d)
    cfg = SolverConfig(dt=0.1, T=0.1 * nsteps, theta=theta)
    st = assemble_system(law, ops, cfg)
    U_star = np.random.default_rng(seed).standard_normal(st.layout.size)
    G = (st.M1 + st.A) @ U_star
    traj = run(st, cfg, Forcing(raw=lambda t: G), U0=U_star, keep_states=True)
    return float(max(np.max(np.abs(U - U_star)) for U in traj.states) / np.max(np.abs(U_star)))
