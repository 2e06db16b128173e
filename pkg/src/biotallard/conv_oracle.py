r"""Reference solver for the memory (convolution) form of the model.

This module never introduces auxiliary variables. It stores the whole history
of the convolution operand

.. math::

    g = f - \frac{1}{\rho_f}\nabla p - \partial_t^2 u

and evaluates :math:`\Psi(t_n) = (A * g)(t_n)` by the composite trapezoidal rule,
at :math:`O(n)` cost per step. Displacement is advanced with a second-order
difference for :math:`\rho\,\partial_t^2 u` and implicit stiffness; the
pressure equation uses a theta weighting. :math:`\partial_t(A * g)` in the
momentum balance is the backward difference of consecutive quadrature values,
and the acceleration inside :math:`g` is lagged by one step (explicit), so
``dt`` is limited by the memory coupling.

With an empty kernel and ``theta = 1`` the scheme is algebraically identical to
the backward-Euler ADE integrator without auxiliary terms.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ade_solver import Forcing, Layout, SolverConfig, Trajectory, _sigma_blocks
from .discretization import DiscreteOps, Grid, build_ops
from .errors import StabilityBreach
from .material import MaterialParams, assemble_material_law
from .permeability import PermeabilitySeries, kernel

__all__ = ["HistoryBuffer", "conv_eval", "run_convolution"]


class HistoryBuffer:
    """Growing store of operand samples ``g(t_m)``, ``t_m = m dt``."""

    def __init__(self, dt: float, shape=()):
        self.dt = float(dt)
        self.shape = tuple(shape)
        self._data = np.zeros((16, *self.shape))
        self._n = 0

    def __len__(self) -> int:
        return self._n

    def append(self, g) -> None:
        if self._n == self._data.shape[0]:
            grown = np.zeros((2 * self._data.shape[0], *self.shape))
            grown[: self._n] = self._data[: self._n]
            self._data = grown
        self._data[self._n] = g
        self._n += 1

    def replace_last(self, g) -> None:
        self._data[self._n - 1] = g

    @property
    def samples(self) -> np.ndarray:
        return self._data[: self._n]

    def weights(self, n: int) -> np.ndarray:
        """Composite trapezoidal weights for samples ``0..n``."""
        w = np.full(n + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        if n == 0:
            w[:] = 0.0
        return w


def conv_eval(series: PermeabilitySeries | None, history: HistoryBuffer, n: int | None = None,
              last=None) -> np.ndarray:
    """Trapezoidal ``int_0^{t_n} A(t_n - s) g(s) ds`` over stored samples ``0..n``.

    ``last`` optionally supplies sample ``n`` in place of the stored one (a
    provisional value of the newest operand; the history is not modified).
    """
    if n is None:
        n = len(history) - 1 if last is None else len(history)
    if series is None or n <= 0:
        return np.zeros(history.shape)
    if last is None:
        g = history.samples[: n + 1]
    else:
        g = np.concatenate([history.samples[:n], np.asarray(last, dtype=float)[None, ...]], axis=0)
    lags = history.dt * np.arange(n, -1, -1)
    k = kernel(series, lags) * history.weights(n)
    return np.tensordot(k, g, axes=(0, 0))


def _faces_vec(grid: Grid, value, interior):
    if callable(value):
        return np.concatenate(
            [np.asarray(value(grid.faces(a, interior)), dtype=float).reshape(-1, grid.d)[:, a] for a in range(grid.d)]
        )
    return np.asarray(value, dtype=float)


def run_convolution(params: MaterialParams, series: PermeabilitySeries | None, grid: Grid,
                    cfg: SolverConfig, forcing: Forcing | None = None, probes=(),
                    keep_states: bool = False, ops: DiscreteOps | None = None) -> Trajectory:
    """Time-step the convolution form on ``grid``.

    Recorded states use the ADE layout with a single auxiliary slot holding
    the total memory flux ``A * g``, so fields can be diffed directly against
    an ADE trajectory (summing its ``Psi_j``).

    Raises
    ------
    StabilityBreach
        If the state norm exceeds ``cfg.blowup`` times its initial scale.
    """
    if forcing is not None and any(x is not None for x in (forcing.g_v, forcing.g_sigma, forcing.g_p, forcing.g_psi, forcing.raw)):
        raise ValueError("the convolution oracle accepts a body force only")
    ops = build_ops(grid) if ops is None else ops
    law = assemble_material_law(params, None, grid.d)
    dt, th = cfg.dt, cfg.theta
    rho, rho_f, alpha, c0 = params.rho, params.rho_f, params.alpha, params.c0
    nv, nc, nf = grid.n_v, grid.n_centers, grid.n_psi

    _, C_glob = _sigma_blocks(law, ops)
    S_glob, _ = _sigma_blocks(law, ops)
    K = (-ops.Ds @ C_glob @ ops.Gv).tocsr()
    Gp, Gpi, Dv, Dvi, P = ops.Gp, ops.Gp_int, ops.Dv, ops.Dv_int, ops.P
    A0 = kernel(series, 0.0) if series is not None else 0.0

    Iv = sp.identity(nv, format="csr")
    Ic = sp.identity(nc, format="csr")
    L = sp.bmat(
        [
            [rho / dt**2 * Iv + K, (alpha - 0.5 * A0) * Gpi],
            [th * alpha / dt * Dvi, c0 / dt * Ic - th * 0.5 * dt * A0 / rho_f * (Dv @ Gp)],
        ],
        format="csc",
    )
    lu = spla.splu(L)

    def f_at(t, interior):
        if forcing is None or forcing.f is None:
            return np.zeros(nv if interior else nf)
        return _faces_vec(grid, lambda x: forcing.f(t, x), interior)

    u = np.zeros(nv) if cfg.u0 is None else _faces_vec(grid, cfg.u0, True)
    v = np.zeros(nv) if cfg.v0 is None else _faces_vec(grid, cfg.v0, True)
    p = np.zeros(nc) if cfg.p0 is None else np.asarray(cfg.p0(grid.centers()) if callable(cfg.p0) else cfg.p0,
                                                         dtype=float).ravel()
    u_prev = u - dt * v
    a = np.zeros(nv)
    psi = np.zeros(nf)
    hist = HistoryBuffer(dt, (nf,))
    hist.append(f_at(0.0, False) - Gp @ p / rho_f - P @ a)

    layout = Layout(grid, 1)
    w_all = np.concatenate([ops.w_v, ops.w_sigma, ops.w_c, ops.w_f])

    def pack(u_, v_, p_, psi_):
        return np.concatenate([v_, C_glob @ (ops.Gv @ u_), p_, psi_])

    def energy(U):
        sl = layout.slices
        e = rho * np.dot(ops.w_v * U[sl["v"]], U[sl["v"]])
        e += np.dot(ops.w_sigma * (S_glob @ U[sl["sigma"]]), U[sl["sigma"]])
        e += c0 * np.dot(ops.w_c * U[sl["p"]], U[sl["p"]])
        return 0.5 * float(e)

    U0 = pack(u, v, p, psi)
    scale = max(np.linalg.norm(U0), 1.0)
    n_steps = cfg.nsteps
    times = dt * np.arange(1, n_steps + 1)
    energies = np.empty(n_steps)
    records = {pr.name: np.empty(n_steps) for pr in probes}
    states = [U0] if keep_states else None
    U = U0
    for n in range(n_steps):
        t1 = times[n]
        f_int, f_all = f_at(t1, True), f_at(t1, False)
        # explicit part of the provisional memory flux (lagged acceleration, p^{n+1} handled implicitly)
        psi_expl = conv_eval(series, hist, n + 1, last=f_all - P @ a)
        rhs_u = rho * f_int + rho * (2 * u - u_prev) / dt**2 - rho_f * (P.T @ (psi_expl - psi)) / dt
        rhs_p = (
            c0 / dt * p
            + th * alpha / dt * (Dvi @ u)
            - (1 - th) * alpha * (Dvi @ v)
            - th * (Dv @ psi_expl)
            - (1 - th) * (Dv @ psi)
        )
        sol = lu.solve(np.concatenate([rhs_u, rhs_p]))
        u_new, p_new = sol[:nv], sol[nv:]
        v_new = (u_new - u) / dt
        a_new = (v_new - v) / dt
        g_new = f_all - Gp @ p_new / rho_f - P @ a_new
        hist.append(g_new)
        psi_new = conv_eval(series, hist, n + 1)
        u_prev, u, v, p, a, psi = u, u_new, v_new, p_new, a_new, psi_new
        U = pack(u, v, p, psi)
        if not np.all(np.isfinite(U)) or np.linalg.norm(U) > cfg.blowup * scale:
            raise StabilityBreach(f"convolution run blew up at t={t1:.6g}", time=t1)
        energies[n] = energy(U)
        for pr in probes:
            records[pr.name][n] = pr.fn(U)
        if keep_states:
            states.append(U)
    return Trajectory(times=times, energy=energies, initial_energy=energy(U0), records=records, final=U,
                      layout=layout, states=states, displacement=u, weights=w_all)

