r"""Theta-scheme integrator for the convolution-free first-order system.

The semi-discrete problem is

.. math::

    M_0 \dot U + (M_1 + A_h) U = G,
    \qquad U = (v, \sigma, p, \Psi_1, \dots, \Psi_N),

and one step of the theta family reads

.. math::

    \Big(\tfrac{1}{\Delta t} M_0 + \theta (M_1 + A_h)\Big) U^{n+1}
    = \Big(\tfrac{1}{\Delta t} M_0 - (1-\theta)(M_1 + A_h)\Big) U^n
      + \theta G^{n+1} + (1-\theta) G^n .

The memory terms are carried by the auxiliary fields :math:`\Psi_j`, each
obeying :math:`c_j \dot\Psi_j + \Psi_j = (\eta_k d_j / F)(f - \nabla p/\rho_f - \dot v)`
with :math:`\Psi_j(0) = 0`. The :math:`\rho_f \partial_t^2 u` term of that
equation is expressed through :math:`\dot v`, so no second time derivative
appears.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.signal import lfilter

from .discretization import DiscreteOps, Grid
from .errors import LinearSolveFailed, SingularSystem
from .material import MaterialLaw
from .permeability import PermeabilitySeries

logger = logging.getLogger(__name__)

__all__ = [
    "Layout",
    "StateVector",
    "Forcing",
    "SolverConfig",
    "SteppingOperator",
    "Trajectory",
    "Probe",
    "assemble_system",
    "global_blocks",
    "step",
    "run",
    "point_probe",
    "norm_probe",
    "ade_recursion",
    "integrate_ade",
    "weighted_stability_ratio",
    "save_state",
    "load_state",
]


# --------------------------------------------------------------------------
# state bookkeeping
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Layout:
    """Offsets of each field inside the flat state vector."""

    grid: Grid
    N: int

    @property
    def sizes(self) -> dict:
        g = self.grid
        out = {"v": g.n_v, "sigma": g.n_sigma, "p": g.n_centers}
        for j in range(self.N):
            out[f"psi{j}"] = g.n_psi
        return out

    @property
    def slices(self) -> dict:
        out, off = {}, 0
        for name, n in self.sizes.items():
            out[name] = slice(off, off + n)
            off += n
        return out

    @property
    def size(self) -> int:
        return sum(self.sizes.values())

    def describe(self) -> dict:
        loc = {"v": "interior faces", "sigma": "centers (normal), vertices (shear)", "p": "centers"}
        return {
            "dtype": "float64",
            "byteorder": "little",
            "size": self.size,
            "grid": {"d": self.grid.d, "extents": list(self.grid.extents), "cells": list(self.grid.cells)},
            "fields": [
                {"name": k, "offset": s.start, "size": s.stop - s.start, "location": loc.get(k, "all faces")}
                for k, s in self.slices.items()
            ],
        }


@dataclass
class StateVector:
    """Unknown block ``U = (v, sigma, p, Psi_1..Psi_N)`` on a grid.

    ``sigma`` is a list of physical (not Mandel) components ordered as
    :func:`biotallard.material.sym_pairs`; normal components sit at centres,
    the 2D shear component at vertices.
    """

    v: np.ndarray
    sigma: list
    p: np.ndarray
    psi: list

    @classmethod
    def zeros(cls, layout: Layout) -> "StateVector":
        return cls.from_array(np.zeros(layout.size), layout)

    @classmethod
    def from_array(cls, U: np.ndarray, layout: Layout) -> "StateVector":
        sl = layout.slices
        g = layout.grid
        return cls(
            v=U[sl["v"]].copy(),
            sigma=np.split(U[sl["sigma"]].copy(), np.cumsum(g.sigma_sizes)[:-1]),
            p=U[sl["p"]].copy(),
            psi=[U[sl[f"psi{j}"]].copy() for j in range(layout.N)],
        )

    def to_array(self) -> np.ndarray:
        parts = [self.v, *self.sigma, self.p, *self.psi]
        U = np.concatenate(parts)
        if not np.all(np.isfinite(U)):
            raise ValueError("state contains non-finite entries")
        return U

    @property
    def psi_sum(self) -> np.ndarray:
        return np.sum(self.psi, axis=0) if self.psi else None


FieldFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass
class Forcing:
    """Right-hand side data.

    ``f(t, x)`` is the body force, returning shape ``(m, d)`` for points ``x``
    of shape ``(m, d)``; it enters the velocity equation as ``rho f`` and every
    auxiliary equation as ``rho_f f``. The extra sources ``g_v`` (``(m, d)``),
    ``g_sigma`` (``(m, nsym)``), ``g_p`` (``(m,)``) and ``g_psi`` (one callable
    per term, ``(m, d)``) are added to their equations unscaled and exist for
    manufactured-solution runs. ``raw(t)`` adds an already assembled vector.
    """

    f: FieldFn | None = None
    g_v: FieldFn | None = None
    g_sigma: FieldFn | None = None
    g_p: FieldFn | None = None
    g_psi: Sequence[FieldFn] | None = None
    raw: Callable[[float], np.ndarray] | None = None

    @property
    def is_zero(self) -> bool:
        return all(x is None for x in (self.f, self.g_v, self.g_sigma, self.g_p, self.g_psi, self.raw))


def separable(profile: Callable[[np.ndarray], np.ndarray], times, values) -> FieldFn:
    """Field ``profile(x) * s(t)`` with ``s`` linearly interpolated from a table."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)

    def fn(t, x):
        return profile(x) * np.interp(t, times, values)

    return fn


@dataclass
class SolverConfig:
    dt: float
    T: float
    theta: float = 1.0
    linear_tol: float = 1e-10
    u0: np.ndarray | Callable | None = None
    v0: np.ndarray | Callable | None = None
    p0: np.ndarray | Callable | None = None
    psi0: Sequence | None = None
    blowup: float = 1e12

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.T >= self.dt * (1 - 1e-12):
            raise ValueError(f"T must be at least dt, got T={self.T}, dt={self.dt}")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0.5, 1], got {self.theta}")

    @property
    def nsteps(self) -> int:
        return int(round(self.T / self.dt))


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------


def _sigma_blocks(law: MaterialLaw, ops: DiscreteOps):
    """Compliance and stiffness acting on physical stress components.

    Normal and shear components live at different locations in 2D, so the
    stiffness must not couple them.
    """
    sl = law.slices["sigma"]
    Sm = law.M0[sl, sl]
    r = np.sqrt(ops.frob)
    S_phys = Sm * r[None, :] / r[:, None]
    C_phys = np.linalg.inv(S_phys)
    g = ops.grid
    if g.d == 2:
        if np.max(np.abs(S_phys[:2, 2])) > 1e-12 * np.max(np.abs(S_phys)):
            raise ValueError("stiffness coupling normal and shear components is not supported on the staggered grid")
        groups = [(slice(0, 2), g.n_centers), (slice(2, 3), g.n_nodes)]
    else:
        groups = [(slice(0, 1), g.n_centers)]
    S_glob = sp.block_diag([sp.kron(S_phys[k, k], sp.identity(m)) for k, m in groups], format="csr")
    C_glob = sp.block_diag([sp.kron(C_phys[k, k], sp.identity(m)) for k, m in groups], format="csr")
    return S_glob, C_glob


def global_blocks(law: MaterialLaw, ops: DiscreteOps):
    """Global sparse ``M0``, ``M1``, ``A_h`` and the diagonal mass weights."""
    g = ops.grid
    if law.d != g.d:
        raise ValueError(f"material law is {law.d}-dimensional but the grid is {g.d}-dimensional")
    N = law.N
    nv, nc, nf = g.n_v, g.n_centers, g.n_psi
    ns = g.n_sigma
    S_glob, _ = _sigma_blocks(law, ops)
    Iv, Ic, If = (sp.identity(n, format="csr") for n in (nv, nc, nf))

    nb = 3 + N
    M0 = [[None] * nb for _ in range(nb)]
    M1 = [[None] * nb for _ in range(nb)]
    A = [[None] * nb for _ in range(nb)]
    M0[0][0] = law.rho * Iv
    M0[1][1] = S_glob
    M0[2][2] = law.M0[law.slices["p"], law.slices["p"]][0, 0] * Ic
    A[0][1] = -ops.Ds
    A[0][2] = law.alpha * ops.Gp_int
    A[1][0] = -ops.Gv
    A[2][0] = law.alpha * ops.Dv_int
    for j in range(N):
        k = 3 + j
        M0[k][k] = law.a[j] * If
        M0[0][k] = law.rho_f * ops.P.T
        M0[k][0] = law.rho_f * ops.P
        M1[k][k] = law.b[j] * If
        A[2][k] = ops.Dv
        A[k][2] = ops.Gp
    # keep block shapes explicit for empty block rows
    sizes = [nv, ns, nc] + [nf] * N
    for blocks in (M0, M1, A):
        for i in range(nb):
            if blocks[i][i] is None:
                blocks[i][i] = sp.csr_matrix((sizes[i], sizes[i]))
    W = np.concatenate([ops.w_v, ops.w_sigma, ops.w_c] + [ops.w_f] * N)
    return (sp.bmat(M0, format="csr"), sp.bmat(M1, format="csr"), sp.bmat(A, format="csr"), W)


@dataclass
class SteppingOperator:
    """Factorised theta-scheme operator; single-threaded, reusable across steps."""

    M0: sp.csr_matrix
    M1: sp.csr_matrix
    A: sp.csr_matrix
    W: np.ndarray
    dt: float
    theta: float
    Lp: sp.csc_matrix
    Lm: sp.csr_matrix
    linear_tol: float = 1e-10
    layout: Layout | None = None
    ops: DiscreteOps | None = None
    law: MaterialLaw | None = None
    _lu: object = field(default=None, repr=False)

    @classmethod
    def from_matrices(cls, M0, M1, A, W, dt, theta=1.0, linear_tol=1e-10, **kw) -> "SteppingOperator":
        M0, M1, A = (sp.csr_matrix(m) for m in (M0, M1, A))
        K = M1 + A
        Lp = (M0 / dt + theta * K).tocsc()
        Lm = (M0 / dt - (1.0 - theta) * K).tocsr()
        try:
            lu = spla.splu(Lp)
        except RuntimeError as exc:
            raise SingularSystem(f"factorisation of the step operator failed: {exc}") from exc
        return cls(M0=M0, M1=M1, A=A, W=np.asarray(W, dtype=float), dt=dt, theta=theta,
                   Lp=Lp, Lm=Lm, linear_tol=linear_tol, _lu=lu, **kw)

    def energy(self, U: np.ndarray) -> float:
        """``1/2 <M0 U, U>_W``."""
        return 0.5 * float(np.dot(self.W * (self.M0 @ U), U))

    def inner(self, U: np.ndarray, V: np.ndarray) -> float:
        return float(np.dot(self.W * U, V))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x = self._lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise LinearSolveFailed("linear solve produced non-finite values")
        nr = np.linalg.norm(rhs)
        if nr > 0:
            res = np.linalg.norm(self.Lp @ x - rhs) / nr
            if res > self.linear_tol:
                raise LinearSolveFailed(f"relative residual {res:.3e} exceeds tolerance {self.linear_tol:.1e}")
        return x

    # forcing ------------------------------------------------------------

    def load(self, forcing: Forcing | None, t: float) -> np.ndarray:
        """Assemble ``G(t)`` on the grid."""
        G = np.zeros(self.Lp.shape[0])
        if forcing is None or forcing.is_zero:
            return G
        if forcing.raw is not None:
            G += np.asarray(forcing.raw(t), dtype=float)
            if all(x is None for x in (forcing.f, forcing.g_v, forcing.g_sigma, forcing.g_p, forcing.g_psi)):
                return G
        if self.layout is None:
            raise ValueError("field forcing needs a grid-backed stepping operator")
        g = self.layout.grid
        sl = self.layout.slices
        law = self.law

        def on_faces(fn, interior):
            parts = []
            for a in range(g.d):
                x = g.faces(a, interior=interior)
                parts.append(np.asarray(fn(t, x), dtype=float).reshape(len(x), g.d)[:, a])
            return np.concatenate(parts)

        if forcing.f is not None:
            G[sl["v"]] += law.rho * on_faces(forcing.f, True)
            ff = law.rho_f * on_faces(forcing.f, False)
            for j in range(self.layout.N):
                G[sl[f"psi{j}"]] += ff
        if forcing.g_v is not None:
            G[sl["v"]] += on_faces(forcing.g_v, True)
        if forcing.g_sigma is not None:
            G[sl["sigma"]] += np.concatenate([
                np.asarray(forcing.g_sigma(t, g.sigma_points(k)), dtype=float).reshape(-1, g.nsym)[:, k]
                for k in range(g.nsym)
            ])
        if forcing.g_p is not None:
            G[sl["p"]] += np.asarray(forcing.g_p(t, g.centers()), dtype=float).ravel()
        if forcing.g_psi is not None:
            for j, fn in enumerate(forcing.g_psi):
                if fn is not None:
                    G[sl[f"psi{j}"]] += on_faces(fn, False)
        return G


def assemble_system(law: MaterialLaw, ops: DiscreteOps, cfg: SolverConfig) -> SteppingOperator:
    """Build and factorise ``L+ = M0/dt + theta (M1 + A_h)`` and ``L- = M0/dt - (1-theta)(M1 + A_h)``.

    Raises
    ------
    SingularSystem
        If the pointwise ``M0`` is not positive definite, with the Schur
        diagnostics of the ``v``/``Psi`` coupling, or if factorisation fails.
    """
    lam_min = float(np.linalg.eigvalsh(law.M0)[0])
    if lam_min <= 0:
        slopes = law.a / law.rho_f**2 - 1.0 / law.rho if law.N else np.array([])
        schur = law.rho - law.rho_f**2 * float(np.sum(1.0 / law.a)) if law.N else law.rho
        raise SingularSystem(
            "M0 is not positive definite (smallest eigenvalue "
            f"{lam_min:.3e}); per-term c_j F/(d_j eta) - 1/rho = {slopes.tolist()}, "
            f"Schur complement rho - rho_f^2 sum_j 1/a_j = {schur:.3e}"
        )
    M0, M1, A, W = global_blocks(law, ops)
    return SteppingOperator.from_matrices(
        M0, M1, A, W, cfg.dt, cfg.theta, cfg.linear_tol,
        layout=Layout(ops.grid, law.N), ops=ops, law=law,
    )


def step(stepper: SteppingOperator, U_n: np.ndarray, G_n: np.ndarray, G_n1: np.ndarray) -> np.ndarray:
    """Advance one step: solve ``L+ U = L- U_n + theta G_{n+1} + (1-theta) G_n``."""
    th = stepper.theta
    rhs = stepper.Lm @ U_n + th * G_n1 + (1.0 - th) * G_n
    return stepper.solve(rhs)


# --------------------------------------------------------------------------
# time loop
# --------------------------------------------------------------------------


@dataclass
class Probe:
    name: str
    fn: Callable[[np.ndarray], float]


def point_probe(layout: Layout, field_name: str, index: int, name: str | None = None) -> Probe:
    sl = layout.slices[field_name]
    return Probe(name or f"{field_name}[{index}]", lambda U: float(U[sl][index]))


def norm_probe(stepper: SteppingOperator, field_name: str, name: str | None = None) -> Probe:
    sl = stepper.layout.slices[field_name]
    w = stepper.W[sl]
    return Probe(name or f"|{field_name}|", lambda U: float(np.sqrt(np.dot(w * U[sl], U[sl]))))


@dataclass
class Trajectory:
    times: np.ndarray
    energy: np.ndarray
    initial_energy: float
    records: dict
    final: np.ndarray
    layout: Layout | None = None
    states: list | None = None
    displacement: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.times)

    def to_csv(self, path) -> None:
        names = ["energy", *self.records]
        cols = [self.energy, *self.records.values()]
        with open(path, "w") as fh:
            fh.write(",".join(["t", *names]) + "\n")
            for i, t in enumerate(self.times):
                fh.write(",".join(repr(float(x)) for x in [t, *(c[i] for c in cols)]) + "\n")


def initial_state(stepper: SteppingOperator, cfg: SolverConfig) -> np.ndarray:
    """Flat initial state; ``sigma(0) = C Grad0 u0`` and ``Psi_j(0) = 0`` unless given."""
    layout, ops = stepper.layout, stepper.ops
    g = layout.grid
    sv = StateVector.zeros(layout)

    def faces_vec(value):
        if callable(value):
            return np.concatenate(
                [np.asarray(value(g.faces(a, True)), dtype=float).reshape(-1, g.d)[:, a] for a in range(g.d)]
            )
        return np.asarray(value, dtype=float)

    if cfg.v0 is not None:
        sv.v = faces_vec(cfg.v0)
    if cfg.u0 is not None:
        u0 = faces_vec(cfg.u0)
        _, C_glob = _sigma_blocks(stepper.law, ops)
        sv.sigma = np.split(C_glob @ (ops.Gv @ u0), np.cumsum(g.sigma_sizes)[:-1])
    if cfg.p0 is not None:
        sv.p = np.asarray(cfg.p0(g.centers()) if callable(cfg.p0) else cfg.p0, dtype=float).ravel()
    if cfg.psi0 is not None:
        sv.psi = [np.asarray(x, dtype=float) for x in cfg.psi0]
    return sv.to_array()


def run(stepper: SteppingOperator, cfg: SolverConfig, forcing: Forcing | None = None,
        probes: Sequence[Probe] = (), U0: np.ndarray | None = None,
        keep_states: bool = False, accumulate_u: bool = False) -> Trajectory:
    """Iterate :func:`step` over ``[0, T]`` and record probes after every step.

    ``u`` is recovered (when requested) by trapezoidal accumulation of ``v``
    starting from ``cfg.u0``.
    """
    if not np.isclose(cfg.dt, stepper.dt, rtol=1e-12, atol=0.0):
        raise ValueError(f"config dt={cfg.dt} differs from the factorised dt={stepper.dt}")
    U = initial_state(stepper, cfg) if U0 is None else np.asarray(U0, dtype=float).copy()
    n = cfg.nsteps
    dt = stepper.dt
    times = dt * np.arange(1, n + 1)
    energy = np.empty(n)
    records = {p.name: np.empty(n) for p in probes}
    states = [U.copy()] if keep_states else None
    e0 = stepper.energy(U)
    scale = max(np.linalg.norm(U), 1.0)
    u = None
    if accumulate_u and stepper.layout is not None:
        sl = stepper.layout.slices["v"]
        g = stepper.layout.grid
        if cfg.u0 is None:
            u = np.zeros(g.n_v)
        elif callable(cfg.u0):
            u = np.concatenate([np.asarray(cfg.u0(g.faces(a, True)), dtype=float).reshape(-1, g.d)[:, a]
                                for a in range(g.d)])
        else:
            u = np.asarray(cfg.u0, dtype=float).copy()
    G_prev = stepper.load(forcing, 0.0)
    for k in range(n):
        t1 = times[k]
        G_next = stepper.load(forcing, t1)
        try:
            U_new = step(stepper, U, G_prev, G_next)
        except LinearSolveFailed as exc:
            raise LinearSolveFailed(f"at t={t1:.6g}: {exc}") from exc
        if np.linalg.norm(U_new) > cfg.blowup * scale:
            raise LinearSolveFailed(f"at t={t1:.6g}: state norm exceeded blow-up threshold")
        if u is not None:
            u += 0.5 * dt * (U[sl] + U_new[sl])
        U, G_prev = U_new, G_next
        energy[k] = stepper.energy(U)
        for p in probes:
            records[p.name][k] = p.fn(U)
        if keep_states:
            states.append(U.copy())
    return Trajectory(times=times, energy=energy, initial_energy=e0, records=records, final=U,
                      layout=stepper.layout, states=states, displacement=u, weights=stepper.W)


# --------------------------------------------------------------------------
# standalone auxiliary equation
# --------------------------------------------------------------------------


def ade_recursion(c: float, gain: float, drive: np.ndarray, dt: float, theta: float, psi0=0.0) -> np.ndarray:
    """Theta-discretised ``c psi' + psi = gain * g`` for per-step averaged input.

    ``drive[n]`` is the theta-average ``theta g^{n+1} + (1-theta) g^n`` of step
    ``n``; the leading axis is time, trailing axes are independent points.
    Returns ``psi`` at ``t_0 .. t_n`` (length ``len(drive) + 1``).
    """
    drive = np.asarray(drive, dtype=float)
    a0 = c / dt + theta
    a1 = -(c / dt - (1.0 - theta))
    b = np.array([gain / a0])
    a = np.array([1.0, a1 / a0])
    psi0 = np.broadcast_to(np.asarray(psi0, dtype=float), drive.shape[1:])
    zi = (-a[1] * psi0)[None, ...]
    y, _ = lfilter(b, a, drive, axis=0, zi=zi)
    return np.concatenate([psi0[None, ...], y], axis=0)


def integrate_ade(series: PermeabilitySeries, g: np.ndarray, dt: float, theta: float = 0.5,
                  per_term: bool = False):
    """Integrate every ``c_j psi_j' + psi_j = (eta_k d_j/F) g`` from ``psi_j(0) = 0``.

    ``g`` holds samples at ``t_n = n dt``. Returns the sum over terms (and the
    individual terms when ``per_term``).
    """
    g = np.asarray(g, dtype=float)
    drive = theta * g[1:] + (1.0 - theta) * g[:-1]
    terms = [ade_recursion(c, series.prefactor * d, drive, dt, theta) for c, d in series.terms]
    total = np.sum(terms, axis=0)
    return (total, terms) if per_term else total


def weighted_stability_ratio(stepper: SteppingOperator, traj: Trajectory, forcing: Forcing, nu: float) -> float:
    """``||U||_nu / ||G||_nu`` over the run, with ``||X||_nu^2 = sum_n exp(-2 nu t_n) |X_n|_W^2 dt``.

    Compare against ``1 / c_min(nu)``; this is a monitored quantity.
    """
    if traj.states is None:
        raise ValueError("run with keep_states=True to monitor weighted norms")
    t = np.concatenate([[0.0], traj.times])
    w = np.exp(-2.0 * nu * t) * stepper.dt
    nu_U = sum(wi * stepper.inner(U, U) for wi, U in zip(w, traj.states))
    nu_G = sum(wi * stepper.inner(G, G) for wi, G in ((wi, stepper.load(forcing, ti)) for wi, ti in zip(w, t)))
    return float(np.sqrt(nu_U / nu_G)) if nu_G > 0 else float("inf")


# --------------------------------------------------------------------------
# state dumps
# --------------------------------------------------------------------------


def save_state(path, U: np.ndarray, layout: Layout) -> tuple[Path, Path]:
    """Write ``U`` as raw little-endian float64 plus a JSON layout sidecar."""
    path = Path(path)
    np.asarray(U, dtype="<f8").tofile(path)
    side = path.with_suffix(path.suffix + ".json")
    side.write_text(json.dumps(layout.describe(), indent=2))
    return path, side


def load_state(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    U = np.fromfile(path, dtype="<f8")
    if U.size != meta["size"]:
        raise ValueError(f"{path}: expected {meta['size']} values, found {U.size}")
    return U, meta
