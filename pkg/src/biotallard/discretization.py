"""Staggered finite-difference grids and discretely adjoint operator pairs.

Layout (``d`` = 1 or 2, uniform spacing per axis):

* ``p`` and the normal components of ``sigma`` live at cell centres; in 2D
  the shear component lives at cell vertices (boundary vertices included),
* ``v`` components live on interior faces normal to their axis (boundary
  faces are removed: homogeneous Dirichlet),
* ``Psi_j`` components live on *all* faces normal to their axis (natural
  boundary condition).

``grad0`` (``Gp``) maps centres to all faces; the homogeneous Dirichlet value of
``p`` enters through an odd ghost cell, so a boundary face sees ``2 p / h``.
``Grad0`` (``Gv``) maps interior-face velocities to strain components on the
stress locations.
``div`` and ``Div`` are *defined* as the negative mass-weighted transposes

    Dv = -W_c^{-1} Gp^T W_f,        Ds = -W_v^{-1} Gv^T W_sigma,

which makes the adjoint relations hold to rounding error. Face weights are the
dual-cell volumes (halved on boundary faces), vertex weights are the dual-cell
volumes around vertices (halved on edges, quartered at corners), and the shear
component carries an extra factor 2 so the inner product is the Frobenius one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InvalidExtent
from .material import sym_pairs

__all__ = ["Grid", "DiscreteOps", "build_grid", "build_ops", "export_triplets"]


@dataclass(frozen=True)
class Grid:
    d: int
    extents: tuple[float, ...]
    cells: tuple[int, ...]

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.extents, self.cells))

    @property
    def n_centers(self) -> int:
        return int(np.prod(self.cells))

    @property
    def nsym(self) -> int:
        return self.d * (self.d + 1) // 2

    @property
    def n_nodes(self) -> int:
        return int(np.prod([n + 1 for n in self.cells]))

    @property
    def sigma_sizes(self) -> tuple[int, ...]:
        """Lengths of the stress components, ordered as :func:`sym_pairs`."""
        return tuple(self.n_centers if i == j else self.n_nodes for i, j in sym_pairs(self.d))

    @property
    def n_sigma(self) -> int:
        return sum(self.sigma_sizes)

    def sigma_points(self, k: int) -> np.ndarray:
        """Coordinates carrying stress component ``k``."""
        i, j = sym_pairs(self.d)[k]
        return self.centers() if i == j else self.nodes()

    def face_shape(self, axis: int, interior: bool = False) -> tuple[int, ...]:
        shape = list(self.cells)
        shape[axis] += -1 if interior else 1
        return tuple(shape)

    def n_faces(self, axis: int, interior: bool = False) -> int:
        return int(np.prod(self.face_shape(axis, interior)))

    @property
    def n_v(self) -> int:
        return sum(self.n_faces(a, interior=True) for a in range(self.d))

    @property
    def n_psi(self) -> int:
        return sum(self.n_faces(a) for a in range(self.d))

    def centers(self) -> np.ndarray:
        """Coordinates of cell centres, shape ``(n_centers, d)``."""
        axes = [(np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.h)]
        return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)

    def nodes(self) -> np.ndarray:
        """Coordinates of cell vertices, shape ``(n_nodes, d)``."""
        axes = [np.arange(n + 1) * h for n, h in zip(self.cells, self.h)]
        return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)

    def faces(self, axis: int, interior: bool = False) -> np.ndarray:
        """Coordinates of faces normal to ``axis``, shape ``(n, d)``."""
        axes = [(np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.h)]
        k = np.arange(self.cells[axis] + 1) * self.h[axis]
        axes[axis] = k[1:-1] if interior else k
        return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)

    def staggering(self) -> dict:
        return {
            "p": "centers",
            "sigma": "centers (normal), vertices (shear)",
            "v": "interior faces",
            "psi": "all faces",
        }


def build_grid(d: int, extents, cells) -> Grid:
    """Validate and build a uniform staggered grid."""
    extents = tuple(float(e) for e in np.atleast_1d(extents))
    cells = tuple(int(c) for c in np.atleast_1d(cells))
    if d not in (1, 2):
        raise InvalidExtent(f"only d = 1 or 2 is supported, got {d}")
    if len(extents) != d or len(cells) != d:
        raise InvalidExtent(f"need {d} extents and cell counts, got {extents}, {cells}")
    if any(not e > 0 for e in extents):
        raise InvalidExtent(f"extents must be positive, got {extents}")
    if any(c < 2 for c in cells):
        raise InvalidExtent(f"at least 2 cells per axis are required, got {cells}")
    return Grid(d=d, extents=extents, cells=cells)


# --------------------------------------------------------------------------
# 1D building blocks
# --------------------------------------------------------------------------


def _grad_c2f(n, h):
    """Centres -> all n+1 faces, odd ghost at both ends."""
    rows, cols, vals = [], [], []
    for k in range(1, n):
        rows += [k, k]
        cols += [k - 1, k]
        vals += [-1.0 / h, 1.0 / h]
    rows += [0, n]
    cols += [0, n - 1]
    vals += [2.0 / h, -2.0 / h]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))


def _diff_f2c(n, h):
    """Interior faces (n-1) -> centres (n), zero boundary values."""
    rows, cols, vals = [], [], []
    for i in range(n):
        if i + 1 <= n - 1:
            rows.append(i)
            cols.append(i)
            vals.append(1.0 / h)
        if i >= 1:
            rows.append(i)
            cols.append(i - 1)
            vals.append(-1.0 / h)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n - 1))


def _along(axis, op, shape_other):
    """Embed a 1D operator acting along ``axis`` into a C-ordered 2D array."""
    mats = [sp.identity(m, format="csr") for m in shape_other]
    mats.insert(axis, op)
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def _along_weights(axis, w, shape_other):
    vecs = [np.ones(m) for m in shape_other]
    vecs.insert(axis, w)
    out = vecs[0]
    for v in vecs[1:]:
        out = np.kron(out, v)
    return out


# --------------------------------------------------------------------------
# operators
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteOps:
    """Sparse discrete operators and diagonal mass weights.

    Attributes
    ----------
    Gp : grad0, centres -> all faces (``n_psi x n_c``)
    Dv : div, all faces -> centres
    Gv : Grad0, interior faces -> symmetric strain components on stress locations
    Ds : Div, stress locations -> interior faces
    P : injection of interior faces into all faces (``n_psi x n_v``)
    w_c, w_f, w_v, w_sigma : mass weights of the respective fields
    """

    grid: Grid
    Gp: sp.csr_matrix
    Dv: sp.csr_matrix
    Gv: sp.csr_matrix
    Ds: sp.csr_matrix
    P: sp.csr_matrix
    w_c: np.ndarray
    w_f: np.ndarray
    w_v: np.ndarray
    w_sigma: np.ndarray
    frob: np.ndarray = field(repr=False)

    @property
    def Gp_int(self) -> sp.csr_matrix:
        """grad0 restricted to the interior faces carrying ``v``."""
        return (self.P.T @ self.Gp).tocsr()

    @property
    def Dv_int(self) -> sp.csr_matrix:
        """div of a velocity extended by zero to the boundary faces."""
        return (self.Dv @ self.P).tocsr()


def build_ops(grid: Grid) -> DiscreteOps:
    """Assemble the staggered operators for ``grid``."""
    d, n, h = grid.d, grid.cells, grid.h
    cell_vol = float(np.prod(h))
    nc = grid.n_centers

    # grad0 / injection, one axis block at a time
    gp_blocks, p_blocks, wf_blocks = [], [], []
    for a in range(d):
        other = [n[b] for b in range(d) if b != a]
        gp_blocks.append(_along(a, _grad_c2f(n[a], h[a]), other))
        inj = sp.eye(n[a] + 1, n[a] - 1, k=-1, format="csr")
        p_blocks.append(_along(a, inj, other))
        w1 = np.full(n[a] + 1, 1.0)
        w1[[0, -1]] = 0.5
        wf_blocks.append(cell_vol * _along_weights(a, w1, other))
    Gp = sp.vstack(gp_blocks, format="csr")
    P = sp.block_diag(p_blocks, format="csr")
    w_f = np.concatenate(wf_blocks)
    w_c = np.full(nc, cell_vol)
    w_v = P.T @ w_f

    # Grad0: normal strains at centres, shear strain at vertices
    n_vint = [grid.n_faces(a, interior=True) for a in range(d)]
    w1 = []
    for a in range(d):
        w = np.ones(n[a] + 1)
        w[[0, -1]] = 0.5
        w1.append(w)
    rows, ws = [], []
    for i, j in sym_pairs(d):
        blocks = [None] * d
        if i == j:
            other = [n[b] for b in range(d) if b != i]
            blocks[i] = _along(i, _diff_f2c(n[i], h[i]), other)
            ws.append(w_c)
            m = nc
        else:
            # eps_ij = 1/2 (d_j v_i + d_i v_j); v_i is extended by its zero wall values, then
            # differenced along j onto vertices with an odd ghost across the wall
            for comp, der in ((i, j), (j, i)):
                shape = list(n)
                shape[comp] += 1
                dif = _along(der, _grad_c2f(n[der], h[der]), [shape[b] for b in range(d) if b != der])
                blocks[comp] = 0.5 * (dif @ p_blocks[comp])
            ws.append(2.0 * cell_vol * np.kron(w1[0], w1[1]))
            m = grid.n_nodes
        row = [blk if blk is not None else sp.csr_matrix((m, n_vint[a])) for a, blk in enumerate(blocks)]
        rows.append(sp.hstack(row, format="csr"))
    Gv = sp.vstack(rows, format="csr")
    frob = np.array([1.0 if i == j else 2.0 for i, j in sym_pairs(d)])
    w_sigma = np.concatenate(ws)

    Dv = (-sp.diags(1.0 / w_c) @ Gp.T @ sp.diags(w_f)).tocsr()
    Ds = (-sp.diags(1.0 / w_v) @ Gv.T @ sp.diags(w_sigma)).tocsr()
    return DiscreteOps(grid=grid, Gp=Gp, Dv=Dv, Gv=Gv, Ds=Ds, P=P,
                       w_c=w_c, w_f=w_f, w_v=w_v, w_sigma=w_sigma, frob=frob)


def export_triplets(ops: DiscreteOps, directory) -> list[Path]:
    """Write every operator as ``row col value`` text (0-based indices)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in ("Gp", "Dv", "Gv", "Ds", "P"):
        M = getattr(ops, name).tocoo()
        path = directory / f"{name}.txt"
        with open(path, "w") as fh:
            fh.write(f"# {name} shape {M.shape[0]} {M.shape[1]}\n")
            for r, c, v in zip(M.row, M.col, M.data):
                fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")
        written.append(path)
    return written
