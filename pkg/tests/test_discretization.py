import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from biotallard.discretization import build_grid, build_ops, export_triplets
from biotallard.errors import InvalidExtent


@pytest.mark.parametrize(
    "args",
    [(3, [1, 1, 1], [4, 4, 4]), (1, [1.0, 1.0], [4]), (1, [-1.0], [4]), (2, [1.0, 1.0], [4, 1]), (1, [0.0], [4])],
)
def test_invalid_grids(args):
    with pytest.raises(InvalidExtent):
        build_grid(*args)


def test_counts_2d():
    g = build_grid(2, [1.0, 1.0], [4, 4])
    assert g.n_centers == 16
    assert g.n_v == 3 * 4 + 4 * 3
    assert g.n_psi == 5 * 4 + 4 * 5
    assert g.sigma_sizes == (16, 16, 25)
    assert set(g.staggering()) == {"p", "sigma", "v", "psi"}


def test_coordinates():
    g = build_grid(2, [2.0, 1.0], [4, 2])
    assert np.allclose(g.centers()[0], [0.25, 0.25])
    assert np.allclose(g.faces(0)[:, 0].reshape(5, 2)[:, 0], np.linspace(0, 2, 5))
    assert g.faces(1, interior=True).shape == (4, 2)
    assert np.allclose(g.nodes()[-1], [2.0, 1.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 2), st.integers(2, 9), st.integers(2, 9), st.floats(0.3, 3.0), st.integers(0, 2**32 - 1))
def test_adjoint_pairs(d, n0, n1, L, seed):
    g = build_grid(d, [L, 1.0][:d], [n0, n1][:d])
    o = build_ops(g)
    rng = np.random.default_rng(seed)
    p, q = rng.standard_normal(g.n_centers), rng.standard_normal(g.n_psi)
    v, s = rng.standard_normal(g.n_v), rng.standard_normal(g.n_sigma)
    scale1 = math.sqrt(np.dot(o.w_f * (o.Gp @ p), o.Gp @ p) * np.dot(o.w_f * q, q))
    scale2 = math.sqrt(np.dot(o.w_sigma * (o.Gv @ v), o.Gv @ v) * np.dot(o.w_sigma * s, s))
    assert abs(np.dot(o.w_f * (o.Gp @ p), q) + np.dot(o.w_c * p, o.Dv @ q)) <= 1e-13 * scale1
    assert abs(np.dot(o.w_sigma * (o.Gv @ v), s) + np.dot(o.w_v * v, o.Ds @ s)) <= 1e-13 * scale2


def test_dirichlet_laplacian_eigenvalues():
    n = 24
    g = build_grid(1, [1.0], [n])
    o = build_ops(g)
    h = g.h[0]
    lam = np.sort(np.linalg.eigvals((-o.Dv @ o.Gp).toarray()).real)
    ref = np.sort((2 / h * np.sin(np.arange(1, n + 1) * np.pi * h / 2)) ** 2)
    assert np.allclose(lam, ref, rtol=1e-12)


def test_interior_restrictions():
    g = build_grid(2, [1.0, 1.0], [3, 4])
    o = build_ops(g)
    assert o.Gp_int.shape == (g.n_v, g.n_centers)
    assert o.Dv_int.shape == (g.n_centers, g.n_v)
    assert np.allclose(o.w_v, o.P.T @ o.w_f)


def test_affine_fields_exact():
    g = build_grid(2, [1.0, 1.0], [5, 6])
    o = build_ops(g)
    xc = g.centers()
    p = 2.0 * xc[:, 0] - 3.0 * xc[:, 1] + 1.0
    fx, fy = g.faces(0, True), g.faces(1, True)
    gp = o.Gp_int @ p
    assert np.allclose(gp[: len(fx)], 2.0) and np.allclose(gp[len(fx):], -3.0)
    # linear velocity vanishing on the walls only through the boundary faces it never touches
    v = np.concatenate([fx[:, 1] * 0 + 1.5 * fx[:, 0], 0.5 * fy[:, 1]])
    eps = o.Gv @ v
    nc = g.n_centers
    interior = [i for i in range(nc) if 0 < i // 6 < 4]
    assert np.allclose(eps[:nc][interior], 1.5)


def _div_error(n):
    x, y = sympy.symbols("x y")
    sxx, syy, sxy = sympy.cos(x) * sympy.exp(y), sympy.sin(x + 2 * y), sympy.cos(2 * x - y) + x * y
    divx = sympy.lambdify((x, y), sympy.diff(sxx, x) + sympy.diff(sxy, y))
    divy = sympy.lambdify((x, y), sympy.diff(sxy, x) + sympy.diff(syy, y))
    comps = [sympy.lambdify((x, y), e) for e in (sxx, syy, sxy)]
    g = build_grid(2, [1.0, 1.0], [n, n])
    o = build_ops(g)
    sig = np.concatenate([comps[k](*g.sigma_points(k).T) for k in range(3)])
    fx, fy = g.faces(0, True), g.faces(1, True)
    exact = np.concatenate([divx(*fx.T), divy(*fy.T)])
    return float(np.max(np.abs(o.Ds @ sig - exact)))


def test_stress_divergence_second_order_up_to_walls():
    errs = [_div_error(n) for n in (8, 16, 32)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) > 1.9


def test_export_triplets(tmp_path):
    g = build_grid(1, [1.0], [4])
    o = build_ops(g)
    paths = export_triplets(o, tmp_path / "ops")
    assert [p.name for p in paths] == ["Gp.txt", "Dv.txt", "Gv.txt", "Ds.txt", "P.txt"]
    rows = np.loadtxt(paths[0], comments="#")
    M = np.zeros(o.Gp.shape)
    M[rows[:, 0].astype(int), rows[:, 1].astype(int)] = rows[:, 2]
    assert np.array_equal(M, o.Gp.toarray())
