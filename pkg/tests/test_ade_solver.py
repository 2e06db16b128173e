import math

import numpy as np
import pytest
import scipy.sparse as sp

from biotallard.ade_solver import (
    Forcing,
    SolverConfig,
    StateVector,
    SteppingOperator,
    ade_recursion,
    assemble_system,
    global_blocks,
    integrate_ade,
    load_state,
    norm_probe,
    point_probe,
    run,
    save_state,
    separable,
    step,
    weighted_stability_ratio,
)
from biotallard.discretization import build_grid, build_ops
from biotallard.errors import LinearSolveFailed, SingularSystem
from biotallard.harness.mms import static_balance_error
from biotallard.material import MaterialParams, assemble_material_law, c_min
from biotallard.permeability import PermeabilitySeries


def _system(params, series, d=1, cells=8, dt=0.05, T=0.5, theta=1.0):
    grid = build_grid(d, [1.0] * d, [cells] * d)
    law = assemble_material_law(params, series, d)
    cfg = SolverConfig(dt=dt, T=T, theta=theta)
    return assemble_system(law, build_ops(grid), cfg), cfg


def _pulse(d):
    def u0(x):
        r2 = np.sum((x - 0.5) ** 2, axis=1)
        return np.exp(-30 * r2)[:, None] * np.ones(d)

    return u0


@pytest.mark.parametrize("kw", [{"dt": 0.0, "T": 1.0}, {"dt": 0.1, "T": 0.01}, {"dt": 0.1, "T": 1.0, "theta": 0.4}])
def test_solver_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_layout_and_state_round_trip(params, series2):
    st, _ = _system(params, series2, d=2, cells=4)
    lay = st.layout
    assert list(lay.sizes) == ["v", "sigma", "p", "psi0", "psi1"]
    assert lay.size == 24 + 57 + 16 + 2 * 40 == st.M0.shape[0]
    U = np.arange(lay.size, dtype=float)
    sv = StateVector.from_array(U, lay)
    assert [len(s) for s in sv.sigma] == [16, 16, 25]
    assert np.array_equal(sv.to_array(), U)
    assert np.allclose(sv.psi_sum, sv.psi[0] + sv.psi[1])
    sv.p[0] = np.nan
    with pytest.raises(ValueError):
        sv.to_array()


def test_identity_step_operators():
    M0 = sp.diags([2.0, 3.0, 5.0])
    Z = sp.csr_matrix((3, 3))
    st = SteppingOperator.from_matrices(M0, Z, Z, np.ones(3), dt=1.0, theta=1.0)
    assert np.allclose(st.Lp.toarray(), M0.toarray())
    assert np.allclose(st.Lm.toarray(), M0.toarray())
    U = np.array([1.0, -2.0, 0.5])
    assert np.allclose(step(st, U, np.zeros(3), np.zeros(3)), U)


def test_singular_operator():
    Z = sp.csr_matrix((2, 2))
    with pytest.raises(SingularSystem):
        SteppingOperator.from_matrices(Z, Z, Z, np.ones(2), dt=1.0)


def test_indefinite_mass_reports_schur(params):
    c_star = 1.0 * params.eta / (params.F * params.rho)
    two = PermeabilitySeries.from_material(params, [(1.01 * c_star, 1.0), (2.02 * c_star, 2.0)])
    with pytest.raises(SingularSystem, match="Schur"):
        _system(params, two)


def test_zero_data_stays_zero(params, series2):
    st, cfg = _system(params, series2, d=2, cells=4)
    traj = run(st, cfg, None, U0=np.zeros(st.layout.size))
    assert not traj.final.any() and not traj.energy.any()


def test_record_count(params, series1):
    st, cfg = _system(params, series1, dt=0.1, T=1.0)
    with pytest.raises(ValueError, match="dt"):
        run(st, SolverConfig(dt=0.05, T=1.0))
    probes = [point_probe(st.layout, "p", 3), norm_probe(st, "v")]
    traj = run(st, cfg, None, probes)
    assert len(traj) == 10 and np.allclose(traj.times, 0.1 * np.arange(1, 11))
    assert set(traj.records) == {"p[3]", "|v|"}


@pytest.mark.parametrize("theta", [0.5, 1.0])
@pytest.mark.parametrize("d", [1, 2])
def test_energy_never_grows_without_forcing(params, series2, theta, d):
    grid = build_grid(d, [1.0] * d, [10] * d)
    law = assemble_material_law(params, series2, d)
    cfg = SolverConfig(dt=0.02, T=1.0, theta=theta, u0=_pulse(d), p0=lambda x: np.sin(np.pi * x[:, 0]))
    st = assemble_system(law, build_ops(grid), cfg)
    traj = run(st, cfg)
    e = np.concatenate([[traj.initial_energy], traj.energy])
    assert traj.initial_energy > 0
    assert np.all(np.diff(e) <= 1e-12 * e[0])


def test_operator_is_skew_and_mass_symmetric(params, series2):
    grid = build_grid(2, [1.0, 2.0], [3, 5])
    M0, M1, A, W = global_blocks(assemble_material_law(params, series2, 2), build_ops(grid))
    WA = sp.diags(W) @ A
    WM = sp.diags(W) @ M0
    assert abs(WA + WA.T).max() < 1e-12 * abs(WA).max()
    assert abs(WM - WM.T).max() < 1e-12 * abs(WM).max()
    assert np.all(M1.diagonal() >= 0)


def test_csv_and_state_dump(tmp_path, params, series1):
    st, _ = _system(params, series1, T=0.2)
    traj = run(st, SolverConfig(dt=0.05, T=0.2, u0=_pulse(1)), None, [point_probe(st.layout, "v", 2)])
    traj.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,energy,v[2]" and len(lines) == 5
    data = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 1], traj.energy)
    path, side = save_state(tmp_path / "U.bin", traj.final, st.layout)
    U, meta = load_state(path)
    assert np.array_equal(U, traj.final)
    assert [f["name"] for f in meta["fields"]] == ["v", "sigma", "p", "psi0"]
    assert meta["size"] == st.layout.size
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_state(path)


def test_linear_solve_tolerance(params, series1):
    grid = build_grid(1, [1.0], [8])
    law = assemble_material_law(params, series1, 1)
    cfg = SolverConfig(dt=0.05, T=0.1, linear_tol=1e-300, u0=_pulse(1))
    st = assemble_system(law, build_ops(grid), cfg)
    with pytest.raises(LinearSolveFailed, match="residual"):
        run(st, cfg)


def test_static_state_is_preserved(params, series2):
    assert static_balance_error(params, series2, [6], d=1) < 1e-12
    assert static_balance_error(params, series2, [4, 5], d=2) < 1e-12


def test_body_force_enters_every_auxiliary_equation(params, series2):
    st, _ = _system(params, series2, d=1, cells=4)
    G = st.load(Forcing(f=lambda t, x: np.ones_like(x)), 0.0)
    sl = st.layout.slices
    assert np.allclose(G[sl["v"]], params.rho)
    assert np.allclose(G[sl["psi0"]], params.rho_f) and np.allclose(G[sl["psi1"]], params.rho_f)
    assert not G[sl["p"]].any() and not G[sl["sigma"]].any()


def test_separable_forcing():
    fn = separable(lambda x: x[:, :1] * 2.0, [0.0, 1.0], [0.0, 4.0])
    assert np.allclose(fn(0.25, np.array([[1.0], [3.0]])), [[2.0], [6.0]])


def test_normal_shear_coupling_rejected(params):
    iso = params.tensor(2)
    A = np.diag([1.0, 0.0])
    B = 0.5 * np.array([[0.0, 1.0], [1.0, 0.0]])
    C = iso + 0.05 * (np.einsum("ij,kl->ijkl", A, B) + np.einsum("ij,kl->ijkl", B, A))
    p2 = MaterialParams(**{k: getattr(params, k) for k in ("rho_s", "rho_f", "phi", "alpha", "c0", "eta", "alpha_inf")}, C=C)
    with pytest.raises(ValueError, match="shear"):
        _system(p2, None, d=2, cells=3)


# standalone auxiliary equation ----------------------------------------------


@pytest.mark.parametrize("theta,order", [(1.0, 1.0), (0.5, 2.0)])
def test_ade_recursion_step_response(theta, order):
    # c psi' + psi = gain has psi = gain (1 - exp(-t/c)) from rest
    c, gain, T = 0.7, 1.3, 2.0
    errs = []
    for n in (50, 100, 200):
        dt = T / n
        psi = ade_recursion(c, gain, np.ones(n), dt, theta)
        errs.append(abs(psi[-1] - gain * (1 - math.exp(-T / c))))
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(rates) == pytest.approx(order, abs=0.05)


def test_ade_recursion_free_decay_and_shape():
    psi = ade_recursion(0.5, 1.0, np.zeros((40, 3)), 0.01, 0.5, psi0=np.array([1.0, 2.0, 3.0]))
    assert psi.shape == (41, 3)
    ref = np.exp(-0.4 / 0.5) * np.array([1.0, 2.0, 3.0])
    assert np.allclose(psi[-1], ref, rtol=1e-4)


def test_integrate_ade_is_additive_over_terms():
    s = PermeabilitySeries(0.8, 2.0, ((0.1, 1.0), (0.5, 0.3), (3.0, 2.0)))
    t = 0.01 * np.arange(501)
    g = np.sin(3 * t) + t
    total, terms = integrate_ade(s, g, 0.01, per_term=True)
    assert len(terms) == 3
    assert np.allclose(total, sum(integrate_ade(p, g, 0.01) for p in s.split()), rtol=1e-13, atol=1e-15)
    # static gain: constant drive settles at eta_k/F * sum d_j
    long = integrate_ade(s, np.ones(20001), 0.01)
    assert long[-1] == pytest.approx(0.8 / 2.0 * 3.3, rel=1e-9)


def test_weighted_norm_bound_is_respected(params, series1):
    grid = build_grid(1, [1.0], [8])
    law = assemble_material_law(params, series1, 1)
    nu = 2.0
    cfg = SolverConfig(dt=0.01, T=3.0, theta=1.0)
    st = assemble_system(law, build_ops(grid), cfg)
    forcing = Forcing(f=lambda t, x: np.sin(np.pi * x) * math.cos(2 * t))
    traj = run(st, cfg, forcing, keep_states=True)
    ratio = weighted_stability_ratio(st, traj, forcing, nu)
    assert 0 < ratio <= 1.0 / c_min(law, params, nu)
    with pytest.raises(ValueError):
        weighted_stability_ratio(st, run(st, cfg, forcing), forcing, nu)
