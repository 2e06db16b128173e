"""
Checking well-posedness before running
======================================

The report evaluates the per-term damping margin at an exponential weight
``nu0``, the coercivity constant built from it, and the range of weights for
which every margin stays positive. It also says whether the mass matrix is
positive definite, which the time integrator needs independently. The last
row is the smallest eigenvalue of the unreduced blocks; it mixes units and is
only a diagnostic.
"""

from biotallard import (
    MaterialParams,
    PermeabilitySeries,
    SolverConfig,
    assemble_material_law,
    assemble_system,
    build_grid,
    build_ops,
    check_wellposedness,
    m0_positive_definite,
)
from biotallard.errors import SingularSystem

# a sandstone-like medium saturated by water (SI units)
rock = MaterialParams(rho_s=2650.0, rho_f=1000.0, phi=0.2, alpha=0.85, c0=4e-10, eta=1e-3,
                      alpha_inf=2.0, lame=(8e9, 6e9))
series = PermeabilitySeries.from_material(rock, [(2e-4, 1e-12), (5e-3, 5e-13)])
report = check_wellposedness(rock, series, nu0=1.0, d=2)
print(report.table())

# a relaxation time that is too short for the inertia makes the mass indefinite;
# the margin still holds for small weights but the integrator will refuse it
c_star = rock.eta / (rock.F * rock.rho)
fast = PermeabilitySeries.from_material(rock, [(0.5 * c_star * 1e-12, 1e-12)])
print("fast term keeps the mass definite:", m0_positive_definite(rock, fast))
print(check_wellposedness(rock, fast, nu0=1.0).table())

try:
    assemble_system(assemble_material_law(rock, fast, 1), build_ops(build_grid(1, [1.0], [8])),
                    SolverConfig(dt=1e-4, T=1e-3))
except SingularSystem as exc:
    print("integrator:", exc)
