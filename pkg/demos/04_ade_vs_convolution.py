"""
Auxiliary variables versus the memory integral
==============================================

The convolution solver stores the whole history and evaluates the memory term
by quadrature, so each step costs more as time goes on. The auxiliary
formulation carries one extra field per term instead. Both are first order in
time here, so their gap should halve with the step.
"""

import time

import numpy as np

from biotallard import Forcing, MaterialParams, PermeabilitySeries, build_grid
from biotallard.harness import compare_study

params = MaterialParams(rho_s=2.5, rho_f=1.0, phi=0.3, alpha=0.8, c0=0.5, eta=0.5, alpha_inf=1.5, lame=(1.0, 0.7))
grid = build_grid(1, [1.0], [16])
forcing = Forcing(f=lambda t, x: np.sin(np.pi * x) * np.sin(3 * t))

for terms in ([(0.5, 1.0)], [(0.2, 1.0), (1.0, 0.5), (3.0, 0.3)]):
    series = PermeabilitySeries.from_material(params, terms)
    t0 = time.perf_counter()
    res = compare_study(params, series, grid, T=1.0, dts=[1 / 100, 1 / 200, 1 / 400], forcing=forcing)
    print(f"N={series.N}: gaps {['%.2e' % g for g in res.max_diff]}, "
          f"orders {['%.2f' % o for o in res.orders]} ({time.perf_counter() - t0:.1f}s)")
