"""
Frequency response of the auxiliary equations
=============================================

Driving the auxiliary equations with a unit sinusoid and fitting the settled
output gives a complex gain. It should match the permeability series at the
drive frequency, which checks the sign and scaling of every term.
"""

import numpy as np

from biotallard import PermeabilitySeries
from biotallard.harness import transfer_study

series = PermeabilitySeries(eta_k=0.5, F=5.0, terms=((0.1, 1.0), (2.0, 0.5)))
print("omega       measured                expected                rel err")
for row in transfer_study(series, np.concatenate([[0.0], np.logspace(-1, 1.5, 6)])):
    print(f"{row.omega:9.4f}  {row.measured:.6f}  {row.expected:.6f}  {row.rel_err:.1e}")
