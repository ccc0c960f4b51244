"""Analytic Zeeman gradient and curvature of one transition, checked against finite differences.

Run with ``python3 demos/02_zeeman_derivatives.py``.
"""
import numpy as np

from zefoz import TransitionDescriptor, build_tensors, make_spin_system, sensitivity
from zefoz.derivatives import finite_difference_gradient, finite_difference_hessian, frequency_function
from zefoz.tensors import PR_YSO_SITE1

spin = make_spin_system(5)
t = build_tensors(**PR_YSO_SITE1)
tr = TransitionDescriptor(1, 2)
b = np.array([250.0, -80.0, 140.0])

s = sensitivity(spin, t, b, tr)
f = frequency_function(spin, t, tr)
print(f"frequency {s.frequency:.6f} MHz, smallest level gap {s.min_gap:.3f} MHz")
print("gradient (MHz/G)       ", s.gradient)
print("finite-difference grad ", finite_difference_gradient(f, b))
print("max Hessian difference ", np.max(np.abs(s.hessian - finite_difference_hessian(f, b))))
print("curvature eigenvalues  ", s.hessian_eigenvalues)

# Near zero field the doublets are nearly degenerate and the result is flagged.
s0 = sensitivity(spin, t, [0.0, 0.0, 0.01], tr)
print(f"at 0.01 G: degeneracy_flag={s0.degeneracy_flag}, fallback={s0.fallback_used}")
