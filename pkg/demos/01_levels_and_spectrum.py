"""Energy levels and the two-subsite spectrum of Pr:YSO site 1 along a field ramp.

Run with ``python3 demos/01_levels_and_spectrum.py``.
"""
import numpy as np

from zefoz import build_tensors, energies, lines_at, make_spin_system, spectrum_vs_field
from zefoz.tensors import PR_YSO_SITE1

spin = make_spin_system(5)          # I = 5/2
site_a = build_tensors(**PR_YSO_SITE1)

# At zero field the quadrupole term leaves three Kramers-like doublets.
e0 = energies(spin, site_a, np.zeros(3))
print("zero-field levels (MHz):", np.round(e0, 6))
print("doublet splittings (MHz):", np.round([e0[2] - e0[0], e0[4] - e0[2]], 6))

# A field along the C2 axis (y) cannot tell the two subsites apart.
b_axis = np.array([0.0, 300.0, 0.0])
for ln in lines_at(spin, site_a, b_axis, rf_direction=(1, 0, 0), window=(5, 20)):
    print(f"  site {ln.subsite.value}  {ln.transition.lo}-{ln.transition.hi}  "
          f"{ln.frequency:9.5f} MHz  strength {ln.intensity:.3f}")

# Off-axis the lines split; track them along a ramp so identities survive crossings.
path = np.linspace([0, 0, 0], [400, 100, -120], 9)
table = spectrum_vs_field(spin, site_a, path, rf_direction=(1, 0, 0), window=(8.0, 11.0))
for r in table.rows[-6:]:
    print(f"  |B|={np.linalg.norm(r.b):6.1f} G  site {r.subsite}  {r.lo}-{r.hi}  {r.freq_mhz:.5f} MHz")
