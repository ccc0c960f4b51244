"""Find field values where a transition has zero first-order Zeeman shift.

A small box keeps this demo quick; the default box spans +-1500 G on each axis.
Run with ``python3 demos/03_critical_point_search.py``.
"""
import numpy as np

from zefoz import SearchBox, build_tensors, find_all, make_spin_system, sensitivity, subsite_transform
from zefoz.hamiltonian import family_pairs, parse_transition
from zefoz.tensors import PR_YSO_SITE1

spin = make_spin_system(5)
t = build_tensors(**PR_YSO_SITE1, convention="zyx-intrinsic")
pairs = family_pairs(spin, t, parse_transition("1/2<->3/2"))

box = SearchBox(lower=(500, 150, -400), upper=(800, 450, -150), grid_step=25.0)
points = find_all(spin, t, pairs, box)
for p in points[:5]:
    print(f"site {p.subsite.value}  B={np.round(p.b, 1)} G  {p.frequency:.4f} MHz  "
          f"{p.classification.value}  curvature {p.curvature_score:.2e} MHz/G^2")

# At a site-a critical point the C2 partner still has a large linear shift.
a = next(p for p in points if p.subsite.value == "a")
gb = sensitivity(spin, subsite_transform(t), a.b, a.transition).gradient_norm
print(f"site a |grad| {a.gradient_norm:.1e} MHz/G vs site b {gb:.1e} MHz/G")
