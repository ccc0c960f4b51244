"""Fit echo-decay models to synthetic data and convert a diffusion rate to a phase-memory time.

Run with ``python3 demos/04_decoherence_fits.py``.
"""
import numpy as np

from zefoz import DecayModel, fit, generate, tm_from_rate

print(f"T_M for a 47.3 Hz/s diffusion rate: {tm_from_rate(47.3) * 1e3:.2f} ms")

data = generate(DecayModel.mims_quadratic(1.0, 0.082), np.linspace(2e-3, 0.16, 30), 0.01, seed=3)
for kind in ("mims_quadratic", "exponential"):
    res = fit(data.times, data.intensity, kind)
    print(f"{kind:15s} params {np.round(res.model.params, 5)}  rms {res.residual_rms:.2e}")

bi = generate(DecayModel.biexponential(0.5, 0.02, 0.5, 1.0), np.geomspace(1e-3, 0.5, 100), 0.01, seed=4)
res = fit(bi.times, bi.intensity, "biexponential")
print("biexponential", np.round(res.model.params, 4))
