"""How the sliding-window slope filter behaves on a quantized, noisy level.

A level ramp of 2 cm per hour is sampled every 2 minutes, corrupted by
millimetre noise and rounded to the centimetre like the real sensors.  Longer
windows trade lag for smoothness; on a clean ramp every window is exact.
"""
import numpy as np

from hydromfc.signals import apply_filter, make_slope_filter, quantize_level

Ts = 120.0
slope = 0.02 / 3600.0
t = Ts * np.arange(720)
rng = np.random.default_rng(1)
clean = 10.0 + slope * t
measured = quantize_level(clean + rng.normal(0.0, 0.003, t.size))

print(f"true slope: {slope * 3600 * 100:.2f} cm/h")
for M in (2, 10, 30, 61):
    w = make_slope_filter(M, Ts)
    est = np.array([apply_filter(w, measured[k - M + 1:k + 1]) for k in range(M - 1, t.size)])
    exact = apply_filter(w, clean[:M])
    print(f"M={M:3d}  window {(M - 1) * Ts / 60:5.0f} min  clean ramp -> {exact * 3600 * 100:.4f} cm/h  "
          f"noisy: mean {est.mean() * 3600 * 100:6.2f} cm/h, std {est.std() * 3600 * 100:6.2f} cm/h")
