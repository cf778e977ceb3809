"""Generate data/riverflow.csv: a deterministic 348-month surrogate for the
Piper's Hole mean monthly flow series (Jan 1953 - Dec 1981).

The original series is not redistributed here. The surrogate keeps the
features that matter for the forecasting task: a dominant annual cycle whose
peak month drifts from year to year, a weaker semi-annual cycle, a slow
multi-year modulation, and positive right-skewed noise. Replace the CSV with
the real series (same `t,y` layout, 348 rows) to run on the original data.
"""
import numpy as np

rng = np.random.default_rng(19531981)
n = 348
t = np.arange(1, n + 1, dtype=float)
drift = 0.6 * np.sin(2 * np.pi * t / 97.0) + 0.3 * np.sin(2 * np.pi * t / 41.0 + 1.0)
annual = 14.0 * np.cos(2 * np.pi * (t - 4.0 + drift) / 12.0)
semi = 5.0 * np.cos(2 * np.pi * (t - 1.5 + 0.5 * drift) / 6.0)
slow = 4.0 * np.sin(2 * np.pi * t / 110.0)
noise = rng.gamma(shape=4.0, scale=1.5, size=n) - 6.0
y = np.maximum(30.0 + annual + semi + slow + noise, 1.0)

with open("riverflow.csv", "w") as f:
    f.write("t,y\n")
    for ti, yi in zip(t, y):
        f.write(f"{int(ti)},{yi:.3f}\n")
