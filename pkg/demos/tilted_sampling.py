"""
Exponential tilt of the environment
===================================

"""

import numpy as np
from mbpre import classify, estimate_Y, f1, f3, lambda_r_theta, survival_tilted, theta_spectrum

model = f3()

# lambda(theta) on a grid, log-convex in theta
spectrum = theta_spectrum(model, thetas=(0.5, 1.0, 1.5, 2.0, 3.0))
print(spectrum.thetas)
print(spectrum.lambdas)
print(spectrum.convexity_defect())

# slope of log lambda at 1 decides the regime
c = classify(model)
print(c.label, c.slope_at_one.value, c.slope_at_one.error)

# Y(n, theta) by plain averaging and under the tilt
pair = lambda_r_theta(model, 1.0)
for n in (5, 15, 30):
    d = estimate_Y(model, [1, 0], n, 20_000, 3, method="direct")
    t = estimate_Y(model, [1, 0], n, 20_000, 3, pair=pair)
    print(n, d.value, d.stderr, t.value, t.stderr)

# rare event: a single line surviving 30 generations with halving means
s = survival_tilted(f1(), [1], 30, 10_000, 1)
print(s.value, 0.5**30, s.stderr)
