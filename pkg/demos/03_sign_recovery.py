#!/usr/bin/env python3
"""
Recovering the sign of a boundary trace from its absolute value.
"""

import numpy as np

from robinspec.signs import recover_sign


x = np.linspace(0.0, 1.0, 400)

psi = np.cos(3 * np.pi * x) * (1 + x)
res = recover_sign(np.abs(psi), x)
agree = np.array_equal(res.values, psi) or np.array_equal(res.values, -psi)
print("cos(3 pi x)(1+x): exact up to global sign:", agree)
for z in res.zones:
    print(f"  {z.kind:4s} zero at s = {z.root:.5f}, slopes {z.order_left:.3f} / {z.order_right:.3f}, flip {z.flip}")

touch = (x - 0.5) ** 2 * (1 + x)
res = recover_sign(touch, x)
print("\n(x - 1/2)^2 (1+x): order", res.zones[0].order, "flip", res.zones[0].flip)
