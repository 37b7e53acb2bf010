"""Quadratic growth: coprime pairs, the geodesic census and a twist map.

Every coprime ``(p, q)`` in the twist interval gives one closed geodesic,
so the number of orbits of length at most ``t`` grows like ``t^2``.  The
same count appears for periodic orbits of an area-preserving twist map.
"""
from __future__ import annotations

import math

import numpy as np

from revolution_geodesics.annulus_dynamics import count_orbits, find_periodic, make_map
from revolution_geodesics.counting_growth import coprime_count_series, exponent_fit, geodesic_count, totient_sum
from revolution_geodesics.orbit_catalog import catalog
from revolution_geodesics.profile import build_model_profile

t = 10 ** 4
print(f"sum of phi(n) for n <= {t}: {totient_sum(t)}  vs  3 t^2 / pi^2 = {3 * t * t / math.pi ** 2:.0f}")

ts = np.arange(100, 1001)
print(f"coprime pairs in (0,1): slope {exponent_fit(ts, coprime_count_series(0, 1, ts))[0]:.3f}")

profile = build_model_profile()
census = geodesic_count(catalog(profile, 0, 1, 40, method="quadrature"))
print(f"closed geodesics: exponent {census.exponent:.3f} over lengths {census.window[0]:.0f}..{census.window[1]:.0f}")

twist = count_orbits(make_map(0.0), (0, 1), 100)
print(f"integrable twist map: P^10 = {int(twist.counts([10])[0])}, "
      f"exponent {exponent_fit(twist.series(), window=(10, 100))[0]:.3f}")

kicked = make_map(0.05)
orbits = [o for o in find_periodic(kicked, 1, 1, shortcut=False) if not o.family]
print(f"kicked map: the (1,1) circle breaks into {len(orbits)} isolated orbits:")
for o in orbits:
    print(f"  x = {o.x:.6f}, eta = {o.eta:+.6f}, residual {o.residual:.1e}")
