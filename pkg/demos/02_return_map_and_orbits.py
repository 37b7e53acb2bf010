"""Return map on the neck annulus, and the closed geodesics it produces.

A geodesic leaving the neck at ``eta = -cos(beta)`` comes back shifted by
``f(eta)``.  When ``f(eta) = L p / q`` the orbit closes after ``q`` returns.
"""
from __future__ import annotations

from fractions import Fraction

from revolution_geodesics.orbit_catalog import catalog, closed_geodesic
from revolution_geodesics.profile import build_model_profile
from revolution_geodesics.return_map import return_data_flow, solve_eta

profile = build_model_profile()
L = profile.circumference

for eta in (-0.9, -0.5, -0.1, 0.1, 0.5):
    d = return_data_flow(profile, eta)
    print(f"eta = {eta:+.1f}: f/L = {d.f / L:+.4f}, return time = {d.tau:.4f}")

eta = solve_eta(profile, Fraction(1, 2))
print(f"\nf(eta) = L/2 at eta = {eta:.10f}")

orbit = closed_geodesic(profile, 1, 2)
print(f"(1,2) orbit: length {orbit.length:.6f}, closes to {orbit.closure_residual:.1e}, "
      f"winds {orbit.winding_total} times, lift class {orbit.homology.as_tuple()}")

cat = catalog(profile, 0, 1, 6, method="quadrature")
print(f"\n{len(cat.records)} orbits with q <= 6; shortest five:")
for r in sorted(cat.records, key=lambda r: r.length)[:5]:
    print(f"  (p, q) = ({r.p}, {r.q})  length {r.length:8.4f}  satellite {r.satellite}")
