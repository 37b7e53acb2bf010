"""Build the dumbbell profile, follow one geodesic, and watch Clairaut's integral.

Run with ``python3 demos/01_profile_and_flow.py``.
"""
from __future__ import annotations

import math

from revolution_geodesics.geodesic_flow import GeodesicState, flow
from revolution_geodesics.profile import build_model_profile, validate

profile = build_model_profile()
report = validate(profile)
print(f"profile with r_min = {profile.r_min}, M = {profile.M:.4f}: valid = {report.passed}")

# The neck sits at s = M/4.  Start there, heading 1.2 rad off the parallel.
start = GeodesicState(profile.s_min, 0.0, 1.2)
K = profile.r_min * math.cos(start.beta)
print(f"Clairaut constant K = r cos(beta) = {K:.6f}")

traj = flow(profile, start, 10 * profile.M)
print(f"after t = 10 M: drift of K = {traj.clairaut_drift:.2e}")
print(f"upward crossings of the neck: {sum(c.direction > 0 for c in traj.crossings)}")
