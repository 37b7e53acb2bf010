"""Lifts to the 3-sphere, their linking numbers, and the Morse-Bott pair.

The unit tangent bundle of the sphere is doubly covered by ``S^3``; the
binding orbits lift to the Hopf-type link checked below.  Perturbing an
``S^1``-family of closed orbits leaves two orbits whose Conley-Zehnder
indices differ by one, and their two-generator complex has the homology
of a circle.
"""
from __future__ import annotations

import math

from revolution_geodesics.cz_morsebott import (
    PerturbationData,
    assemble_model_homology,
    cz_index,
    gradient_flowlines,
    perturbed_pair,
    rotation_path,
)
from revolution_geodesics.lift_linking import core_circle, lift_satellite_model, linking_number, verify_link_table

report = verify_link_table(1024, check_refinement=False)
for (a, b), v in report.values.items():
    print(f"lk({a}, {b}) = {v:+d}")

sat = lift_satellite_model(3, 1, samples=1024)
print(f"\n(3,1) satellite links the cores {linking_number(sat, core_circle(2, 1, 1024)).value} "
      f"and {linking_number(sat, core_circle(1, 1, 1024)).value} times")

for turns in (0.5, 1.5, 2.5):
    print(f"rotation by {turns} turns: index {cz_index(rotation_path(2 * math.pi * turns))}")

pair = perturbed_pair(PerturbationData(T=1.0, delta=0.1, c=-2.0))
print(f"\nperturbed pair: mu = ({pair.mu_max}, {pair.mu_min}), "
      f"actions ({pair.action_max}, {pair.action_min}), {pair.kind_max}/{pair.kind_min}")
summary = assemble_model_homology(pair, len(gradient_flowlines(0.1)))
print(f"homology ranks by degree: {summary.degrees}")
