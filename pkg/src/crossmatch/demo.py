"""A reproducible 18-outcome, two-subgroup paired-difference data set for demonstrations."""

from __future__ import annotations

import numpy as np

DEMO_OUTCOMES = (
    "cesd",
    "cesd_depressed_affect",
    "cesd_low_positive_affect",
    "cesd_somatic",
    "cesd_interpersonal",
    "pwb_total",
    "pwb_autonomy",
    "pwb_environmental_mastery",
    "pwb_personal_growth",
    "pwb_positive_relations",
    "pwb_purpose_in_life",
    "pwb_self_acceptance",
    "pcs12",
    "smoking_packs",
    "drinking_days",
    "at_risk_drinker",
    "possible_dependence",
    "poverty_pct",
)

# Standardized per-pair effects; most outcomes are null.
DEMO_EFFECTS = {
    "cesd": (0.25, 0.2),
    "cesd_depressed_affect": (0.2, 0.22),
    "pwb_total": (-0.18, -0.15),
    "pwb_self_acceptance": (-0.2, 0.0),
    "poverty_pct": (0.0, -0.25),
}
DEMO_SUBGROUPS = (("catholic", 220), ("non_catholic", 310))


def demo_differences(seed: int = 2022) -> dict:
    """``{subgroup: {outcome: differences}}`` with normal noise around the demo effects."""
    rng = np.random.default_rng(seed)
    data = {}
    for j, (name, n_pairs) in enumerate(DEMO_SUBGROUPS):
        data[name] = {
            k: np.round(rng.normal(DEMO_EFFECTS.get(k, (0.0, 0.0))[j], 1.0, size=n_pairs), 4)
            for k in DEMO_OUTCOMES
        }
    return data
