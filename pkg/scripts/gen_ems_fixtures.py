#!/usr/bin/env python3
"""Generate the EMS workflow fixture used by the end-to-end tests.

Writes ``tests/data/ems_workflow.json``: a serialized household energy
management benchmark (battery + PV + heat pump), a CSV profile standing in
for the household time series, and one day-long episode per household and
month at hourly resolution. Output is deterministic for a given seed, so
rerunning this script leaves the checked-in fixture unchanged.
"""

from __future__ import annotations

import json
import math
import random
from pathlib import Path

SEED = 20240601
HOUSEHOLDS = ["hh-01", "hh-02"]
MONTHS = [f"{m:02d}" for m in range(1, 13)]
HOURS_PER_EPISODE = 24

OUT_PATH = Path(__file__).resolve().parent.parent / "tests" / "data" / "ems_workflow.json"

# Placeholder replaced with the real artifact id once the profile blob has
# been uploaded; artifact ids depend on the uploading account's name.
ARTIFACT_REF = "__ARTIFACT_ID__"


def profile_csv(rng: random.Random) -> str:
    lines = ["hour,load_kw,pv_kw,temp_c"]
    for hour in range(HOURS_PER_EPISODE):
        load = 0.3 + 0.5 * rng.random()
        pv = max(0.0, 3.0 * math.sin(math.pi * (hour - 6) / 12)) * rng.random()
        temp = 12.0 + 8.0 * math.sin(math.pi * (hour - 8) / 12) + rng.random()
        lines.append(f"{hour},{load:.3f},{pv:.3f},{temp:.2f}")
    return "\n".join(lines) + "\n"


def serialized_benchmark() -> str:
    env = {
        "env": "ems.household:HouseholdEnv",
        "version": 1,
        "params": {
            "battery_kwh": 10.0,
            "battery_kw": 5.0,
            "pv_peak_kw": 6.4,
            "heat_pump_kw": 2.5,
            "tariff": "dynamic-epex",
        },
        "profiles_artifact": ARTIFACT_REF,
    }
    return json.dumps(env, sort_keys=True)


def make_episode(rng: random.Random, household: str, month: str) -> dict:
    season = math.sin(math.pi * (int(month) - 1) / 11)
    soc = 0.5
    tuples = []
    for hour in range(HOURS_PER_EPISODE):
        pv = max(0.0, 3.0 * season * math.sin(math.pi * (hour - 6) / 12))
        load = 0.4 + 0.4 * rng.random()
        temp = 5.0 + 15.0 * season + 4.0 * math.sin(math.pi * (hour - 8) / 12)
        action = round(rng.uniform(-1.0, 1.0), 4)
        soc = min(1.0, max(0.0, soc + 0.1 * action + 0.02 * (pv - load)))
        reward = round(-abs(load - pv) - 0.05 * abs(action), 4)
        last = hour == HOURS_PER_EPISODE - 1
        tuples.append(
            {
                "state": [round(soc, 4), round(load, 4), round(pv, 4), round(temp, 2)],
                "action": [action],
                "reward": reward,
                "info": {"hour": hour},
                "terminated": False,
                "timeout": last,
            }
        )
    return {
        "metadata": {"household": household, "month": month, "behavior": "rule-based"},
        "tuples": tuples,
    }


def main() -> None:
    rng = random.Random(SEED)
    fixture = {
        "profile_csv": profile_csv(rng),
        "benchmark": {
            "serialized": serialized_benchmark(),
            "metadata": {
                "name": "ems-household-baseline",
                "description": "Household EMS day-ahead control task",
                "family": "ems",
            },
        },
        "episodes": [
            make_episode(rng, household, month)
            for household in HOUSEHOLDS
            for month in MONTHS
        ],
    }
    OUT_PATH.parent.mkdir(parents=True, exist_ok=True)
    OUT_PATH.write_text(json.dumps(fixture, indent=1) + "\n", "utf-8")
    n_eps = len(fixture["episodes"])
    n_tuples = sum(len(e["tuples"]) for e in fixture["episodes"])
    print(f"wrote {OUT_PATH} ({n_eps} episodes, {n_tuples} tuples)")


if __name__ == "__main__":
    main()
