"""
Method table on the skewed synthetic preset
===========================================

Runs every baseline, the online search and the oracle over five seeds and
prints the comparison table.  Takes a few seconds.
"""

import dataclasses

from gps_replay.experiment import load_config, report, run_experiment

cfg = load_config("skewed-synthetic")
methods = ["er-res", "er-ring-full", "er-hybrid", "gps", "oracle"]
results = [run_experiment(dataclasses.replace(cfg, method=m)) for m in methods]
print(report(results))

# plans chosen by the online search on each seed
for run in results[3].runs:
    print(run.seed, run.plan)
