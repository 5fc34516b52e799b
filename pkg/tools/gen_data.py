#!/usr/bin/env python3
"""Regenerate the committed package data files.

Writes src/tvwsim/data/detector_calibration.csv (the tuned detector
operating point with a Monte Carlo calibrated threshold) and
src/tvwsim/data/separation_table.csv (the illustrative power/height
separation table derived from the contour formula).

Run from the repository root:  python3 tools/gen_data.py
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from tvwsim.geodb import SeparationTable, contour_radius_m, separation_table_to_csv
from tvwsim.radio_env import PropagationConfig
from tvwsim.sensing import DetectorConfig, calibrate_threshold, save_calibration

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "src", "tvwsim", "data")

CALIBRATION_SEED = 20240817
CALIBRATION_TRIALS = 200_000


def gen_calibration():
    cfg = DetectorConfig(noise_figure_db=6.0, snapshots_per_ms=12500.0,
                         k_required=2, target_pfa=0.01, sense_duration_ms=2.0)
    calibrate_threshold(cfg, trials=CALIBRATION_TRIALS, seed=CALIBRATION_SEED)
    path = os.path.join(DATA_DIR, "detector_calibration.csv")
    save_calibration(cfg, path)
    print(f"wrote {path} (threshold {cfg.threshold_dbm:.6f} dBm, "
          f"m={cfg.n_snapshots()})")


def gen_separation_table():
    prop = PropagationConfig()
    powers = (0.0, 10.0, 20.0, 30.0)
    heights = (10.0, 30.0, 50.0)
    values = []
    for p in powers:
        base = contour_radius_m(p, -114.0, prop, freq_mhz=700.0)
        for h in heights:
            # Height enters as a mild monotone gain factor; illustrative only.
            values.append(round(base * (h / 10.0) ** 0.25, 1))
    table = SeparationTable(powers, heights, tuple(values))
    path = os.path.join(DATA_DIR, "separation_table.csv")
    separation_table_to_csv(table, path)
    print(f"wrote {path}")


if __name__ == "__main__":
    os.makedirs(DATA_DIR, exist_ok=True)
    gen_calibration()
    gen_separation_table()
