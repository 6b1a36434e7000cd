"""Shared paths and settings for the drumlet case."""
from __future__ import annotations

from pathlib import Path

CASE_DIR = Path(__file__).resolve().parents[1]
DATA_DIR = CASE_DIR / "data"
PROCESSED_DIR = DATA_DIR / "processed"
REPORTS_DIR = CASE_DIR / "reports"

SEED = 11
N_DATA = 4_000
EPOCHS = 300
CLF_EPOCHS = 60
QUICK_EPOCHS = 3
BATCH_SIZE = 128
HIDDEN = (128, 128, 128)

N_SAMPLES = 500
N_GUIDED = 200
N_ROUND_TRIP = 16
QUICK_SAMPLES = 50

METHODS = (
    ("SDE 400", "sde", 400),
    ("ODE 400", "ode", 400),
    ("DDIM 50", "ddim", 50),
    ("RK45", "rk45", 1),
)
ENVELOPE_SLACK = 0.10
ROUND_TRIP_TOL = 5e-2
GUIDED_PURITY_TOL = 0.90
# coordinate 0 of every drumlet is exactly zero
VARIANCE_FLOOR = 1e-12
