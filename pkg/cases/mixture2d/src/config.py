"""Shared paths and settings for the 2D mixture case."""
from __future__ import annotations

from pathlib import Path

CASE_DIR = Path(__file__).resolve().parents[1]
DATA_DIR = CASE_DIR / "data"
PROCESSED_DIR = DATA_DIR / "processed"
REPORTS_DIR = CASE_DIR / "reports"

SEED = 7
N_SAMPLES = 10_000
N_GUIDED = 1_000
QUICK_SAMPLES = 1_000

RELATIONS = ("vp", "subvp", "subvp11", "subvp12", "ve")
CURVES = ("cos", "exp")
# (label, method, steps); rk45 ignores steps
METHODS = (
    ("SDE 400", "sde", 400),
    ("ODE 400", "ode", 400),
    ("DDIM 50", "ddim", 50),
    ("RSDE 400", "reparam_sde", 400),
    ("RK45", "rk45", 1),
)
GUIDE_MIXES = (
    ("class 0", (1.0, 0.0)),
    ("class 1", (0.0, 1.0)),
    ("half/half", (0.5, 0.5)),
)
