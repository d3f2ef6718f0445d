from __future__ import annotations

import os

VERSION = "0.4.0"

# Numerical tolerances
STABILITY_TOL = 1e-8          # |lambda| <= 1 + tol counts as stable
LINEARITY_TOL = 1e-10         # linearity check in transfer_matrix
FD_STEP_DEFAULT = 1e-6
GRADIENT_REL_FLOOR = 1e-12    # denominators in check_gradient

# F-error windows need at least this many samples per window per trajectory
MIN_WINDOW_SAMPLES = 10

# Mesostep count uses floor(t_end / delta + slack)
STEP_COUNT_SLACK = 1e-9


# Regime query: stiffness exponent per stepper kind
# (nonintrusive needs tau << eps, artificial only tau << sqrt(eps))
REGIME_EXPONENT_BY_KIND = {
    "nonintrusive": 1.0,
    "reversible": 1.0,
    "nonautonomous": 1.0,
    "natural": 1.0,
    "artificial": 0.5,
    "sde": 1.0,
    "langevin_slow": 1.0,
    "langevin_fast": 1.0,
    "langevin_reversible_slow": 1.0,
    "langevin_reversible_fast": 1.0,
}


# Runs / output

OUTPUT_DIR_ENV = "FLAVOR_OUT"
DEFAULT_OUTPUT_DIR = os.environ.get(OUTPUT_DIR_ENV, "runs")
RUN_LOG_NAME = "runs.jsonl"

DEFAULT_BASE_SEED = 20100813
DEFAULT_SAMPLE_STRIDE = 1

# Keeps the long FPU run (5e6 mesosteps) around 40 MB of CSV
MAX_SAMPLES_PER_FILE = 250_000

DIAGNOSTICS_DEFAULT = ("energy", "slow")


# CSV column headers per output table
CSV_COLUMNS = {
    "trajectory": ["step", "t", "fast_clock"],   # + state columns u0..u{n-1}
    "energy": ["step", "t", "energy"],
    "slow": ["step", "t"],                       # + one column per observable component
    "springs": ["step", "t", "total"],           # + I_1..I_m
    "ensemble": ["t", "observable", "mean", "mean_se", "var", "var_se", "autocorr", "autocorr_se"],
    "stability": ["delta", "tau_over_eps", "tau", "spectral_radius", "stable"],
    "compare": ["metric", "observable", "window", "value"],
    "convergence": ["parameter", "error"],
}

CSV_FLOAT_FORMAT = "{:.17g}"
