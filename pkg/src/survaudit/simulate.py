"""Simulated heart-failure-like cohort with a known Cox signal.

Used by the test suite, the acceptance checks and the README walkthrough in
place of real patient data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DataTable, DatasetSchema
from .ingest import reference_schema

# log-hazard contributions of the observed features (per unit as listed)
TRUE_EFFECTS = {
    "Age": 0.03,                      # per year
    "log NT-proBNP": 0.35,            # per log pg/mL
    "log Creatinine": 0.5,
    "Sodium": -0.04,                  # per mEq/L
    "SBP": -0.01,                     # per mmHg
    "HGB": -0.12,                     # per g/dL
    "AF": 0.35,
    "BB": -0.3,
    "type=HFrEF": 0.3,
}

MISSING_RATES = {
    "HbA1C (EDTA-blood)": 0.35, "LDL Cholesterol": 0.15, "NT-proBNP": 0.3, "proBNP": 0.45,
    "SPO2": 0.1, "HIGH": 0.2, "BW": 0.1, "Glucose": 0.05,
}


@dataclass
class SimulatedCohort:
    table: DataTable        # with missing cells
    complete: DataTable     # same rows before masking
    linear_predictor: np.ndarray


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def simulate_cohort(n: int = 1000, seed: int = 0, schema: DatasetSchema | None = None,
                    missing: bool = True, follow_up: float = 3000.0, base_rate: float = 2.5e-4
                    ) -> SimulatedCohort:
    """Draw ``n`` patients; the hazard is exponential with log-linear effects ``TRUE_EFFECTS``.

    A latent severity factor drives most labs, medications and comorbidities,
    so nearly every column carries some prognostic information, as in real
    cohorts.  Censoring is administrative, uniform on (0, follow_up).
    """
    schema = schema or reference_schema()
    rng = np.random.default_rng(seed)
    z = lambda: rng.standard_normal(n)  # noqa: E731
    s = z()
    age = np.clip(66 + 12 * z() + 3 * s, 20, 100)
    gender = (rng.random(n) < 0.55).astype(int)
    high = np.clip(155 + 10 * gender + 7 * z(), 120, 200)
    bw = np.clip(60 + 0.6 * (high - 160) + 12 * z() - 2 * s, 30, 180)
    dm = (rng.random(n) < _sigmoid(-0.6 + 0.3 * s)).astype(int)
    ht = (rng.random(n) < _sigmoid(0.4 + 0.02 * (age - 66))).astype(int)
    af = (rng.random(n) < _sigmoid(-1.2 + 0.03 * (age - 66) + 0.3 * s)).astype(int)
    ckd = (rng.random(n) < _sigmoid(-1.0 + 0.9 * s)).astype(int)
    hgb = np.clip(12.5 - 0.9 * s - 0.5 * ckd + 1.4 * z(), 5, 19)
    glucose = np.clip(np.exp(4.75 + 0.25 * dm + 0.25 * z()), 40, 900)
    hba1c = np.clip(5.8 + 1.3 * dm + 0.7 * z(), 4.1, 14)
    sodium = np.clip(138 - 2.0 * s + 3 * z(), 115, 155)
    potassium = np.clip(4.3 + 0.25 * s + 0.2 * ckd + 0.45 * z(), 2.5, 7.5)
    creat = np.clip(np.exp(0.05 + 0.35 * s + 0.5 * ckd + 0.3 * z()), 0.3, 15)
    bun = np.clip(np.exp(2.9 + 0.3 * s + 0.5 * np.log(creat) + 0.3 * z()), 5, 180)
    ldl = np.clip(100 - 8 * s + 32 * z(), 25, 300)
    hr = np.clip(84 + 5 * s + 8 * af + 14 * z(), 40, 160)
    sbp = np.clip(128 - 9 * s + 4 * ht + 17 * z(), 75, 220)
    dbp = np.clip(0.45 * sbp + 15 + 8 * z(), 35, sbp - 10)
    spo2 = np.clip(96.5 - 1.0 * s + 1.5 * z(), 80, 100)
    ntpro = np.clip(np.exp(7.4 + 0.9 * s + 0.3 * af + 0.8 * z()), 20, 35000)
    pro = np.clip(ntpro * np.exp(-0.2 + 0.4 * z()), 20, 35000)
    type_latent = 0.8 * s + z()
    hftype = np.digitize(type_latent, [-0.5, 0.3])  # HFpEF, HFmrEF, HFrEF
    low_ef = hftype > 0

    def med(base, ef_shift=0.0, sev=0.0):
        return (rng.random(n) < _sigmoid(base + ef_shift * low_ef + sev * s)).astype(int)

    meds = {
        "ACEI": med(-1.0, 0.6), "ARBs": med(-0.6, 0.3), "ARNI": med(-2.5, 1.0),
        "BB": med(0.0, 1.0, -0.2), "Ivabradine": med(-3.0, 0.8), "MRA": med(-1.5, 1.0),
        "SGLT2i": med(-2.0, 0.5), "Statin": med(0.2, 0.0, 0.1), "furosemide": med(0.0, 0.3, 0.8),
        "thiazide": med(-2.0, 0.0, 0.1),
    }
    lp = (TRUE_EFFECTS["Age"] * (age - 66) + TRUE_EFFECTS["log NT-proBNP"] * (np.log(ntpro) - 7.4)
          + TRUE_EFFECTS["log Creatinine"] * np.log(creat) + TRUE_EFFECTS["Sodium"] * (sodium - 138)
          + TRUE_EFFECTS["SBP"] * (sbp - 128) + TRUE_EFFECTS["HGB"] * (hgb - 12.5)
          + TRUE_EFFECTS["AF"] * af + TRUE_EFFECTS["BB"] * meds["BB"]
          + TRUE_EFFECTS["type=HFrEF"] * (hftype == 2))
    t_event = rng.exponential(1.0 / (base_rate * np.exp(lp)))
    t_cens = rng.uniform(0, follow_up, n)
    days = np.maximum(np.ceil(np.minimum(t_event, t_cens)), 1.0)
    dead = (t_event <= t_cens).astype(int)

    values = {
        "HGB": hgb, "Glucose": glucose, "HbA1C (EDTA-blood)": hba1c, "Sodium": sodium,
        "Potassium": potassium, "Blood urea nitrogen": bun, "Creatinine": creat,
        "LDL Cholesterol": ldl, "HR": hr, "HIGH": high, "BW": bw, "SBP": sbp, "DBP": dbp,
        "SPO2": spo2, "NT-proBNP": ntpro, "proBNP": pro, "Age": age, "Gender": gender,
        **meds, "HT": ht, "DM": dm, "AF": af, "CKD": ckd, "Days": days, "dead": dead,
        "type": hftype,
    }
    # round like a hospital extract would
    for name in ("Sodium", "HR", "SBP", "DBP", "SPO2", "NT-proBNP", "proBNP", "Glucose",
                 "LDL Cholesterol", "Blood urea nitrogen"):
        values[name] = np.round(values[name])
    for name in ("HGB", "HbA1C (EDTA-blood)", "Potassium", "HIGH", "BW", "Age"):
        values[name] = np.round(values[name], 1)
    values["Creatinine"] = np.round(values["Creatinine"], 2)
    complete = DataTable(schema, {k: values[k] for k in schema.names})
    masks = {}
    if missing:
        for name, rate in MISSING_RATES.items():
            if name in schema:
                masks[name] = rng.random(n) < rate
    return SimulatedCohort(complete.replace(missing=masks), complete, lp)


__all__ = ["simulate_cohort", "SimulatedCohort", "TRUE_EFFECTS", "MISSING_RATES"]
