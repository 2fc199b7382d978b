"""Glycaemic and dosing summaries for trial evaluation.

All metrics are time-averages or extrema over a CGM trace sampled every five
minutes, so summaries are permutation-invariant.  The risk indices use the
standard symmetrizing transform f(BG) = 1.509 ((ln BG)^1.084 - 5.381) with
rl = 10 min(f, 0)^2 and rh = 10 max(f, 0)^2, averaged over the trace.
"""

import csv
from dataclasses import dataclass, fields

import numpy as np

SAMPLES_PER_DAY = 288  # 5-minute sampling

TARGET_RANGE = (70.0, 180.0)  # inclusive on both ends
MILD_HYPO = (50.0, 70.0)  # [50, 70)
SEVERE_HYPO = 50.0  # < 50
MILD_HYPER = (180.0, 250.0)  # (180, 250]
SEVERE_HYPER = 250.0  # > 250


@dataclass(frozen=True)
class GlycaemicSummary:
    """One trial's metrics, fields in report-column order."""

    bg_mean: float
    bg_min: float
    bg_max: float
    pct_target: float
    pct_mild_hypo: float
    pct_severe_hypo: float
    pct_mild_hyper: float
    pct_severe_hyper: float
    lbgi: float
    hbgi: float
    tdi: float
    tdg: float


def risk_transform(bg):
    """Symmetrized glucose risk scale; zero near 112.5 mg/dL."""
    bg = np.asarray(bg, dtype=float)
    if np.any(bg <= 0.0):
        raise ValueError("CGM values must be positive for the risk transform")
    return 1.509 * (np.log(bg) ** 1.084 - 5.381)


def summarize_trace(cgm, insulin, glucagon):
    """Summary of one trial from equal-length CGM and dose traces.

    CGM in mg/dL at 5-minute intervals, insulin in U per 5 minutes and
    glucagon in mg per 5 minutes; total daily doses divide the trace totals
    by its length in days.
    """
    cgm = np.asarray(cgm, dtype=float)
    insulin = np.asarray(insulin, dtype=float)
    glucagon = np.asarray(glucagon, dtype=float)
    if cgm.size == 0:
        raise ValueError("empty CGM trace")
    if not (cgm.shape == insulin.shape == glucagon.shape):
        raise ValueError("CGM, insulin and glucagon traces must have equal length")

    in_target = (cgm >= TARGET_RANGE[0]) & (cgm <= TARGET_RANGE[1])
    mild_hypo = (cgm >= MILD_HYPO[0]) & (cgm < MILD_HYPO[1])
    severe_hypo = cgm < SEVERE_HYPO
    mild_hyper = (cgm > MILD_HYPER[0]) & (cgm <= MILD_HYPER[1])
    severe_hyper = cgm > SEVERE_HYPER
    pct = 100.0 / cgm.size

    risk = risk_transform(cgm)
    rl = 10.0 * np.minimum(risk, 0.0) ** 2
    rh = 10.0 * np.maximum(risk, 0.0) ** 2

    days = cgm.size / SAMPLES_PER_DAY
    return GlycaemicSummary(
        bg_mean=float(cgm.mean()),
        bg_min=float(cgm.min()),
        bg_max=float(cgm.max()),
        pct_target=float(in_target.sum() * pct),
        pct_mild_hypo=float(mild_hypo.sum() * pct),
        pct_severe_hypo=float(severe_hypo.sum() * pct),
        pct_mild_hyper=float(mild_hyper.sum() * pct),
        pct_severe_hyper=float(severe_hyper.sum() * pct),
        lbgi=float(rl.mean()),
        hbgi=float(rh.mean()),
        tdi=float(insulin.sum() / days),
        tdg=float(glucagon.sum() / days),
    )


SUMMARY_COLUMNS = [f.name for f in fields(GlycaemicSummary)]


def write_summary_csv(path, rows):
    """One row per (subject, phase, algorithm) plus the summary columns."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["subject", "phase", "algorithm"] + SUMMARY_COLUMNS)
        for subject, phase, algorithm, summary in rows:
            writer.writerow(
                [subject, phase, algorithm]
                + [f"{getattr(summary, name):.6f}" for name in SUMMARY_COLUMNS]
            )
