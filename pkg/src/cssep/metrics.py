"""Scale-invariant SDR scoring with permutation-invariant assignment.

si_sdr follows the standard projection form: the target is scaled by
<x, x_hat>/||x||^2 and the score is the energy ratio of the scaled
target to the residual, in dB. Exact reconstructions score +inf and
orthogonal estimates -inf; the sentinels survive until aggregation,
where they are capped at +/-100 dB (the cap is recorded in the report
metadata, so downstream readers can tell capped cells apart).
"""

import csv
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

CAP_DB = 100.0

# Sentinels must outrank every finite score during permutation search
# without poisoning mean-based comparison, so ordering uses values
# clipped far outside any reachable finite SI-SDR.
_SEARCH_CLIP_DB = 1e6


def si_sdr(target, estimate) -> float:
    """Scale-invariant SDR of estimate against target, in dB."""
    x = np.asarray(target, dtype=np.float64)
    e = np.asarray(estimate, dtype=np.float64)
    if x.shape != e.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {e.shape}")
    px = float(np.dot(x, x))
    if px == 0.0:
        raise ValueError("si_sdr is undefined for an all-zero target")
    alpha = float(np.dot(x, e)) / px
    scaled = alpha * x
    err = scaled - e
    p_scaled = float(np.dot(scaled, scaled))
    p_err = float(np.dot(err, err))
    if p_err == 0.0:
        return math.inf
    if p_scaled == 0.0:
        return -math.inf
    return 10.0 * math.log10(p_scaled / p_err)


@dataclass(frozen=True)
class SISDRResult:
    """Best-assignment scores for one example."""

    per_channel: tuple
    permutation: tuple
    improvement: float = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_channel))


def pit_si_sdr(targets, estimates) -> SISDRResult:
    """Exhaustive best-permutation SI-SDR for C channels (C small)."""
    targets = np.asarray(targets, dtype=np.float64)
    estimates = np.asarray(estimates, dtype=np.float64)
    if targets.shape != estimates.shape or targets.ndim != 2:
        raise ValueError(f"need matching (C, T) arrays, got {targets.shape} and {estimates.shape}")
    channels = targets.shape[0]
    if channels > 4:
        raise ValueError(f"exhaustive assignment is limited to 4 channels, got {channels}")
    best = None
    for perm in itertools.permutations(range(channels)):
        vals = tuple(si_sdr(targets[c], estimates[perm[c]]) for c in range(channels))
        key = float(np.mean(np.clip(vals, -_SEARCH_CLIP_DB, _SEARCH_CLIP_DB)))
        if best is None or key > best[0]:
            best = (key, perm, vals)
    return SISDRResult(per_channel=best[2], permutation=best[1])


def si_sdr_improvement(targets, estimates, mixture) -> float:
    """Best-assignment SI-SDR minus the unprocessed-mixture SI-SDR, in dB."""
    targets = np.asarray(targets, dtype=np.float64)
    mixture = np.asarray(mixture, dtype=np.float64)
    result = pit_si_sdr(targets, estimates)
    baseline = float(np.mean([si_sdr(t, mixture) for t in targets]))
    return result.mean - baseline


@dataclass(frozen=True)
class ReportRow:
    overlap: float
    window_s: float
    hop_s: float
    n_seg: int
    mode: str
    separator: str
    count: int
    mean_sisdri_db: float
    std_sisdri_db: float

    def key(self):
        return (self.overlap, self.window_s, self.hop_s, self.n_seg, self.mode, self.separator)


CSV_COLUMNS = ["overlap", "window_s", "hop_s", "n_seg", "mode", "separator",
               "count", "mean_sisdri_db", "std_sisdri_db"]


@dataclass(frozen=True)
class EvalReport:
    rows: tuple
    metadata: dict = field(default_factory=dict)


def aggregate(examples, seed=None) -> EvalReport:
    """Group per-example SI-SDRi values and reduce to mean and sample std.

    examples is an iterable of (key, value_db) where key is a dict with
    the grouping fields (overlap, window_s, hop_s, n_seg, mode,
    separator). Values are capped at +/-100 dB on entry. Sample standard
    deviation (n-1) is used; groups of one report std 0 and are
    identifiable by count == 1.
    """
    groups = {}
    for key, value in examples:
        tup = (key["overlap"], key["window_s"], key["hop_s"],
               key["n_seg"], key["mode"], key["separator"])
        groups.setdefault(tup, []).append(float(np.clip(value, -CAP_DB, CAP_DB)))
    if not groups:
        raise ValueError("no examples to aggregate")
    rows = []
    for tup in sorted(groups):
        vals = np.asarray(groups[tup], dtype=np.float64)
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        rows.append(ReportRow(*tup, count=len(vals),
                              mean_sisdri_db=float(np.mean(vals)), std_sisdri_db=std))
    metadata = {"cap_db": CAP_DB, "std": "sample", "seed": seed}
    return EvalReport(rows=tuple(rows), metadata=metadata)


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(report: EvalReport, path, extras=None) -> None:
    """Write report rows as CSV; extras, if given, is one dict of
    additional columns per row, appended after the pinned columns."""
    extra_cols = list(extras[0].keys()) if extras else []
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS + extra_cols)
        for i, row in enumerate(report.rows):
            cells = [_cell(getattr(row, col)) for col in CSV_COLUMNS]
            if extras:
                cells += [_cell(extras[i][col]) for col in extra_cols]
            writer.writerow(cells)


def write_report_json(report: EvalReport, path, extras=None) -> None:
    rows = []
    for i, row in enumerate(report.rows):
        entry = {col: getattr(row, col) for col in CSV_COLUMNS}
        if extras:
            entry.update(extras[i])
        rows.append(entry)
    doc = {"metadata": report.metadata, "rows": rows}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
