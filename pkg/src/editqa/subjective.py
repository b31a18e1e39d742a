"""Subjective-score pipeline: per-rater standardization, observer
screening per ITU-R BT.500, and aggregation into per-case MOS.

All transformations are pure functions over immutable matrices, so
per-dimension processing can run in parallel. Determinism: identical
input bytes produce identical output bytes.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_DIMS = ("text_image_consistency", "source_target_fidelity", "overall_quality")

SCORE_MIN, SCORE_MAX = 1, 10

# BT.500 observer-rejection constants (from the standard, not tunable).
BT500_REJECT_FRACTION = 0.05
BT500_ASYMMETRY_BOUND = 0.3


class DegenerateInputError(Exception):
    pass


@dataclass
class ScoreMatrix:
    """Raw rater x case x dimension integer scores with a presence mask."""

    raters: list[str]
    cases: list[str]
    dims: list[str]
    scores: np.ndarray  # float array, shape (R, C, D)
    mask: np.ndarray    # bool array, same shape; True = present

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        expected = (len(self.raters), len(self.cases), len(self.dims))
        if self.scores.shape != expected or self.mask.shape != expected:
            raise ValueError(
                f"shape mismatch: scores {self.scores.shape}, mask "
                f"{self.mask.shape}, axes {expected}"
            )
        if len(set(self.raters)) != len(self.raters):
            raise ValueError("duplicate rater ids")
        if len(set(self.cases)) != len(self.cases):
            raise ValueError("duplicate case ids")
        present = self.scores[self.mask]
        if present.size:
            if not np.all(present == np.round(present)):
                raise ValueError("present scores must be integers")
            if present.min() < SCORE_MIN or present.max() > SCORE_MAX:
                raise ValueError(
                    f"scores out of [{SCORE_MIN},{SCORE_MAX}] range"
                )


@dataclass
class ZScoreMatrix:
    raters: list[str]
    cases: list[str]
    dims: list[str]
    values: np.ndarray  # float, (R, C, D)
    mask: np.ndarray
    # (mean, std) per rater per dim, shape (R, D, 2)
    per_rater_stats: np.ndarray
    degenerate_raters: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class ScreeningReport:
    """Per-rater P/Q counts and the rejection decision."""

    rows: list[dict]  # rater_id, P, Q, N, pq_ratio, asymmetry, rejected
    kept: list[str]
    rejected: list[str]


@dataclass
class MOSTable:
    cases: list[str]
    dims: list[str]
    values: np.ndarray     # (C, D), NaN where undefined
    n_raters_used: np.ndarray  # (C, D) ints
    screening: ScreeningReport | None = None
    undefined_cases: list[tuple[str, str]] = field(default_factory=list)


def zscore_normalize(sm: ScoreMatrix) -> ZScoreMatrix:
    """Standardize each rater's scores per dimension to zero mean, unit
    sample std over that rater's present entries.

    A rater with zero spread in a dimension is flagged as degenerate and
    gets zeros there instead of a division by zero.
    """
    R, C, D = sm.scores.shape
    values = np.zeros_like(sm.scores)
    stats = np.zeros((R, D, 2))
    degenerate: list[tuple[str, str]] = []
    for r in range(R):
        for d in range(D):
            m = sm.mask[r, :, d]
            xs = sm.scores[r, m, d]
            if xs.size < 2:
                raise DegenerateInputError(
                    f"rater {sm.raters[r]!r} has fewer than 2 scores in "
                    f"dim {sm.dims[d]!r}"
                )
            mu = xs.mean()
            sigma = xs.std(ddof=1)
            stats[r, d] = (mu, sigma)
            if sigma == 0.0:
                degenerate.append((sm.raters[r], sm.dims[d]))
                values[r, m, d] = 0.0
            else:
                values[r, m, d] = (xs - mu) / sigma
    return ZScoreMatrix(
        raters=list(sm.raters),
        cases=list(sm.cases),
        dims=list(sm.dims),
        values=values,
        mask=sm.mask.copy(),
        per_rater_stats=stats,
        degenerate_raters=degenerate,
    )


def _kurtosis(xs: np.ndarray) -> float:
    """Pearson kurtosis beta2 = m4 / m2^2 over population moments."""
    mu = xs.mean()
    m2 = ((xs - mu) ** 2).mean()
    if m2 == 0.0:
        return 0.0
    m4 = ((xs - mu) ** 4).mean()
    return float(m4 / m2**2)


def bt500_screen(
    zm: ZScoreMatrix,
) -> tuple[list[str], list[str], ScreeningReport]:
    """ITU-R BT.500 observer screening on the normalized matrix.

    For every (case, dim) column the panel mean, sample std, and kurtosis
    are computed; kurtosis in [2, 4] selects 2*sigma bounds, otherwise
    sqrt(20)*sigma. Per rater, P counts scores strictly above the upper
    bound and Q strictly below the lower bound. A rater is rejected iff
    (P+Q)/N > 0.05 and |P-Q|/(P+Q) < 0.3.
    """
    R, C, D = zm.values.shape
    if R < 2:
        raise DegenerateInputError("screening needs at least 2 raters")
    P = np.zeros(R, dtype=int)
    Q = np.zeros(R, dtype=int)
    N = zm.mask.reshape(R, -1).sum(axis=1)
    for c in range(C):
        for d in range(D):
            m = zm.mask[:, c, d]
            xs = zm.values[m, c, d]
            if xs.size < 2:
                continue
            mu = xs.mean()
            sigma = xs.std(ddof=1)
            beta2 = _kurtosis(xs)
            factor = 2.0 if 2.0 <= beta2 <= 4.0 else np.sqrt(20.0)
            hi = mu + factor * sigma
            lo = mu - factor * sigma
            idx = np.flatnonzero(m)
            P[idx] += zm.values[idx, c, d] > hi
            Q[idx] += zm.values[idx, c, d] < lo

    rows = []
    kept, rejected = [], []
    for r in range(R):
        pq = int(P[r] + Q[r])
        pq_ratio = pq / N[r] if N[r] else 0.0
        asym = abs(int(P[r]) - int(Q[r])) / pq if pq else 1.0
        reject = pq_ratio > BT500_REJECT_FRACTION and asym < BT500_ASYMMETRY_BOUND
        rows.append(
            {
                "rater_id": zm.raters[r],
                "P": int(P[r]),
                "Q": int(Q[r]),
                "N": int(N[r]),
                "pq_ratio": pq_ratio,
                "asymmetry": asym,
                "rejected": reject,
            }
        )
        (rejected if reject else kept).append(zm.raters[r])
    report = ScreeningReport(rows=rows, kept=kept, rejected=rejected)
    return kept, rejected, report


def aggregate_mos(
    zm: ZScoreMatrix,
    kept: list[str],
    screening: ScreeningReport | None = None,
) -> MOSTable:
    """Per-case, per-dim arithmetic mean over kept raters' z-scores."""
    if not kept:
        raise DegenerateInputError("no kept raters")
    keep_idx = [zm.raters.index(r) for r in sorted(kept)]
    C, D = len(zm.cases), len(zm.dims)
    values = np.full((C, D), np.nan)
    n_used = np.zeros((C, D), dtype=int)
    undefined: list[tuple[str, str]] = []
    for c in range(C):
        for d in range(D):
            m = zm.mask[keep_idx, c, d]
            xs = zm.values[keep_idx, c, d][m]
            n_used[c, d] = xs.size
            if xs.size:
                values[c, d] = xs.mean()
            else:
                undefined.append((zm.cases[c], zm.dims[d]))
    return MOSTable(
        cases=list(zm.cases),
        dims=list(zm.dims),
        values=values,
        n_raters_used=n_used,
        screening=screening,
        undefined_cases=undefined,
    )


def rescale_mos(mt: MOSTable, lo: float, hi: float) -> MOSTable:
    """Affine-map each dimension so its min lands on lo and max on hi."""
    if not hi > lo:
        raise ValueError(f"need hi > lo, got lo={lo}, hi={hi}")
    values = mt.values.copy()
    for d in range(len(mt.dims)):
        col = values[:, d]
        finite = col[np.isfinite(col)]
        if finite.size == 0:
            continue
        vmin, vmax = finite.min(), finite.max()
        if vmin == vmax:
            raise DegenerateInputError(
                f"constant MOS column {mt.dims[d]!r}, cannot rescale"
            )
        values[:, d] = lo + (col - vmin) * (hi - lo) / (vmax - vmin)
    return MOSTable(
        cases=list(mt.cases),
        dims=list(mt.dims),
        values=values,
        n_raters_used=mt.n_raters_used.copy(),
        screening=mt.screening,
        undefined_cases=list(mt.undefined_cases),
    )


def run_mos_pipeline(sm: ScoreMatrix) -> MOSTable:
    """Z-score, screen, aggregate. Screening is skipped (with a warning)
    when only one rater is present."""
    zm = zscore_normalize(sm)
    if len(sm.raters) < 2:
        logger.warning("single rater: BT.500 screening skipped")
        return aggregate_mos(zm, list(sm.raters))
    kept, _rejected, report = bt500_screen(zm)
    return aggregate_mos(zm, kept, screening=report)


# -- row formats --------------------------------------------------------

SCORE_ROW_FIELDS = ("rater_id", "case_id", "dim", "score", "timestamp")
MOS_ROW_FIELDS = ("case_id", "dim", "mos", "n_raters_used")


def score_matrix_from_rows(
    rows: list[dict], dims: list[str] | None = None
) -> ScoreMatrix:
    """Build a ScoreMatrix from (rater_id, case_id, dim, score, ts) rows."""
    raters = sorted({r["rater_id"] for r in rows})
    cases = sorted({r["case_id"] for r in rows})
    dims = dims or sorted({r["dim"] for r in rows})
    r_idx = {r: i for i, r in enumerate(raters)}
    c_idx = {c: i for i, c in enumerate(cases)}
    d_idx = {d: i for i, d in enumerate(dims)}
    scores = np.zeros((len(raters), len(cases), len(dims)))
    mask = np.zeros_like(scores, dtype=bool)
    for row in rows:
        i, j, k = r_idx[row["rater_id"]], c_idx[row["case_id"]], d_idx[row["dim"]]
        if mask[i, j, k]:
            raise ValueError(
                f"duplicate score row for ({row['rater_id']}, "
                f"{row['case_id']}, {row['dim']})"
            )
        scores[i, j, k] = float(row["score"])
        mask[i, j, k] = True
    return ScoreMatrix(raters, cases, list(dims), scores, mask)


def read_score_rows(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_score_rows(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SCORE_ROW_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in SCORE_ROW_FIELDS})


def mos_table_to_rows(mt: MOSTable) -> list[dict]:
    rows = []
    for c, case_id in enumerate(mt.cases):
        for d, dim in enumerate(mt.dims):
            if np.isfinite(mt.values[c, d]):
                rows.append(
                    {
                        "case_id": case_id,
                        "dim": dim,
                        "mos": repr(float(mt.values[c, d])),
                        "n_raters_used": int(mt.n_raters_used[c, d]),
                    }
                )
    return rows


def write_mos_table(mt: MOSTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MOS_ROW_FIELDS)
        writer.writeheader()
        writer.writerows(mos_table_to_rows(mt))


def read_mos_table(path) -> MOSTable:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    cases = sorted({r["case_id"] for r in rows})
    dims = sorted({r["dim"] for r in rows})
    c_idx = {c: i for i, c in enumerate(cases)}
    d_idx = {d: i for i, d in enumerate(dims)}
    values = np.full((len(cases), len(dims)), np.nan)
    n_used = np.zeros((len(cases), len(dims)), dtype=int)
    for row in rows:
        i, j = c_idx[row["case_id"]], d_idx[row["dim"]]
        values[i, j] = float(row["mos"])
        n_used[i, j] = int(row["n_raters_used"])
    return MOSTable(cases=cases, dims=dims, values=values, n_raters_used=n_used)


def mos_vector(mt: MOSTable, dim: str = "overall_quality") -> dict[str, float]:
    """Per-case MOS for one dimension, skipping undefined entries."""
    d = mt.dims.index(dim)
    return {
        case_id: float(mt.values[c, d])
        for c, case_id in enumerate(mt.cases)
        if np.isfinite(mt.values[c, d])
    }
