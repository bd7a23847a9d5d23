"""Hourly airport delay matrices from raw departure records.

Pipeline: parse departure records, bin them into an hourly average-delay
matrix per airport (cancellations charged a fixed equivalent delay), clip
per-airport outliers, standardize with training-split statistics only, and
cut contiguous train/validation/test windows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

HOUR = timedelta(hours=1)

# Equivalent delay minutes charged per cancelled flight.
DEFAULT_CANCEL_MINUTES = 180.0

# A departure recorded more than a day before its schedule is corrupt.
EARLY_DEPARTURE_BOUND_MIN = 1440.0


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class FlightRecord:
    airport: str
    scheduled: datetime
    actual: datetime | None
    cancelled: bool

    def validate(self) -> None:
        if self.cancelled and self.actual is not None:
            raise IngestError(
                f"record {self.airport}@{self.scheduled.isoformat()}: cancelled flight has an actual departure"
            )
        if self.actual is not None:
            early = (self.scheduled - self.actual).total_seconds() / 60.0
            if early > EARLY_DEPARTURE_BOUND_MIN:
                raise IngestError(
                    f"record {self.airport}@{self.scheduled.isoformat()}: departure "
                    f"{early:.0f} min before schedule exceeds the {EARLY_DEPARTURE_BOUND_MIN:.0f} min bound"
                )


@dataclass
class DelayMatrix:
    """N airports x T hours of average departure delay in minutes.

    ``mask[i, t]`` is True where at least one flight was scheduled; entries
    with no scheduled flight hold value 0 and mask False.
    """

    airports: list[str]
    start: datetime
    values: np.ndarray  # (N, T) float64 minutes
    mask: np.ndarray  # (N, T) bool

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.shape != self.mask.shape:
            raise IngestError(f"values {self.values.shape} and mask {self.mask.shape} differ")
        if self.values.shape[0] != len(self.airports):
            raise IngestError(
                f"{len(self.airports)} airports but {self.values.shape[0]} value rows"
            )

    @property
    def n_airports(self) -> int:
        return len(self.airports)

    @property
    def n_hours(self) -> int:
        return self.values.shape[1]

    def slice_hours(self, lo: int, hi: int) -> "DelayMatrix":
        return DelayMatrix(
            self.airports,
            self.start + lo * HOUR,
            self.values[:, lo:hi].copy(),
            self.mask[:, lo:hi].copy(),
        )


@dataclass(frozen=True)
class ZScoreParams:
    mean: float
    std: float

    def __post_init__(self) -> None:
        if not self.std > 0:
            raise IngestError(f"z-score std must be positive, got {self.std}")


# ---------------------------------------------------------------------------
# binning


def bin_delays(
    records: list[FlightRecord],
    airports: list[str],
    span: tuple[datetime, datetime],
    cancel_minutes: float = DEFAULT_CANCEL_MINUTES,
) -> DelayMatrix:
    """Average hourly delay per airport: (total delay + rho * cancellations) / scheduled.

    Delay per departed flight is max(0, actual - scheduled) in minutes; an
    early departure never offsets late ones. Flights are keyed to the hour
    of their *scheduled* departure. Hours without any scheduled flight get
    value 0 and mask False.
    """
    if not airports:
        raise IngestError("bin_delays: empty airport list")
    if cancel_minutes < 0:
        raise IngestError(f"bin_delays: cancel_minutes must be >= 0, got {cancel_minutes}")
    start, end = span
    n_hours = int((end - start) / HOUR)
    if n_hours <= 0:
        raise IngestError(f"bin_delays: empty span {start.isoformat()}..{end.isoformat()}")
    index = {a: i for i, a in enumerate(airports)}
    if len(index) != len(airports):
        raise IngestError("bin_delays: duplicate airport ids")

    seen: set[tuple] = set()
    dupes: list[tuple] = []
    delay_sum = np.zeros((len(airports), n_hours))
    cancels = np.zeros((len(airports), n_hours))
    scheduled = np.zeros((len(airports), n_hours))
    for rec in records:
        rec.validate()
        if rec.airport not in index:
            raise IngestError(f"bin_delays: unknown airport {rec.airport!r}")
        key = (rec.airport, rec.scheduled, rec.actual, rec.cancelled)
        if key in seen:
            dupes.append((rec.airport, rec.scheduled.isoformat()))
            continue
        seen.add(key)
        t = int((rec.scheduled - start) / HOUR)
        if not 0 <= t < n_hours:
            continue
        i = index[rec.airport]
        scheduled[i, t] += 1
        if rec.cancelled:
            cancels[i, t] += 1
        elif rec.actual is not None:
            delay_sum[i, t] += max(0.0, (rec.actual - rec.scheduled).total_seconds() / 60.0)
    if dupes:
        raise IngestError(f"bin_delays: duplicate records for keys {sorted(set(dupes))}")

    mask = scheduled > 0
    values = np.zeros_like(delay_sum)
    np.divide(delay_sum + cancel_minutes * cancels, scheduled, out=values, where=mask)
    return DelayMatrix(list(airports), start, values, mask)


# ---------------------------------------------------------------------------
# outlier clipping


def remove_outliers(m: DelayMatrix, upper_quantile: float) -> tuple[DelayMatrix, float]:
    """Clip each airport's unmasked values at its ``upper_quantile`` level.

    Returns the clipped matrix and the fraction of unmasked entries that
    were reduced. Clipping (rather than dropping hours) keeps the series
    contiguous for windowing.
    """
    if not 0.0 < upper_quantile < 1.0:
        raise IngestError(f"remove_outliers: quantile {upper_quantile} outside (0, 1)")
    values = m.values.copy()
    clipped = 0
    total = 0
    for i, airport in enumerate(m.airports):
        sel = m.mask[i]
        if not sel.any():
            raise IngestError(f"remove_outliers: airport {airport!r} has no unmasked hours")
        row = values[i, sel]
        cap = float(np.quantile(row, upper_quantile))
        above = row > cap
        clipped += int(above.sum())
        total += row.size
        row[above] = cap
        values[i, sel] = row
    out = DelayMatrix(m.airports, m.start, values, m.mask.copy())
    return out, clipped / total


# ---------------------------------------------------------------------------
# standardization


def zscore_fit(train: DelayMatrix) -> ZScoreParams:
    """Mean and population std over the unmasked entries of the training split."""
    sel = train.values[train.mask]
    if sel.size == 0:
        raise IngestError("zscore_fit: training split has no unmasked entries")
    mean = float(sel.mean())
    std = float(sel.std())  # population, ddof=0
    if std == 0.0:
        raise IngestError("zscore_fit: training data is constant (zero std)")
    return ZScoreParams(mean, std)


def zscore_apply(params: ZScoreParams, values: np.ndarray) -> np.ndarray:
    return (np.asarray(values, dtype=np.float64) - params.mean) / params.std


def zscore_invert(params: ZScoreParams, values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * params.std + params.mean


# ---------------------------------------------------------------------------
# windowing


@dataclass(frozen=True)
class SplitWindows:
    """Sample anchors per split; a sample at anchor t pairs inputs over
    hours [t-r, t] with targets over hours [t+1, t+m]."""

    r: int
    horizon: int
    bounds: tuple[int, int, int, int]  # 0, train_end, val_end, T
    train: np.ndarray  # anchor hour indices
    val: np.ndarray
    test: np.ndarray


def split_windows(
    m: DelayMatrix,
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15),
    r: int = 3,
    horizon: int = 3,
) -> SplitWindows:
    """Contiguous train/val/test split with sliding-window samples.

    No sample straddles a split boundary: a sample belongs to a segment
    only if all of hours [t-r, t+horizon] fall inside it.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise IngestError(f"split_windows: fractions {fractions} do not sum to 1")
    if r < 0 or horizon < 1:
        raise IngestError(f"split_windows: need r >= 0 and horizon >= 1, got r={r}, horizon={horizon}")
    T = m.n_hours
    min_len = r + horizon + 1
    if T < min_len:
        raise IngestError(f"split_windows: series of {T} hours shorter than minimum {min_len}")
    train_end = int(T * fractions[0])
    val_end = int(T * (fractions[0] + fractions[1]))
    segments = [(0, train_end), (train_end, val_end), (val_end, T)]
    anchors = []
    for lo, hi in segments:
        if hi - lo < min_len:
            raise IngestError(
                f"split_windows: segment [{lo},{hi}) shorter than minimum {min_len} hours"
            )
        anchors.append(np.arange(lo + r, hi - horizon, dtype=np.int64))
    return SplitWindows(
        r=r,
        horizon=horizon,
        bounds=(0, train_end, val_end, T),
        train=anchors[0],
        val=anchors[1],
        test=anchors[2],
    )


# ---------------------------------------------------------------------------
# CSV formats


def _parse_ts(text: str) -> datetime:
    t = text.strip()
    if t.endswith(("Z", "z")):
        t = t[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(t)
    except ValueError:
        raise IngestError(f"bad timestamp {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _format_ts(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


RECORD_HEADER = ["airport_id", "scheduled_utc", "actual_utc", "cancelled"]


def read_records_csv(path: str | Path) -> list[FlightRecord]:
    """Read departure records: airport_id,scheduled_utc,actual_utc,cancelled."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != RECORD_HEADER:
            raise IngestError(f"{path}: expected header {','.join(RECORD_HEADER)}")
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise IngestError(f"{path}:{ln}: expected 4 fields, got {len(row)}")
            airport, sched, actual, cancelled = (c.strip() for c in row)
            if cancelled not in ("0", "1"):
                raise IngestError(f"{path}:{ln}: cancelled must be 0 or 1, got {cancelled!r}")
            rec = FlightRecord(
                airport=airport,
                scheduled=_parse_ts(sched),
                actual=_parse_ts(actual) if actual else None,
                cancelled=cancelled == "1",
            )
            rec.validate()
            records.append(rec)
    return records


def write_delay_csv(m: DelayMatrix, path: str | Path, mask_path: str | Path | None = None) -> None:
    """Write the matrix as `time,<airport...>` rows plus a 0/1 mask sibling."""
    path = Path(path)
    if mask_path is None:
        mask_path = path.with_suffix(".mask.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", *m.airports])
        for t in range(m.n_hours):
            w.writerow([_format_ts(m.start + t * HOUR), *[repr(float(v)) for v in m.values[:, t]]])
    with open(mask_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", *m.airports])
        for t in range(m.n_hours):
            w.writerow([_format_ts(m.start + t * HOUR), *[str(int(v)) for v in m.mask[:, t]]])


def read_delay_csv(path: str | Path, mask_path: str | Path | None = None) -> DelayMatrix:
    path = Path(path)
    if mask_path is None:
        candidate = path.with_suffix(".mask.csv")
        mask_path = candidate if candidate.exists() else None
    airports, start, rows = _read_matrix_csv(path)
    values = np.array(rows, dtype=np.float64).T
    if mask_path is not None:
        m_airports, m_start, m_rows = _read_matrix_csv(mask_path)
        if m_airports != airports or m_start != start:
            raise IngestError(f"{mask_path}: mask header does not match {path}")
        mask = np.array(m_rows, dtype=np.float64).T.astype(bool)
        if mask.shape != values.shape:
            raise IngestError(f"{mask_path}: mask shape {mask.shape} != values {values.shape}")
    else:
        mask = np.ones_like(values, dtype=bool)
    return DelayMatrix(airports, start, values, mask)


def _read_matrix_csv(path: str | Path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "time" or len(header) < 2:
            raise IngestError(f"{path}: expected header time,<airport>,...")
        airports = header[1:]
        start = None
        rows = []
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(f"{path}:{ln}: expected {len(header)} fields, got {len(row)}")
            ts = _parse_ts(row[0])
            if start is None:
                start = ts
            try:
                rows.append([float(x) for x in row[1:]])
            except ValueError:
                raise IngestError(f"{path}:{ln}: non-numeric value") from None
    if start is None:
        raise IngestError(f"{path}: no data rows")
    return airports, start, rows
