"""Time-keyed joins between private aggregates and public series."""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path


class LinkageError(ValueError):
    pass


_WEEK_RE = re.compile(r"^(\d{4})-W(\d{2})$")
_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


def parse_week(bucket: str) -> tuple[int, int]:
    """``"2018-W14"`` -> ``(2018, 14)``; rejects weeks that do not exist in that ISO year."""
    m = _WEEK_RE.match(bucket) if isinstance(bucket, str) else None
    if not m:
        raise ValueError(f"unparseable ISO week {bucket!r}")
    year, week = int(m.group(1)), int(m.group(2))
    try:
        date.fromisocalendar(year, week, 1)
    except ValueError:
        raise ValueError(f"ISO week {bucket!r} does not exist") from None
    return year, week


def format_week(year: int, week: int) -> str:
    return f"{year:04d}-W{week:02d}"


def weeks_of_month(month: str) -> list[str]:
    """ISO weeks whose Thursday falls in ``month`` ("YYYY-MM")."""
    m = _MONTH_RE.match(month.strip()) if isinstance(month, str) else None
    if not m or not 1 <= int(m.group(2)) <= 12:
        raise ValueError(f"unparseable month {month!r}")
    year, mon = int(m.group(1)), int(m.group(2))
    day = date(year, mon, 1)
    day += timedelta(days=(3 - day.weekday()) % 7)  # first Thursday
    out = []
    while day.month == mon:
        iso = day.isocalendar()
        out.append(format_week(iso[0], iso[1]))
        day += timedelta(days=7)
    return out


@dataclass(frozen=True)
class TimeSeries:
    points: tuple[tuple[str, float], ...]
    resampled: bool = False

    def __post_init__(self):
        pts = tuple((str(b), float(v)) for b, v in self.points)
        keys = [parse_week(b) for b, _ in pts]
        for (b, v) in pts:
            if not math.isfinite(v):
                raise LinkageError(f"non-finite value at {b}")
        for k0, k1, (b, _) in zip(keys, keys[1:], pts[1:]):
            if k1 <= k0:
                raise LinkageError(f"buckets must be strictly increasing; offending bucket {b}")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_unsorted(cls, points, resampled: bool = False) -> "TimeSeries":
        seen = set()
        for b, _ in points:
            if b in seen:
                raise LinkageError(f"duplicate bucket {b}")
            seen.add(b)
        return cls(tuple(sorted(points, key=lambda p: parse_week(p[0]))), resampled)

    @property
    def buckets(self) -> list[str]:
        return [b for b, _ in self.points]

    @property
    def values(self) -> list[float]:
        return [v for _, v in self.points]

    def __len__(self):
        return len(self.points)


def _read_rows(path, bucket_column, value_column, where):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in [bucket_column, value_column, *where]:
            if col not in header:
                raise LinkageError(f"{path}: missing column {col!r}")
        for lineno, row in enumerate(reader, start=2):
            if any(row[k].strip() != str(v) for k, v in where.items()):
                continue
            raw = row[value_column].strip()
            try:
                value = float(raw)
            except ValueError:
                raise LinkageError(f"{path}: row {lineno}: non-numeric value {raw!r}") from None
            yield lineno, row[bucket_column].strip(), value


def load_timeseries_csv(path, bucket_column: str, value_column: str, where: dict | None = None) -> TimeSeries:
    """Load an ISO-week keyed series; rows may be in any order but buckets must be unique.

    ``where`` keeps only rows whose named columns equal the given values
    (e.g. ``{"product": "potatoes"}``).
    """
    points = []
    seen = {}
    for lineno, bucket, value in _read_rows(path, bucket_column, value_column, where or {}):
        try:
            parse_week(bucket)
        except ValueError as exc:
            raise LinkageError(f"{path}: row {lineno}: {exc}") from None
        if bucket in seen:
            raise LinkageError(f"{path}: duplicate bucket {bucket} (rows {seen[bucket]} and {lineno})")
        seen[bucket] = lineno
        points.append((bucket, value))
    return TimeSeries.from_unsorted(points)


def load_monthly_csv(path, month_column: str, value_column: str, where: dict | None = None) -> TimeSeries:
    """Load a monthly series and repeat each month's value across its ISO weeks.

    The result has ``resampled=True`` so reports can flag the up-sampling.
    """
    points = []
    seen = {}
    for lineno, month, value in _read_rows(path, month_column, value_column, where or {}):
        if month in seen:
            raise LinkageError(f"{path}: duplicate bucket {month} (rows {seen[month]} and {lineno})")
        seen[month] = lineno
        try:
            weeks = weeks_of_month(month)
        except ValueError as exc:
            raise LinkageError(f"{path}: row {lineno}: {exc}") from None
        points.extend((w, value) for w in weeks)
    return TimeSeries.from_unsorted(points, resampled=True)


def align(a: TimeSeries, b: TimeSeries) -> list[tuple[str, float, float]]:
    """Inner join on identical buckets, ascending."""
    other = dict(b.points)
    return [(bucket, va, other[bucket]) for bucket, va in a.points if bucket in other]


def pearson(joined) -> float:
    """Sample Pearson correlation of the two value columns of an aligned series."""
    joined = list(joined)
    if len(joined) < 3:
        raise LinkageError(f"need at least 3 joined points, got {len(joined)}")
    xs = [p[1] for p in joined]
    ys = [p[2] for p in joined]
    mx = math.fsum(xs) / len(xs)
    my = math.fsum(ys) / len(ys)
    try:
        sxx = math.fsum((x - mx) ** 2 for x in xs)
        syy = math.fsum((y - my) ** 2 for y in ys)
        sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    except OverflowError:
        raise LinkageError("values too large to correlate in double precision") from None
    if sxx == 0 or syy == 0:
        raise LinkageError("zero variance in one of the series")
    denom = math.sqrt(sxx * syy)
    if denom == 0 or math.isinf(denom):
        # the product under- or overflowed; separate roots stay in range
        denom = math.sqrt(sxx) * math.sqrt(syy)
    r = sxy / denom
    return max(-1.0, min(1.0, r))


@dataclass
class LinkageReport:
    rows: list
    r: float | None
    resampling_flag: bool
    labels: tuple[str, str] = ("series_a", "series_b")

    @property
    def n(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bucket", *self.labels])
        for bucket, a, b in self.rows:
            w.writerow([bucket, repr(a), repr(b)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"r": self.r, "n": self.n, "resampling_flag": self.resampling_flag}

    def write(self, out_dir, stem: str = "linkage") -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"{stem}.csv"
        json_path = out_dir / f"{stem}.json"
        csv_path.write_text(self.to_csv(), encoding="utf-8")
        json_path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return csv_path, json_path


def link(a: TimeSeries, b: TimeSeries, labels=("series_a", "series_b")) -> LinkageReport:
    """Join two series and correlate them; ``r`` is None when the join is too short or flat."""
    rows = align(a, b)
    try:
        r = pearson(rows)
    except LinkageError:
        r = None
    return LinkageReport(rows, r, a.resampled or b.resampled, tuple(labels))
