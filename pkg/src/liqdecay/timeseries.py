"""Labelled norm time series and their CSV form."""

import csv
from dataclasses import dataclass

import numpy as np

SERIES_COLUMNS = ("t", "k", "component", "norm")


class SeriesError(ValueError):
    pass


def fmt(x):
    """Round-trip float formatting used for every CSV we write."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    component: str
    k: int = 0
    quantity: str = "linear"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape:
            raise SeriesError("times and values must be 1-D arrays of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise SeriesError(f"times of {self.label} must be strictly increasing")
        if np.any(t < 0):
            raise SeriesError("times must be nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def label(self):
        return f"{self.quantity}/{self.component}"

    @property
    def key(self):
        return (self.component, int(self.k))

    def window(self, t1, t2):
        sel = (self.times >= t1 * (1 - 1e-12)) & (self.times <= t2 * (1 + 1e-12))
        return self.times[sel], self.values[sel]

    def scaled(self, factor):
        return TimeSeries(self.times, self.values * factor, self.component, self.k, self.quantity)


def write_series_csv(path, series):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for s in series:
            for t, v in zip(s.times, s.values):
                w.writerow((fmt(t), int(s.k), s.component, fmt(v)))


def read_series_csv(path, quantity="linear"):
    """Group rows by (component, k); returns a dict keyed that way."""
    rows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in SERIES_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise SeriesError(f"{path}: missing columns {', '.join(missing)}")
        for row in reader:
            key = (row["component"], int(row["k"]))
            rows.setdefault(key, []).append((float(row["t"]), float(row["norm"])))
    out = {}
    for (comp, k), pairs in sorted(rows.items()):
        pairs.sort()
        t, v = zip(*pairs)
        out[(comp, k)] = TimeSeries(np.array(t), np.array(v), comp, k, quantity)
    return out
