"""Synthetic multi-market scenario: public table, private markets, weekly sales and prices."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import derive_rng
from .data_model import FARMERS_MARKET_SCHEMA, FeatureTable, generate_synthetic_market, load_csv, write_csv
from .linkage import TimeSeries, format_week, load_timeseries_csv
from .privacy_eval import STANDARD_CLUSTERS

PRODUCT = "potatoes"


@dataclass
class MarketData:
    market_id: str
    table: FeatureTable
    sales: dict  # record id -> {week: value}


@dataclass
class Scenario:
    public: FeatureTable
    markets: list
    prices: TimeSeries

    def write(self, out_dir) -> dict:
        """Write every table as CSV; returns the file names keyed by role."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {"public": "public.csv", "pricing": "pricing.csv", "markets": []}
        write_csv(self.public, out / "public.csv")
        with (out / "pricing.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["week", "product", "price_per_unit"])
            for week, price in self.prices.points:
                w.writerow([week, PRODUCT, repr(price)])
        for m in self.markets:
            table_name = f"{m.market_id}.csv"
            sales_name = f"{m.market_id}_sales.csv"
            write_csv(m.table, out / table_name)
            with (out / sales_name).open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["ID", "week", "sales"])
                for rid in m.table.pseudonyms:
                    for week, v in m.sales[rid].items():
                        w.writerow([rid, week, repr(v)])
            files["markets"].append({"market_id": m.market_id, "table": table_name, "sales": sales_name})
        return files


def load_scenario(data_dir, files: dict) -> Scenario:
    data_dir = Path(data_dir)
    public = load_csv(data_dir / files["public"], FARMERS_MARKET_SCHEMA)
    prices = load_timeseries_csv(data_dir / files["pricing"], "week", "price_per_unit", {"product": PRODUCT})
    markets = []
    for entry in files["markets"]:
        table = load_csv(data_dir / entry["table"], FARMERS_MARKET_SCHEMA)
        sales: dict = {rid: {} for rid in table.pseudonyms}
        with (data_dir / entry["sales"]).open(newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                sales.setdefault(row["ID"], {})[row["week"]] = float(row["sales"])
        markets.append(MarketData(entry["market_id"], table, sales))
    return Scenario(public, markets, prices)


def make_scenario(seed: int = 0, n_markets: int = 3, rows_per_market: int = 60, public_rows: int = 120,
                  clusters=STANDARD_CLUSTERS, weeks: int = 36, year: int = 2018) -> Scenario:
    """Draw one population and split it into a public table and ``n_markets`` private ones.

    Weekly sales of each vendor fall when the product price rises, so linked
    aggregates correlate negatively with the price series.
    """
    if n_markets < 1 or rows_per_market < 1 or public_rows < 2:
        raise ValueError("need at least one market, one row per market and two public rows")
    total = public_rows + n_markets * rows_per_market
    table = generate_synthetic_market(total, clusters, seed)
    order = derive_rng(seed, "scenario-split").permutation(total)
    public = table.take(sorted(order[:public_rows]))
    rng = derive_rng(seed, "scenario-series")
    week_ids = [format_week(year, w) for w in range(1, weeks + 1)]
    phase = 2 * math.pi * np.arange(weeks) / weeks
    prices = 0.8 + 0.2 * np.sin(phase) + 0.02 * rng.standard_normal(weeks)
    price_z = (prices - prices.mean()) / prices.std()
    markets = []
    for i in range(n_markets):
        rows = sorted(order[public_rows + i * rows_per_market: public_rows + (i + 1) * rows_per_market])
        sub = table.take(rows)
        sales = {}
        base = np.maximum(sub.column("Sales"), 1.0) / weeks
        for rid, b in zip(sub.pseudonyms, base):
            weekly = b * (1.0 - 0.3 * price_z) + 0.1 * b * rng.standard_normal(weeks)
            sales[rid] = {w: round(max(float(v), 0.0), 2) for w, v in zip(week_ids, weekly)}
        markets.append(MarketData(f"market{i + 1}", sub, sales))
    price_series = TimeSeries(tuple((w, round(float(p), 4)) for w, p in zip(week_ids, prices)))
    return Scenario(public, markets, price_series)
