"""Small builders shared by the protocol tests."""

import numpy as np

from agriprivacy.data_model import FARMERS_MARKET_SCHEMA, FeatureTable
from agriprivacy.fedproto import MarketNode, ResearcherNode
from agriprivacy.linkage import format_week
from agriprivacy.scenario import make_scenario

D = len(FARMERS_MARKET_SCHEMA.feature_columns)


def table(rows, ids):
    """Table with the given (miles, sales, visitors) and no vendor indicators set."""
    values = np.zeros((len(rows), D))
    cont = FARMERS_MARKET_SCHEMA.indices("continuous")
    values[:, cont] = rows
    return FeatureTable(FARMERS_MARKET_SCHEMA, ids, values)


def weekly(ids, per_id, weeks=4):
    """{id: {week: value}} from a per-id list of weekly values."""
    return {rid: {format_week(2018, w + 1): float(v) for w, v in enumerate(per_id[i][:weeks])}
            for i, rid in enumerate(ids)}


def scenario_nodes(seed, n_markets=3, rows_per_market=20, public_rows=60, weeks=8, min_group_size=3):
    sc = make_scenario(seed, n_markets=n_markets, rows_per_market=rows_per_market, public_rows=public_rows,
                       weeks=weeks)
    researcher = ResearcherNode(sc.public)
    markets = [MarketNode(m.market_id, m.table, {"sales": m.sales}, min_group_size, seed=seed) for m in sc.markets]
    return sc, researcher, markets
