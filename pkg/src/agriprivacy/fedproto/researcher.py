"""Researcher-side protocol: model distribution, pooling, clustering and aggregate queries."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from ..clustering import ElbowCurve, KMeansModel, kmeans, select_k_elbow
from ..data_model import FeatureTable, apply_standardizer, fit_standardizer
from ..ldp import compute_sensitivity
from ..linkage import TimeSeries
from ..pca import fit_pca, project
from .messages import AggregateQuery, AggregateResponse, ModelShare, ProjectionShare, ProtocolDecodeError, ProtocolError
from .transport import TransportTimeout

log = logging.getLogger(__name__)


class ResearcherError(RuntimeError):
    pass


class EmptyResultError(ResearcherError):
    pass


@dataclass(frozen=True, eq=False)
class PooledProjection:
    """Noisy rows from all markets, ordered by (market_id, pseudonym)."""

    market_ids: tuple[str, ...]
    pseudonyms: tuple[str, ...]
    scores: np.ndarray

    @property
    def n(self) -> int:
        return len(self.pseudonyms)


class ResearcherNode:
    """Holds the public table, the fitted model and everything received from markets."""

    def __init__(self, public_table: FeatureTable, components: int = 2):
        self.public_table = public_table
        self.standardization = fit_standardizer(public_table)
        standardized = apply_standardizer(self.standardization, public_table)
        self.model = fit_pca(standardized, components)
        self.reference = project(self.model, standardized)
        self.sensitivity = compute_sensitivity(self.reference)
        self.links: dict = {}
        self.pooled: PooledProjection | None = None
        self.clusters: KMeansModel | None = None
        self.elbow: ElbowCurve | None = None

    def model_share(self, epsilon_total: float) -> ModelShare:
        return ModelShare(self.model, self.standardization, self.sensitivity, float(epsilon_total))

    def cluster_members(self, cluster_id: int) -> dict[str, list[str]]:
        if self.clusters is None or not 0 <= cluster_id < self.clusters.k:
            raise ResearcherError(f"no cluster {cluster_id}")
        out: dict[str, list[str]] = {}
        for m, p, lab in zip(self.pooled.market_ids, self.pooled.pseudonyms, self.clusters.labels):
            if lab == cluster_id:
                out.setdefault(m, []).append(p)
        return out

    def state(self) -> dict:
        """Everything the researcher has learned, in a comparable form."""
        return {
            "pooled": {
                "market_ids": list(self.pooled.market_ids) if self.pooled else [],
                "pseudonyms": list(self.pooled.pseudonyms) if self.pooled else [],
                "scores": self.pooled.scores.tolist() if self.pooled else [],
            },
            "labels": self.clusters.labels.tolist() if self.clusters is not None else [],
            "centroids": self.clusters.centroids.tolist() if self.clusters is not None else [],
        }


@dataclass
class SelectionReport:
    k: int
    clusters: list  # [{"cluster_id", "size", "members": [[market_id, pseudonym], ...]}]
    markets: list
    missing_markets: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    elbow: dict | None = None

    @property
    def partial(self) -> bool:
        return bool(self.missing_markets or self.errors)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "markets": self.markets,
            "missing_markets": self.missing_markets,
            "errors": self.errors,
            "partial": self.partial,
            "elbow": self.elbow,
            "clusters": self.clusters,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def researcher_session(node: ResearcherNode, markets, epsilon_total: float, k_range=(2, 6), seed: int = 0,
                       timeout: float = 10.0) -> SelectionReport:
    """Share the model, pool the noisy projections, and cluster them.

    Markets that cannot be reached or do not answer within ``timeout`` are
    listed in ``missing_markets``; markets whose reply has the wrong shape are
    excluded and noted in ``errors``.
    """
    share = node.model_share(epsilon_total)
    missing, errors = [], []
    live = []
    for t in markets:
        try:
            t.send(share)
            live.append(t)
        except OSError as exc:
            missing.append(t.label)
            log.warning("market %s unreachable: %s", t.label, exc)
    received: dict[str, ProjectionShare] = {}
    for t in live:
        try:
            reply = t.recv(timeout)
        except TransportTimeout:
            missing.append(t.label)
            continue
        except (ProtocolDecodeError, OSError) as exc:
            errors.append({"market": t.label, "error": f"bad reply: {exc}"})
            continue
        if reply is None:
            missing.append(t.label)
        elif isinstance(reply, ProtocolError):
            errors.append({"market": t.label, "error": f"{reply.code}: {reply.detail}"})
        elif not isinstance(reply, ProjectionShare):
            errors.append({"market": t.label, "error": f"unexpected {type(reply).__name__}"})
        elif reply.noisy.r != node.model.r:
            errors.append({"market": reply.market_id, "error": f"dimension mismatch: {reply.noisy.r} != {node.model.r}"})
        elif reply.market_id in received:
            errors.append({"market": reply.market_id, "error": "duplicate market id"})
        else:
            received[reply.market_id] = reply
            node.links[reply.market_id] = t
    if not received:
        raise ResearcherError(f"no market returned a projection (missing: {missing}, errors: {errors})")

    rows = sorted(
        (mid, p, tuple(s)) for mid, share_ in received.items() for p, s in zip(share_.noisy.pseudonyms, share_.noisy.scores)
    )
    node.pooled = PooledProjection(
        tuple(r[0] for r in rows), tuple(r[1] for r in rows), np.array([r[2] for r in rows], dtype=float)
    )
    k_min, k_max = k_range
    n = node.pooled.n
    elbow_info = None
    if k_min == k_max:
        k = k_min
        if not 1 <= k <= n:
            raise ResearcherError(f"k={k} invalid for {n} pooled rows")
    else:
        k_max = min(k_max, n - 1)
        node.elbow = select_k_elbow(node.pooled.scores, k_min, k_max, seed=seed)
        k = node.elbow.chosen_k
        elbow_info = {
            "ks": node.elbow.ks,
            "wcss": node.elbow.wcss_values,
            "chosen_k": k,
            "weak_elbow": node.elbow.weak_elbow,
        }
    node.clusters = node.elbow.models[k] if node.elbow is not None else kmeans(node.pooled.scores, k, seed=seed)
    clusters = []
    for j in range(k):
        members = [[m, p] for m, p, lab in zip(node.pooled.market_ids, node.pooled.pseudonyms, node.clusters.labels)
                   if lab == j]
        clusters.append({"cluster_id": j, "size": len(members), "members": members})
    return SelectionReport(k, clusters, sorted(received), missing, errors, elbow_info)


@dataclass
class AggregateResult:
    series: TimeSeries
    refusals: dict  # market_id -> error code
    per_market: dict  # market_id -> AggregateResponse

    @property
    def partial(self) -> bool:
        return bool(self.refusals)


def query_aggregates(node: ResearcherNode, cluster_id: int, attribute: str, time_range, aggregate: str = "sum",
                     markets=None, timeout: float = 10.0) -> AggregateResult:
    """Ask each market for an aggregate over its members of ``cluster_id`` and merge per bucket.

    Sums and counts are added; means are combined weighted by each market's
    per-bucket record count.
    """
    members = node.cluster_members(cluster_id)
    targets = sorted(members if markets is None else [m for m in markets if m in members])
    refusals, responses = {}, {}
    for mid in targets:
        t = node.links.get(mid)
        if t is None:
            refusals[mid] = "no session"
            continue
        t.send(AggregateQuery(mid, members[mid], attribute, tuple(time_range), aggregate))
        try:
            reply = t.recv(timeout)
        except TransportTimeout:
            refusals[mid] = "timeout"
            continue
        if isinstance(reply, AggregateResponse):
            responses[mid] = reply
        elif isinstance(reply, ProtocolError):
            refusals[mid] = reply.code
        else:
            refusals[mid] = "no reply" if reply is None else f"unexpected {type(reply).__name__}"
    if not responses:
        raise EmptyResultError(f"every market refused the query: {refusals}")
    totals: dict[str, list] = {}
    for mid in sorted(responses):
        resp = responses[mid]
        counts = resp.counts or [1] * len(resp.series)
        for (bucket, value), c in zip(resp.series, counts):
            acc = totals.setdefault(bucket, [0.0, 0])
            acc[0] += value * c if aggregate == "mean" else value
            acc[1] += c
    points = []
    for bucket, (v, c) in totals.items():
        points.append((bucket, v / c if aggregate == "mean" else v))
    return AggregateResult(TimeSeries.from_unsorted(points), refusals, responses)
