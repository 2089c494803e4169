"""Market-side protocol handling.

A market node answers one researcher session at a time: it projects and
perturbs its table when a model arrives, then answers aggregate queries over
groups of at least ``min_group_size`` of its own records.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .._rng import derive_rng
from ..data_model import FeatureTable, apply_standardizer
from ..ldp import PrivacyError, allocate_budget, perturb
from ..linkage import parse_week
from ..pca import project
from .messages import (
    AggregateQuery,
    AggregateResponse,
    ModelShare,
    ProjectionShare,
    ProtocolDecodeError,
    ProtocolError,
    decode_message,
    encode_message,
)

OUT_OF_ORDER = "out of order"
UNKNOWN_RECORD = "unknown record"
GROUP_TOO_SMALL = "group too small"
UNKNOWN_ATTRIBUTE = "unknown attribute"
WRONG_MARKET = "wrong market"
MALFORMED = "malformed message"
UNEXPECTED = "unexpected message"
BAD_MODEL = "bad model"


@dataclass
class LogEntry:
    direction: str  # "in" or "out"
    line: bytes


@dataclass
class SessionLog:
    market_id: str
    entries: list = field(default_factory=list)

    def record(self, direction: str, line: bytes) -> None:
        self.entries.append(LogEntry(direction, bytes(line)))

    def transcript(self, direction: str | None = None) -> bytes:
        return b"".join(e.line for e in self.entries if direction is None or e.direction == direction)

    def messages(self, direction: str | None = None) -> list:
        out = []
        for e in self.entries:
            if direction is None or e.direction == direction:
                try:
                    out.append(decode_message(e.line))
                except ProtocolDecodeError:
                    out.append(None)
        return out


class MarketNode:
    """A farmers' market holding a private table and per-record time series.

    Args:
        market_id: public name of the market.
        private_table: feature table keyed by the market's own record ids.
        private_timeseries: ``{attribute: {record_id: {week: value}}}``.
        min_group_size: smallest record group an aggregate may cover.
        seed: master seed; the noise stream is derived from it and ``market_id``.
    """

    def __init__(self, market_id: str, private_table: FeatureTable, private_timeseries: dict | None = None,
                 min_group_size: int = 3, seed: int = 0):
        if min_group_size < 1:
            raise ValueError("min_group_size must be >= 1")
        self.market_id = str(market_id)
        self.min_group_size = int(min_group_size)
        self._rng = derive_rng(seed, "market", self.market_id)
        key = self._rng.bytes(32)
        self._token_of = {
            rid: hmac.new(key, rid.encode("utf-8"), hashlib.sha256).hexdigest()[:20]
            for rid in private_table.pseudonyms
        }
        if len(set(self._token_of.values())) != len(self._token_of):
            raise ValueError("pseudonym collision; use a different seed")
        self._record_of = {t: rid for rid, t in self._token_of.items()}
        self._raw = private_table
        self._table = FeatureTable(private_table.schema, [self._token_of[r] for r in private_table.pseudonyms],
                                   private_table.values)
        self._series = {}
        for attr, per_record in (private_timeseries or {}).items():
            unknown = set(per_record) - set(self._token_of)
            if unknown:
                raise ValueError(f"time series for unknown records: {sorted(unknown)[:3]}")
            self._series[attr] = {
                self._token_of[rid]: {parse_week(w): (w, float(v)) for w, v in weeks.items()}
                for rid, weeks in per_record.items()
            }
        self._releases: dict[bytes, bytes] = {}

    @property
    def pseudonyms(self) -> tuple[str, ...]:
        return self._table.pseudonyms

    @property
    def release_count(self) -> int:
        return len(self._releases)

    def private_values(self) -> set[float]:
        """Every raw attribute and per-record series value held by this node."""
        vals = {float(x) for x in np.asarray(self._raw.values).ravel()}
        for per_record in self._series.values():
            for weeks in per_record.values():
                vals.update(v for _, v in weeks.values())
        return vals

    def private_identifiers(self) -> set[str]:
        return set(self._raw.pseudonyms)

    def handle_model_share(self, msg: ModelShare):
        if msg.model.d != self._table.d or msg.standardization.means.shape[0] != self._table.d:
            return ProtocolError(BAD_MODEL, f"model expects {msg.model.d} columns, market has {self._table.d}")
        if len(msg.sensitivity) != msg.model.r:
            return ProtocolError(BAD_MODEL, "sensitivity length does not match component count")
        cache_key = encode_message(msg)
        if cache_key in self._releases:
            # answering the same model twice must not spend budget twice
            return decode_message(self._releases[cache_key])
        try:
            budget = allocate_budget(msg.epsilon_total, msg.sensitivity)
        except PrivacyError as exc:
            return ProtocolError(BAD_MODEL, str(exc))
        projected = project(msg.model, apply_standardizer(msg.standardization, self._table))
        noisy = perturb(projected, msg.sensitivity, budget, self._rng)
        reply = ProjectionShare(self.market_id, noisy)
        self._releases[cache_key] = encode_message(reply)
        return reply

    def handle_query(self, q: AggregateQuery):
        if q.market_id != self.market_id:
            return ProtocolError(WRONG_MARKET, f"query addressed to {q.market_id!r}")
        unknown = [p for p in q.pseudonyms if p not in self._record_of]
        if unknown:
            return ProtocolError(UNKNOWN_RECORD, f"{len(unknown)} pseudonym(s) not held by this market")
        if len(q.pseudonyms) < self.min_group_size:
            return ProtocolError(GROUP_TOO_SMALL, f"group of {len(q.pseudonyms)} < {self.min_group_size}")
        if q.attribute not in self._series:
            return ProtocolError(UNKNOWN_ATTRIBUTE, f"no time series named {q.attribute!r}")
        lo, hi = (parse_week(b) for b in q.time_range)
        buckets: dict = {}
        per_record = self._series[q.attribute]
        for p in q.pseudonyms:
            for key, (week, v) in per_record.get(p, {}).items():
                if lo <= key <= hi:
                    buckets.setdefault(key, (week, []))[1].append(v)
        series, counts = [], []
        for key in sorted(buckets):
            week, vals = buckets[key]
            # buckets fed by too few records would expose individual values
            if len(vals) < self.min_group_size:
                continue
            if q.aggregate == "sum":
                value = math.fsum(vals)
            elif q.aggregate == "mean":
                value = math.fsum(vals) / len(vals)
            else:
                value = float(len(vals))
            series.append((week, value))
            counts.append(len(vals))
        return AggregateResponse(series, counts, self.market_id, q.aggregate)


def run_market_session(node: MarketNode, transport, timeout: float | None = None) -> SessionLog:
    """Serve one researcher session until the peer closes the channel."""
    log = SessionLog(node.market_id)
    shared = False
    while True:
        line = transport.recv_line(timeout)
        if line is None:
            break
        log.record("in", line)
        try:
            msg = decode_message(line)
        except ProtocolDecodeError as exc:
            reply = ProtocolError(MALFORMED, str(exc))
        else:
            if isinstance(msg, ModelShare):
                reply = node.handle_model_share(msg)
                shared = shared or isinstance(reply, ProjectionShare)
            elif isinstance(msg, AggregateQuery):
                reply = node.handle_query(msg) if shared else ProtocolError(OUT_OF_ORDER, "no projection shared yet")
            else:
                reply = ProtocolError(UNEXPECTED, f"markets do not accept {type(msg).__name__}")
        out = encode_message(reply)
        transport.send_line(out)
        log.record("out", out)
    return log


def _numbers(obj, skip_keys=()):
    if isinstance(obj, bool):
        return
    if isinstance(obj, (int, float)):
        yield float(obj)
    elif isinstance(obj, list):
        for x in obj:
            yield from _numbers(x, skip_keys)
    elif isinstance(obj, dict):
        for k, v in obj.items():
            if k not in skip_keys:
                yield from _numbers(v, skip_keys)


def audit_transcript(log: SessionLog, node: MarketNode) -> list[str]:
    """Scan a session's outbound bytes for raw private values or record ids.

    Every JSON number and string leaving the market is checked against the
    node's raw attribute values, raw series values and original record ids.
    Values inside an ``AggregateResponse`` are excluded: they summarize at
    least ``min_group_size`` records by construction. Returns a description
    of each leak found.
    """
    private = node.private_values()
    ids = node.private_identifiers()
    leaks = []
    for i, e in enumerate(log.entries):
        if e.direction != "out":
            continue
        body = json.loads(e.line)
        skip = ("series", "counts") if body.get("type") == "AggregateResponse" else ()
        for x in _numbers(body, skip):
            if x in private:
                leaks.append(f"entry {i}: raw value {x!r}")
        text = e.line.decode("utf-8")
        for rid in ids:
            if f'"{rid}"' in text:
                leaks.append(f"entry {i}: record id {rid!r}")
    return leaks
