"""Newline-delimited JSON messages exchanged between researcher and markets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..data_model import StandardizationParams
from ..ldp import ComponentSensitivity, NoisyProjection
from ..linkage import parse_week
from ..pca import PcaError, PcaModel

MAX_LINE_BYTES = 16 * 1024 * 1024
AGGREGATES = ("sum", "mean", "count")


class ProtocolDecodeError(ValueError):
    pass


@dataclass(eq=False)
class ModelShare:
    model: PcaModel
    standardization: StandardizationParams
    sensitivity: ComponentSensitivity
    epsilon_total: float

    def payload(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "standardization": self.standardization.to_dict(),
            "sensitivity": self.sensitivity.s.tolist(),
            "epsilon_total": float(self.epsilon_total),
        }

    @classmethod
    def from_payload(cls, d: dict) -> "ModelShare":
        return cls(
            PcaModel.from_dict(d["model"]),
            StandardizationParams.from_dict(d["standardization"]),
            ComponentSensitivity(d["sensitivity"]),
            float(d["epsilon_total"]),
        )

    def __eq__(self, other):
        return isinstance(other, ModelShare) and self.payload() == other.payload()


@dataclass(eq=False)
class ProjectionShare:
    market_id: str
    noisy: NoisyProjection

    def payload(self) -> dict:
        return {"market_id": self.market_id, "noisy": self.noisy.to_dict()}

    @classmethod
    def from_payload(cls, d: dict) -> "ProjectionShare":
        return cls(str(d["market_id"]), NoisyProjection.from_dict(d["noisy"]))

    def __eq__(self, other):
        return isinstance(other, ProjectionShare) and self.payload() == other.payload()


@dataclass
class AggregateQuery:
    market_id: str
    pseudonyms: frozenset
    attribute: str
    time_range: tuple[str, str]
    aggregate: str = "sum"

    def __post_init__(self):
        self.pseudonyms = frozenset(str(p) for p in self.pseudonyms)
        self.time_range = tuple(self.time_range)
        if self.aggregate not in AGGREGATES:
            raise ValueError(f"unknown aggregate {self.aggregate!r}")
        if len(self.time_range) != 2:
            raise ValueError("time_range must be (start, end)")
        start, end = (parse_week(b) for b in self.time_range)
        if start > end:
            raise ValueError(f"empty time range {self.time_range}")

    def payload(self) -> dict:
        return {
            "market_id": self.market_id,
            "pseudonyms": sorted(self.pseudonyms),
            "attribute": self.attribute,
            "time_range": list(self.time_range),
            "aggregate": self.aggregate,
        }

    @classmethod
    def from_payload(cls, d: dict) -> "AggregateQuery":
        if isinstance(d["pseudonyms"], str) or isinstance(d["attribute"], (list, dict)):
            raise ProtocolDecodeError("malformed AggregateQuery")
        return cls(str(d["market_id"]), d["pseudonyms"], str(d["attribute"]), d["time_range"], d["aggregate"])


@dataclass
class AggregateResponse:
    """Per-bucket aggregate values; ``counts`` holds the contributing record count per bucket."""

    series: list
    counts: list = field(default_factory=list)
    market_id: str = ""
    aggregate: str = "sum"

    def __post_init__(self):
        self.series = [(str(b), float(v)) for b, v in self.series]
        self.counts = [int(c) for c in self.counts]
        if self.counts and len(self.counts) != len(self.series):
            raise ValueError("counts must align with series")

    def payload(self) -> dict:
        return {
            "market_id": self.market_id,
            "aggregate": self.aggregate,
            "series": [[b, v] for b, v in self.series],
            "counts": list(self.counts),
        }

    @classmethod
    def from_payload(cls, d: dict) -> "AggregateResponse":
        return cls([tuple(p) for p in d["series"]], d.get("counts", []), d.get("market_id", ""),
                   d.get("aggregate", "sum"))


@dataclass
class ProtocolError:
    code: str
    detail: str = ""

    def payload(self) -> dict:
        return {"code": self.code, "detail": self.detail}

    @classmethod
    def from_payload(cls, d: dict) -> "ProtocolError":
        return cls(str(d["code"]), str(d.get("detail", "")))


VARIANTS = {cls.__name__: cls for cls in (ModelShare, ProjectionShare, AggregateQuery, AggregateResponse, ProtocolError)}


def encode_message(msg) -> bytes:
    """One message as a single UTF-8 JSON line, terminated by ``\\n``."""
    name = type(msg).__name__
    if name not in VARIANTS or not isinstance(msg, VARIANTS[name]):
        raise TypeError(f"not a protocol message: {msg!r}")
    body = {"type": name, **msg.payload()}
    line = json.dumps(body, separators=(",", ":"), allow_nan=False, ensure_ascii=False).encode("utf-8") + b"\n"
    if len(line) > MAX_LINE_BYTES:
        raise ProtocolDecodeError(f"encoded message exceeds {MAX_LINE_BYTES} bytes")
    return line


def decode_message(line: bytes | str):
    if isinstance(line, str):
        line = line.encode("utf-8")
    if len(line) > MAX_LINE_BYTES:
        raise ProtocolDecodeError(f"oversize line: {len(line)} bytes > {MAX_LINE_BYTES}")
    try:
        body = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolDecodeError(f"malformed JSON: {exc}") from None
    if not isinstance(body, dict) or "type" not in body:
        raise ProtocolDecodeError("message must be a JSON object with a 'type' tag")
    tag = body.pop("type")
    cls = VARIANTS.get(tag) if isinstance(tag, str) else None
    if cls is None:
        raise ProtocolDecodeError(f"unknown message type {tag!r}")
    try:
        return cls.from_payload(body)
    except (KeyError, TypeError, ValueError, PcaError) as exc:
        if isinstance(exc, ProtocolDecodeError):
            raise
        raise ProtocolDecodeError(f"malformed {tag}: {exc}") from None

