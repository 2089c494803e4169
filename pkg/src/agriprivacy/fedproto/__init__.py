"""Researcher/market protocol over newline-delimited JSON."""

from .market import MarketNode, SessionLog, audit_transcript, run_market_session
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
from .researcher import (
    AggregateResult,
    EmptyResultError,
    ResearcherError,
    ResearcherNode,
    SelectionReport,
    query_aggregates,
    researcher_session,
)
from .transport import InProcessTransport, LineServer, SocketTransport, TransportTimeout, connect

__all__ = [
    "AggregateQuery", "AggregateResponse", "AggregateResult", "EmptyResultError", "InProcessTransport",
    "LineServer", "MarketNode", "ModelShare", "ProjectionShare", "ProtocolDecodeError", "ProtocolError",
    "ResearcherError", "ResearcherNode", "SelectionReport", "SessionLog", "SocketTransport", "TransportTimeout",
    "audit_transcript", "connect", "decode_message", "encode_message", "query_aggregates", "researcher_session",
    "run_market_session",
]
