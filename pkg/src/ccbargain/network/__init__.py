from .topology import Topology, TopologyError, chain, load_topology, parse_topology
from .transport import InProcessTransport, RoundFailure, Router, exchange_round
from .wire import DecodeError, RoundMessage, decode_message, encode_message

__all__ = [
    "Topology", "TopologyError", "chain", "load_topology", "parse_topology",
    "InProcessTransport", "RoundFailure", "Router", "exchange_round",
    "DecodeError", "RoundMessage", "decode_message", "encode_message",
]
