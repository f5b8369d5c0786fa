"""Overlay topology, candidate paths, the SMART source-routing header and
the per-proxy forwarding state machine."""

from __future__ import annotations

import enum
import itertools
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    CorruptHeaderError,
    IncompleteProbeError,
    InvalidInputError,
    InvalidPairError,
    TruncatedHeaderError,
    UnknownNodeError,
    UnsupportedHeaderError,
)

DEFAULT_MAX_HOPS = 4


@dataclass(frozen=True)
class Node:
    id: int
    name: str
    lat: float = 0.0
    lon: float = 0.0


@dataclass(frozen=True)
class OverlayTopology:
    """A fully meshed overlay: every proxy reaches every other one over IP."""

    nodes: tuple[Node, ...]

    def __post_init__(self) -> None:
        if len(self.nodes) < 2:
            raise InvalidInputError("an overlay needs at least two nodes")
        if [n.id for n in self.nodes] != list(range(len(self.nodes))):
            raise InvalidInputError("node ids must be dense, unique and sorted: 0..n-1")
        if len({n.name for n in self.nodes}) != len(self.nodes):
            raise InvalidInputError("node names must be unique")

    @classmethod
    def anonymous(cls, n: int) -> "OverlayTopology":
        return cls(tuple(Node(i, f"n{i}") for i in range(n)))

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "OverlayTopology":
        nodes = sorted(
            (Node(int(r["id"]), str(r["name"]), float(r.get("lat", 0.0)), float(r.get("lon", 0.0)))
             for r in records),
            key=lambda n: n.id,
        )
        return cls(tuple(nodes))

    @classmethod
    def load(cls, path: str | Path) -> "OverlayTopology":
        return cls.from_records(json.loads(Path(path).read_text()))

    def to_records(self) -> list[dict]:
        return [{"id": n.id, "name": n.name, "lat": n.lat, "lon": n.lon} for n in self.nodes]

    def __len__(self) -> int:
        return len(self.nodes)

    def node_id(self, name: str) -> int:
        for n in self.nodes:
            if n.name == name:
                return n.id
        raise UnknownNodeError(name)

    def name(self, node_id: int) -> str:
        return self.nodes[node_id].name


@dataclass(frozen=True, order=True)
class OverlayPath:
    src: int
    dst: int
    vias: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "vias", tuple(int(v) for v in self.vias))
        if self.src == self.dst:
            raise InvalidPairError(f"source and destination are both {self.src}")
        if self.src in self.vias or self.dst in self.vias:
            raise InvalidInputError("vias must not contain the endpoints")
        if len(set(self.vias)) != len(self.vias):
            raise InvalidInputError("vias must not repeat a node")

    @property
    def hop_count(self) -> int:
        return len(self.vias) + 1

    @property
    def nodes(self) -> tuple[int, ...]:
        return (self.src, *self.vias, self.dst)

    @property
    def segments(self) -> list[tuple[int, int]]:
        ns = self.nodes
        return list(zip(ns[:-1], ns[1:]))

    @property
    def is_direct(self) -> bool:
        return not self.vias

    def to_list(self) -> list[int]:
        return list(self.nodes)

    @classmethod
    def from_nodes(cls, nodes: Sequence[int]) -> "OverlayPath":
        if len(nodes) < 2:
            raise InvalidInputError("a path needs at least two nodes")
        return cls(int(nodes[0]), int(nodes[-1]), tuple(nodes[1:-1]))

    def __str__(self) -> str:
        return "-".join(str(n) for n in self.nodes)


def enumerate_paths(
    topo: OverlayTopology | int, src: int, dst: int, max_hops: int
) -> list[OverlayPath]:
    """All loop-free overlay paths from ``src`` to ``dst`` with at most ``max_hops`` hops.

    The direct route comes first, then via-sequences in lexicographic order,
    so neuron indices are stable across runs.
    """
    n = topo if isinstance(topo, int) else len(topo)
    if src == dst:
        raise InvalidPairError(f"source and destination are both {src}")
    if not (0 <= src < n and 0 <= dst < n):
        raise UnknownNodeError(f"pair ({src}, {dst}) outside 0..{n - 1}")
    if max_hops < 1:
        raise InvalidInputError("max_hops must be >= 1")
    others = [v for v in range(n) if v not in (src, dst)]
    vias: list[tuple[int, ...]] = []
    for length in range(1, max_hops):
        vias.extend(itertools.permutations(others, length))
    vias.sort()
    return [OverlayPath(src, dst)] + [OverlayPath(src, dst, v) for v in vias]


# --- SMART header -----------------------------------------------------------

MAGIC = b"SM"
VERSION = 1
_FIXED = struct.Struct(">2sBQBB")  # magic, version, flow_id, hop_index, hop_count
FIXED_LEN = _FIXED.size  # 13
PER_HOP_LEN = 4 + 16


def node_address(node_id: int) -> int:
    """IPv4-shaped overlay address 10.0.0.{id+1} as a 32-bit integer."""
    if not 0 <= node_id < 255:
        raise InvalidInputError(f"node id {node_id} does not fit the 10.0.0.0/24 plan")
    return (10 << 24) | (node_id + 1)


def address_node(addr: int) -> int:
    if addr >> 8 != 10 << 16 or not 1 <= addr & 0xFF <= 255:
        raise CorruptHeaderError(f"address {addr:#010x} is outside the overlay plan")
    return (addr & 0xFF) - 1


@dataclass
class SmartHeader:
    """Source route plus probe timestamp slots.

    ``hops`` lists the proxies after the source, ending with the destination
    proxy. Slot ``i`` of ``forward_stamps`` / ``return_stamps`` belongs to
    the sender of segment ``i``: slot 0 is the source proxy, slot ``i >= 1``
    is ``hops[i - 1]``. Stamps are microseconds; 0 means unset.
    """

    flow_id: int
    hops: list[int]
    hop_index: int = 0
    forward_stamps: list[int] = field(default_factory=list)
    return_stamps: list[int] = field(default_factory=list)
    version: int = VERSION

    def __post_init__(self) -> None:
        self.hops = [int(h) for h in self.hops]
        h = len(self.hops)
        if not self.forward_stamps:
            self.forward_stamps = [0] * h
        if not self.return_stamps:
            self.return_stamps = [0] * h

    @property
    def hop_count(self) -> int:
        return len(self.hops)

    @classmethod
    def for_path(cls, path: OverlayPath, flow_id: int = 0) -> "SmartHeader":
        return cls(flow_id, [node_address(n) for n in path.nodes[1:]])

    def validate(self) -> None:
        h = self.hop_count
        if not 1 <= h <= 255:
            raise CorruptHeaderError(f"hop_count {h} outside 1..255")
        if not 0 <= self.hop_index <= h:
            raise CorruptHeaderError(f"hop_index {self.hop_index} > hop_count {h}")
        if len(self.forward_stamps) != h or len(self.return_stamps) != h:
            raise CorruptHeaderError("timestamp slots do not match hop_count")
        if not 0 <= self.flow_id < 2**64:
            raise CorruptHeaderError("flow_id must fit in 64 bits")

    @staticmethod
    def encoded_length(hop_count: int) -> int:
        return FIXED_LEN + hop_count * PER_HOP_LEN


def encode_header(h: SmartHeader) -> bytes:
    h.validate()
    if h.version != VERSION:
        raise UnsupportedHeaderError(f"cannot encode version {h.version}")
    n = h.hop_count
    stamps = [s for pair in zip(h.forward_stamps, h.return_stamps) for s in pair]
    return b"".join(
        (
            _FIXED.pack(MAGIC, h.version, h.flow_id, h.hop_index, n),
            struct.pack(f">{n}I", *h.hops),
            struct.pack(f">{2 * n}Q", *stamps),
        )
    )


def decode_header(buf: bytes) -> SmartHeader:
    if len(buf) < FIXED_LEN:
        raise TruncatedHeaderError(f"{len(buf)} bytes is shorter than the fixed part")
    magic, version, flow_id, hop_index, n = _FIXED.unpack_from(buf)
    if magic != MAGIC:
        raise UnsupportedHeaderError(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedHeaderError(f"unsupported version {version}")
    if n < 1:
        raise CorruptHeaderError("hop_count must be at least 1")
    need = SmartHeader.encoded_length(n)
    if len(buf) < need:
        raise TruncatedHeaderError(f"need {need} bytes for {n} hops, got {len(buf)}")
    if hop_index > n:
        raise CorruptHeaderError(f"hop_index {hop_index} > hop_count {n}")
    hops = list(struct.unpack_from(f">{n}I", buf, FIXED_LEN))
    stamps = struct.unpack_from(f">{2 * n}Q", buf, FIXED_LEN + 4 * n)
    return SmartHeader(
        flow_id, hops, hop_index, list(stamps[0::2]), list(stamps[1::2]), version
    )


# --- forwarding ---------------------------------------------------------------


class ForwardKind(enum.Enum):
    SEND_TO = "send_to"
    DELIVER_TO_RA = "deliver_to_ra"
    DROP = "drop"


@dataclass(frozen=True)
class ForwardAction:
    kind: ForwardKind
    next_hop: int | None = None
    reason: str | None = None


@dataclass
class ProxyState:
    """Forwarding state of one proxy. ``clock_us`` is its local clock."""

    node_id: int
    clock_us: int = 0
    forwarded: int = 0
    delivered: int = 0
    dropped: int = 0


def forward(proxy: ProxyState, header: SmartHeader | bytes) -> ForwardAction:
    """Advance a packet one overlay hop at ``proxy``.

    Raw bytes are decoded first; the decoded header is not returned, so pass
    a ``SmartHeader`` when the caller needs to see the stamps and the new
    ``hop_index``.
    """
    try:
        if isinstance(header, (bytes, bytearray)):
            header = decode_header(bytes(header))
        header.validate()
        here = address_node(header.hops[min(header.hop_index, header.hop_count - 1)])
    except (CorruptHeaderError, TruncatedHeaderError, UnsupportedHeaderError):
        proxy.dropped += 1
        return ForwardAction(ForwardKind.DROP, reason="corrupt")
    if header.hop_index >= header.hop_count or here != proxy.node_id:
        proxy.dropped += 1
        return ForwardAction(ForwardKind.DROP, reason="misrouted")
    if header.hop_index == header.hop_count - 1:
        proxy.delivered += 1
        return ForwardAction(ForwardKind.DELIVER_TO_RA)
    header.forward_stamps[header.hop_index + 1] = proxy.clock_us
    header.hop_index += 1
    proxy.forwarded += 1
    return ForwardAction(ForwardKind.SEND_TO, next_hop=address_node(header.hops[header.hop_index]))


def path_rtd_from_segments(header: SmartHeader) -> tuple[int, list[int]]:
    """Total RTD and per-segment RTDs (microseconds) of a returned probe.

    Each slot measures the round trip from its proxy to the destination and
    back; a segment's RTD is the difference of two adjacent round trips, so
    the segments always add up to the total.
    """
    n = header.hop_count
    fwd, ret = header.forward_stamps, header.return_stamps
    # slot 0 may legitimately carry a zero send stamp (clock epoch)
    missing = [i for i in range(n) if ret[i] == 0 or (i > 0 and fwd[i] == 0)]
    if missing:
        raise IncompleteProbeError(f"timestamp slots {missing} are unset")
    trips = [ret[i] - fwd[i] for i in range(n)]
    if any(t <= 0 for t in trips) or any(a < b for a, b in zip(trips, trips[1:])):
        raise IncompleteProbeError(f"inconsistent stamps: per-slot round trips {trips}")
    segments = [trips[i] - trips[i + 1] for i in range(n - 1)] + [trips[-1]]
    return trips[0], segments


@dataclass(frozen=True)
class ProbeRecord:
    """One round's measurement of one probed path.

    RTTs are microseconds. ``total_rtt`` is ``None`` when any segment was lost.
    """

    round: int
    path: OverlayPath
    segment_rtts: tuple[int | None, ...]
    total_rtt: int | None
    lost: bool
    links_charged: int

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "path": self.path.to_list(),
            "segment_rtts": list(self.segment_rtts),
            "total_rtt": self.total_rtt,
            "lost": self.lost,
            "links_charged": self.links_charged,
        }
