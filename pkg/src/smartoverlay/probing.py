"""Probe execution against a link trace."""

from __future__ import annotations

from .errors import InvalidInputError
from .overlay import (
    ForwardKind,
    OverlayPath,
    ProbeRecord,
    ProxyState,
    SmartHeader,
    forward,
)
from .trace import ROUND_US, LinkTrace


def probe_path(trace: LinkTrace, round: int, path: OverlayPath) -> ProbeRecord:
    """Measure ``path`` at ``round``: the RTD is the sum of its segments' RTTs."""
    if not 0 <= round < trace.rounds:
        raise InvalidInputError(f"round {round} outside trace of {trace.rounds} rounds")
    segs: list[int | None] = []
    for a, b in path.segments:
        segs.append(None if trace.lost[round, a, b] else int(trace.rtt_us[round, a, b]))
    lost = any(s is None for s in segs)
    total = None if lost else sum(segs)  # type: ignore[arg-type]
    return ProbeRecord(round, path, tuple(segs), total, lost, path.hop_count)


def stamp_probe(trace: LinkTrace, round: int, path: OverlayPath, flow_id: int = 0) -> SmartHeader:
    """Walk a probe along ``path`` through the proxy state machine, stamping it.

    Each segment RTT is split into a forward half and a return half. If a
    segment is lost the probe never comes back and its return slots stay unset.
    """
    header = SmartHeader.for_path(path, flow_id)
    segments = path.segments
    clock = round * ROUND_US
    header.forward_stamps[0] = clock
    for i, (a, b) in enumerate(segments):
        if trace.lost[round, a, b]:
            return header
        clock += int(trace.rtt_us[round, a, b]) // 2
        action = forward(ProxyState(b, clock_us=clock), header)
        if action.kind is ForwardKind.DELIVER_TO_RA:
            break
        if action.kind is not ForwardKind.SEND_TO or action.next_hop != segments[i + 1][1]:
            raise RuntimeError(f"probe on {path} went astray at node {b}: {action}")
    for i in reversed(range(len(segments))):
        a, b = segments[i]
        rtt = int(trace.rtt_us[round, a, b])
        clock += rtt - rtt // 2
        header.return_stamps[i] = clock
    return header
