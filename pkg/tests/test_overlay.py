import itertools
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smartoverlay.errors import (
    CorruptHeaderError,
    IncompleteProbeError,
    InvalidInputError,
    InvalidPairError,
    TruncatedHeaderError,
    UnknownNodeError,
    UnsupportedHeaderError,
)
from smartoverlay.overlay import (
    FIXED_LEN,
    ForwardKind,
    Node,
    OverlayPath,
    OverlayTopology,
    ProxyState,
    SmartHeader,
    address_node,
    decode_header,
    encode_header,
    enumerate_paths,
    forward,
    node_address,
    path_rtd_from_segments,
)


# --- topology and paths ----------------------------------------------------------


def test_topology_round_trip(tmp_path):
    topo = OverlayTopology((Node(0, "tokyo", 35.7, 139.7), Node(1, "santiago", -33.4, -70.7)))
    f = tmp_path / "topo.json"
    f.write_text(json.dumps(topo.to_records()))
    assert OverlayTopology.load(f) == topo
    assert topo.node_id("santiago") == 1
    with pytest.raises(UnknownNodeError):
        topo.node_id("lima")


def test_topology_needs_dense_ids():
    with pytest.raises(InvalidInputError):
        OverlayTopology((Node(0, "a"), Node(2, "b")))


def test_path_invariants():
    with pytest.raises(InvalidPairError):
        OverlayPath(1, 1)
    with pytest.raises(InvalidInputError):
        OverlayPath(0, 1, (0,))
    with pytest.raises(InvalidInputError):
        OverlayPath(0, 1, (2, 2))
    p = OverlayPath(0, 3, (1, 2))
    assert p.hop_count == 3 and p.nodes == (0, 1, 2, 3)
    assert p.segments == [(0, 1), (1, 2), (2, 3)]
    assert OverlayPath.from_nodes(p.to_list()) == p


def test_twenty_nodes_two_hops_gives_nineteen_paths():
    paths = enumerate_paths(20, 18, 6, 2)
    assert len(paths) == 19
    assert paths[0].is_direct
    assert [p.vias[0] for p in paths[1:]] == [v for v in range(20) if v not in (6, 18)]


def test_three_nodes_one_hop():
    assert enumerate_paths(3, 0, 2, 1) == [OverlayPath(0, 2)]


def test_four_nodes_three_hops():
    paths = enumerate_paths(4, 0, 3, 3)
    assert [p.vias for p in paths] == [(), (1,), (1, 2), (2,), (2, 1)]


def test_same_endpoint_rejected():
    with pytest.raises(InvalidPairError):
        enumerate_paths(5, 2, 2, 2)


@pytest.mark.parametrize("n", range(2, 8))
def test_path_count_closed_form(n):
    for max_hops in range(1, 5):
        paths = enumerate_paths(n, 0, n - 1, max_hops)
        expected = sum(math.perm(n - 2, h - 1) for h in range(1, max_hops + 1))
        assert len(paths) == len(set(paths)) == expected
        brute = {
            vias
            for length in range(max_hops)
            for vias in itertools.permutations(range(1, n - 1), length)
        }
        assert {p.vias for p in paths} == brute


# --- header codec ----------------------------------------------------------------


def test_single_hop_header_is_33_bytes():
    h = SmartHeader(0, [node_address(1)])
    buf = encode_header(h)
    assert len(buf) == 33 == FIXED_LEN + 20
    assert buf[:3] == b"SM\x01"
    assert decode_header(buf) == h


def test_address_plan():
    assert node_address(0) == 0x0A000001
    assert address_node(node_address(17)) == 17
    with pytest.raises(CorruptHeaderError):
        address_node(0xC0A80001)


def test_bad_magic():
    buf = bytearray(encode_header(SmartHeader(5, [node_address(2)])))
    buf[0:2] = b"\x00\x00"
    with pytest.raises(UnsupportedHeaderError):
        decode_header(bytes(buf))


def test_bad_version():
    buf = bytearray(encode_header(SmartHeader(5, [node_address(2)])))
    buf[2] = 9
    with pytest.raises(UnsupportedHeaderError):
        decode_header(bytes(buf))


def test_truncated():
    buf = encode_header(SmartHeader(5, [node_address(2), node_address(3)]))
    with pytest.raises(TruncatedHeaderError):
        decode_header(buf[:-1])
    with pytest.raises(TruncatedHeaderError):
        decode_header(buf[:5])


def test_hop_index_beyond_count():
    buf = bytearray(encode_header(SmartHeader(5, [node_address(2)])))
    buf[11] = 2
    with pytest.raises(CorruptHeaderError):
        decode_header(bytes(buf))


def test_zero_hop_count():
    buf = bytearray(encode_header(SmartHeader(5, [node_address(2)])))
    buf[12] = 0
    with pytest.raises(CorruptHeaderError):
        decode_header(bytes(buf))


headers = st.integers(1, 8).flatmap(
    lambda n: st.builds(
        SmartHeader,
        flow_id=st.integers(0, 2**64 - 1),
        hops=st.lists(st.integers(0, 254).map(node_address), min_size=n, max_size=n),
        hop_index=st.integers(0, n),
        forward_stamps=st.lists(st.integers(0, 2**64 - 1), min_size=n, max_size=n),
        return_stamps=st.lists(st.integers(0, 2**64 - 1), min_size=n, max_size=n),
    )
)


@settings(max_examples=500, deadline=None)
@given(headers)
def test_codec_round_trip(h):
    buf = encode_header(h)
    assert len(buf) == SmartHeader.encoded_length(h.hop_count)
    assert decode_header(buf) == h


# --- forwarding ------------------------------------------------------------------


def test_intermediate_proxy_sends_on():
    h = SmartHeader.for_path(OverlayPath(0, 2, (1,)))
    act = forward(ProxyState(1, clock_us=77), h)
    assert act.kind is ForwardKind.SEND_TO and act.next_hop == 2
    assert h.hop_index == 1 and h.forward_stamps[1] == 77


def test_final_proxy_delivers():
    h = SmartHeader.for_path(OverlayPath(0, 2, (1,)))
    h.hop_index = 1
    assert forward(ProxyState(2), h).kind is ForwardKind.DELIVER_TO_RA


def test_unknown_proxy_drops():
    h = SmartHeader.for_path(OverlayPath(0, 2, (1,)))
    act = forward(ProxyState(3), h)
    assert act.kind is ForwardKind.DROP and act.reason == "misrouted"


def test_corrupt_bytes_drop():
    act = forward(ProxyState(1), b"XX\x01garbage")
    assert act.kind is ForwardKind.DROP and act.reason == "corrupt"


@pytest.mark.parametrize("vias", [(), (4,), (4, 2), (4, 2, 7)])
def test_packet_reaches_ra_in_hop_count_steps(vias):
    path = OverlayPath(0, 9, vias)
    h = SmartHeader.for_path(path)
    at, steps = path.nodes[1], 0
    while True:
        steps += 1
        act = forward(ProxyState(at), h)
        if act.kind is ForwardKind.DELIVER_TO_RA:
            break
        assert act.kind is ForwardKind.SEND_TO
        at = act.next_hop
    assert steps == path.hop_count and at == 9


# --- RTD from stamps -------------------------------------------------------------


def test_one_hop_rtd():
    h = SmartHeader(0, [node_address(1)], forward_stamps=[0], return_stamps=[400_000])
    assert path_rtd_from_segments(h) == (400_000, [400_000])


def test_two_hop_rtd():
    # segment 1 is 100 ms, segment 2 is 150 ms, each split in equal halves
    h = SmartHeader(
        0,
        [node_address(1), node_address(2)],
        hop_index=1,
        forward_stamps=[1_000_000, 1_050_000],
        return_stamps=[1_250_000, 1_200_000],
    )
    assert path_rtd_from_segments(h) == (250_000, [100_000, 150_000])


def test_missing_return_stamp():
    h = SmartHeader(0, [node_address(1), node_address(2)], forward_stamps=[5, 10], return_stamps=[0, 20])
    with pytest.raises(IncompleteProbeError):
        path_rtd_from_segments(h)
