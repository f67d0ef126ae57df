"""Bit-packed key/value layout of a graph held in contract state.

Bit position 0 is the most significant bit of byte 0. Every event owns a
4-bit status group in the marking string and a links row made of one 5-bit
group per partner event.

Status group offsets: included=0, pending=1, executed=2, 3 reserved.
Links group offsets follow :class:`RelationKind` codes. Include, exclude and
response bits are out-links of the row owner; milestone and condition bits
are in-links pointing at the row owner.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

from .dcr import MAX_EVENTS, DcrGraph, Marking, Relation, RelationKind
from .errors import (
    BadLength,
    CapacityExceeded,
    EventOutOfRange,
    ReservedBitSet,
    TrailingBitsSet,
    UnknownEvent,
)

STATUS_BITS = 4
LINK_BITS = 5

INCLUDED, PENDING, EXECUTED, RESERVED = 0, 1, 2, 3

GLOBAL_PAIRS = 64
LOCAL_PAIRS = 16
LOCAL_ACCOUNTS = 4
TOTAL_PAIRS = GLOBAL_PAIRS + LOCAL_PAIRS * LOCAL_ACCOUNTS
MAX_KV_BYTES = 128
GRAPH_PAIRS = 3  # GC, MK, TEN

KEY_CREATOR = b"GC"
KEY_MARKING = b"MK"
KEY_EVENT_COUNT = b"TEN"


# -- raw bit access ----------------------------------------------------------

def get_bit(data: bytes | bytearray, pos: int) -> int:
    return (data[pos >> 3] >> (7 - (pos & 7))) & 1


def set_bit(data: bytearray, pos: int, value: int = 1) -> None:
    mask = 0x80 >> (pos & 7)
    if value:
        data[pos >> 3] |= mask
    else:
        data[pos >> 3] &= ~mask & 0xFF


def get_field(data: bytes | bytearray, start: int, width: int) -> int:
    """Read ``width`` bits starting at ``start`` as an unsigned MSB-first int."""
    first, last = start >> 3, (start + width - 1) >> 3
    chunk = int.from_bytes(data[first:last + 1], "big")
    shift = (last + 1) * 8 - (start + width)
    return (chunk >> shift) & ((1 << width) - 1)


def set_field(data: bytearray, start: int, width: int, value: int) -> None:
    """Write the low ``width`` bits of ``value`` starting at bit ``start``."""
    first, last = start >> 3, (start + width - 1) >> 3
    nbytes = last - first + 1
    chunk = int.from_bytes(data[first:last + 1], "big")
    shift = (last + 1) * 8 - (start + width)
    mask = ((1 << width) - 1) << shift
    chunk = (chunk & ~mask) | ((value << shift) & mask)
    data[first:last + 1] = chunk.to_bytes(nbytes, "big")


def marking_len(event_count: int) -> int:
    return (event_count * STATUS_BITS + 7) // 8


def links_len(event_count: int) -> int:
    return (event_count * LINK_BITS + 7) // 8


# -- marking -----------------------------------------------------------------

@dataclass(frozen=True)
class PackedMarking:
    data: bytes
    event_count: int


def encode_marking(marking: Marking, event_count: int) -> PackedMarking:
    for e in marking.events():
        if not 1 <= e <= event_count:
            raise EventOutOfRange(f"event {e} outside 1..{event_count}")
    buf = bytearray(marking_len(event_count))
    for e in marking.included:
        set_bit(buf, (e - 1) * STATUS_BITS + INCLUDED)
    for e in marking.pending:
        set_bit(buf, (e - 1) * STATUS_BITS + PENDING)
    for e in marking.executed:
        set_bit(buf, (e - 1) * STATUS_BITS + EXECUTED)
    return PackedMarking(bytes(buf), event_count)


def decode_marking(packed: PackedMarking | bytes, event_count: int | None = None) -> Marking:
    if isinstance(packed, PackedMarking):
        data = packed.data
        event_count = packed.event_count if event_count is None else event_count
    else:
        data = packed
    if event_count is None:
        raise TypeError("event_count is required for raw bytes")
    if len(data) != marking_len(event_count):
        raise BadLength(f"marking of {event_count} events needs {marking_len(event_count)} bytes, got {len(data)}")
    if event_count % 2 and data[-1] & 0x0F:
        raise TrailingBitsSet("bits past the last status group are set")
    executed, pending, included = [], [], []
    for e in range(1, event_count + 1):
        nib = get_field(data, (e - 1) * STATUS_BITS, STATUS_BITS)
        if nib & 0b0001:
            raise ReservedBitSet(f"reserved status bit set for event {e}")
        if nib & 0b1000:
            included.append(e)
        if nib & 0b0100:
            pending.append(e)
        if nib & 0b0010:
            executed.append(e)
    return Marking.of(executed, pending, included)


# -- links -------------------------------------------------------------------

@dataclass(frozen=True)
class PackedLinks:
    data: bytes
    owner: int


def encode_links(graph: DcrGraph, e: int) -> PackedLinks:
    if not 1 <= e <= graph.event_count:
        raise UnknownEvent(f"event {e} outside 1..{graph.event_count}")
    buf = bytearray(links_len(graph.event_count))
    partners = (
        (RelationKind.INCLUDE, graph.includes(e)),
        (RelationKind.EXCLUDE, graph.excludes(e)),
        (RelationKind.MILESTONE, graph.milestones_of(e)),
        (RelationKind.CONDITION, graph.conditions_of(e)),
        (RelationKind.RESPONSE, graph.responses(e)),
    )
    for kind, others in partners:
        for p in others:
            set_bit(buf, (p - 1) * LINK_BITS + kind)
    return PackedLinks(bytes(buf), e)


def encode_all_links(graph: DcrGraph) -> list[PackedLinks]:
    return [encode_links(graph, e) for e in graph.events]


def decode_links(rows: Sequence[PackedLinks | bytes], event_count: int) -> frozenset[Relation]:
    """Rebuild the relation set from one links row per event (in event order)."""
    if len(rows) != event_count:
        raise BadLength(f"expected {event_count} links rows, got {len(rows)}")
    width = event_count * LINK_BITS
    rels = set()
    for owner, row in enumerate(rows, start=1):
        data = row.data if isinstance(row, PackedLinks) else row
        if len(data) != links_len(event_count):
            raise BadLength(f"links row of event {owner} has {len(data)} bytes, "
                            f"expected {links_len(event_count)}")
        tail = len(data) * 8 - width
        if tail and data[-1] & ((1 << tail) - 1):
            raise TrailingBitsSet(f"links row of event {owner} has bits past partner {event_count}")
        for partner in range(1, event_count + 1):
            group = get_field(data, (partner - 1) * LINK_BITS, LINK_BITS)
            if not group:
                continue
            for kind in RelationKind:
                if group & (0b10000 >> kind):
                    if kind.is_out_link:
                        rels.add(Relation(owner, kind, partner))
                    else:
                        rels.add(Relation(partner, kind, owner))
    return frozenset(rels)


# -- slot layout -------------------------------------------------------------

@dataclass(frozen=True)
class KvSlot:
    scope: Literal["global", "local"]
    account_index: int = 0


GLOBAL_SLOT = KvSlot("global", 0)


def slot_for_pair(pair_ordinal: int) -> KvSlot:
    """Storage slot of the ``pair_ordinal``-th pair (1-based creation order).

    The first 64 pairs are global; later ones fill the four storage
    accounts sixteen at a time.
    """
    if not 1 <= pair_ordinal <= TOTAL_PAIRS:
        raise CapacityExceeded(f"pair ordinal {pair_ordinal} outside 1..{TOTAL_PAIRS}")
    if pair_ordinal <= GLOBAL_PAIRS:
        return GLOBAL_SLOT
    return KvSlot("local", (pair_ordinal - GLOBAL_PAIRS - 1) // LOCAL_PAIRS)


def links_ordinal(e: int) -> int:
    return GRAPH_PAIRS + 2 * (e - 1) + 1


def executor_ordinal(e: int) -> int:
    return GRAPH_PAIRS + 2 * (e - 1) + 2


def executor_key(e: int) -> bytes:
    return b"%d" % e


def links_key(e: int) -> bytes:
    return b"%d_links" % e


def pair_count(event_count: int) -> int:
    return GRAPH_PAIRS + 2 * event_count


def capacity_check(event_count: int) -> bool:
    # 62 events would also fit the 128 pairs (127); the stated limit of 61 governs
    return 0 <= event_count <= MAX_EVENTS and pair_count(event_count) <= TOTAL_PAIRS


def storage_accounts_needed(event_count: int) -> int:
    overflow = max(0, pair_count(event_count) - GLOBAL_PAIRS)
    return -(-overflow // LOCAL_PAIRS)


# -- whole-state image -------------------------------------------------------

@dataclass(frozen=True)
class StatePair:
    ordinal: int
    slot: KvSlot
    key: bytes
    value: bytes | int


@dataclass(frozen=True)
class GraphStateImage:
    creator: bytes
    marking: PackedMarking
    event_count: int
    executors: tuple[bytes, ...]
    links: tuple[PackedLinks, ...]

    def pairs(self) -> list[StatePair]:
        """All pairs in creation order with their assigned slots."""
        out = [
            StatePair(1, slot_for_pair(1), KEY_CREATOR, self.creator),
            StatePair(2, slot_for_pair(2), KEY_MARKING, self.marking.data),
            StatePair(3, slot_for_pair(3), KEY_EVENT_COUNT, self.event_count),
        ]
        for e in range(1, self.event_count + 1):
            lo, xo = links_ordinal(e), executor_ordinal(e)
            out.append(StatePair(lo, slot_for_pair(lo), links_key(e), self.links[e - 1].data))
            out.append(StatePair(xo, slot_for_pair(xo), executor_key(e), self.executors[e - 1]))
        return out


def state_image(graph: DcrGraph) -> GraphStateImage:
    if not capacity_check(graph.event_count):
        raise CapacityExceeded(f"{graph.event_count} events do not fit")
    return GraphStateImage(
        creator=graph.creator,
        marking=encode_marking(graph.marking, graph.event_count),
        event_count=graph.event_count,
        executors=graph.executors,
        links=tuple(encode_all_links(graph)),
    )


def graph_from_image(image: GraphStateImage) -> DcrGraph:
    from .dcr import new_graph

    n = image.event_count
    return new_graph(
        n,
        decode_links(image.links, n),
        decode_marking(image.marking, n),
        image.executors,
        image.creator,
    )


def value_len(value: bytes | int) -> int:
    return 8 if isinstance(value, int) else len(value)


def pairs_fit(pairs: Iterable[StatePair]) -> bool:
    return all(len(p.key) + value_len(p.value) <= MAX_KV_BYTES for p in pairs)
