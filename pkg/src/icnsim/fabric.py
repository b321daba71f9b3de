"""Emulated SDN data and control planes.

Switches hold arbitrary-bitmask flow tables keyed on the packet FID; a
packet is emitted on every matching port, which yields native multicast
for OR-ed FIDs.  A packet that matches nothing is silently dropped unless
it carries the all-zero bootstrap FID, in which case it escalates to the
controller as a PacketIn (that is how discovery broadcasts from
unconfigured nodes reach the ICN application while stray Bloom
false-positive copies die in the fabric).

The controller hosts the ICN application: it proxies switch bootstraps
towards the TM over the ICN-SDN channel, answers host discovery via
PacketIn/PacketOut, relays link events, applies the TM's flow-rule
directives, and periodically reports link statistics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple, Union

from . import wire
from .bootstrap import RULE_PRIORITY
from .fid import BitVector, Fid, FidParams, LinkId
from .topology import (LinkEvent, LinkEventKind, LinkStatsReport, NodeKind,
                       RuleDirective, StatsEntry, TM_NID, UnknownLink)
from .wire import (CodecError, DiscoveryOffer, DiscoveryRequest, OfferAccepted,
                   ResourceAccepted, ResourceOffer, ResourceRequest, RuleInstallFrame)

log = logging.getLogger(__name__)

LOCAL_PORT = -1


class FabricError(Exception):
    pass


class AttachNotEnabled(FabricError):
    """Attachment switch has no ICN flow rules yet (and is not the seed)."""


@dataclass(frozen=True)
class FlowRule:
    """Arbitrary-bitmask match: packet matches when fid & mask == value."""

    mask: BitVector
    value: BitVector
    out_port: int
    priority: int = RULE_PRIORITY

    def __post_init__(self) -> None:
        if self.value.value & self.mask.value != self.value.value:
            raise ValueError("rule value must be covered by its mask")

    def matches(self, fid: Fid) -> bool:
        return fid.value & self.mask.value == self.value.value


@dataclass(frozen=True)
class IcnPacket:
    """Data-plane frame: source-route FID, hop budget, opaque payload."""

    fid: Fid
    hop_limit: Optional[int]
    payload: bytes
    trace_id: int = 0

    def encoded_len(self) -> int:
        return self.fid.width // 8 + 1 + len(self.payload)


class Miss:
    """Returned by switch_forward when no rule matches."""

    def __repr__(self) -> str:  # pragma: no cover
        return "Miss"


MISS = Miss()


class FlowTable:
    """Priority-ordered rule list with multi-match semantics."""

    def __init__(self) -> None:
        self.rules: List[FlowRule] = []

    def add(self, rule: FlowRule) -> None:
        if rule in self.rules:
            return
        self.rules.append(rule)
        # Canonical order keeps tables comparable across install sequences.
        self.rules.sort(key=lambda r: (-r.priority, r.mask.value, r.value.value, r.out_port))

    def remove(self, mask: BitVector, value: BitVector) -> bool:
        before = len(self.rules)
        self.rules = [r for r in self.rules if not (r.mask == mask and r.value == value)]
        return len(self.rules) != before

    def match_ports(self, fid: Fid) -> List[int]:
        ports: List[int] = []
        for rule in self.rules:
            if rule.matches(fid) and rule.out_port not in ports:
                ports.append(rule.out_port)
        return ports

    def snapshot(self) -> Tuple[FlowRule, ...]:
        return tuple(self.rules)

    def __len__(self) -> int:
        return len(self.rules)


def switch_forward(table: FlowTable, packet: IcnPacket) -> Union[List[int], Miss]:
    """All out-ports whose rules match the packet FID, or Miss."""
    ports = table.match_ports(packet.fid)
    return ports if ports else MISS


def encode_packet(packet: IcnPacket, params: FidParams) -> bytes:
    hop = 255 if packet.hop_limit is None else min(packet.hop_limit, 255)
    return packet.fid.to_bytes() + bytes([hop]) + packet.payload


def decode_packet(data: bytes, params: FidParams) -> IcnPacket:
    width_bytes = params.m // 8
    if len(data) < width_bytes + 1:
        raise CodecError("packet shorter than FID header")
    fid = BitVector.from_bytes(data[:width_bytes])
    return IcnPacket(fid, data[width_bytes], data[width_bytes + 1:])


# -- control events -----------------------------------------------------------

@dataclass(frozen=True)
class SwitchAttached:
    new_switch: str
    attach_switch: str  # switch name, or the TM's name for the seed switch
    attach_port: int    # port on attach side towards the new switch
    new_port: int       # port on the new switch towards the attach side


@dataclass(frozen=True)
class PacketIn:
    switch: str
    in_port: int
    data: bytes


@dataclass(frozen=True)
class LinkDown:
    a: str
    b: str


@dataclass(frozen=True)
class LinkUp:
    a: str
    b: str


@dataclass(frozen=True)
class StatsTick:
    period_us: int


ControlEvent = Union[SwitchAttached, PacketIn, LinkDown, LinkUp, StatsTick]


@dataclass
class _ProxyAttach:
    new_switch: str
    attach_switch: str
    attach_port: int
    new_port: int
    nid: int = 0


class Controller:
    """ICN application on the SDN controller.

    ``net`` is the hosting deployment; it provides switch access, the
    control channel towards the TM, PacketOut injection and read-only
    access to the TM graph (the ICN-SDN interface models queries as
    synchronous reads, frames as delayed messages).
    """

    def __init__(self, net) -> None:
        self.net = net
        self.params: FidParams = net.params
        self.enabled: Dict[str, int] = {}       # switch name -> NID
        self.nid_names: Dict[int, str] = {TM_NID: net.tm_name}
        self.pending_proxy: Dict[int, _ProxyAttach] = {}
        self.pending_discovery: Dict[int, Tuple[str, int]] = {}
        self.rule_bindings: Dict[Tuple[str, int], int] = {}  # (switch, lid value) -> port
        self.packet_in_count = 0
        self.audit_drops = 0
        self._stats_base: Dict[Tuple[str, int], int] = {}

    # -- control events ------------------------------------------------------

    def on_control_event(self, event: ControlEvent) -> None:
        if isinstance(event, SwitchAttached):
            self.on_switch_attached(event)
        elif isinstance(event, PacketIn):
            self.on_packet_in(event)
        elif isinstance(event, (LinkDown, LinkUp)):
            self.on_link_change(event)
        elif isinstance(event, StatsTick):
            self.on_stats_tick(event)
        else:  # pragma: no cover
            log.warning("controller: unknown control event %r", event)

    def on_switch_attached(self, event: SwitchAttached) -> None:
        """Proxy the bootstrap handshake for a newly cabled switch."""
        if event.attach_switch != self.net.tm_name and event.attach_switch not in self.enabled:
            raise AttachNotEnabled(f"{event.attach_switch} is not ICN-enabled")
        attach_nid = TM_NID if event.attach_switch == self.net.tm_name \
            else self.enabled[event.attach_switch]
        nonce = 0
        while nonce == 0 or nonce in self.pending_proxy:
            nonce = self.net.controller_rng.getrandbits(64)
        self.pending_proxy[nonce] = _ProxyAttach(event.new_switch, event.attach_switch,
                                                 event.attach_port, event.new_port)
        self.net.ctl_send(ResourceRequest(nonce, NodeKind.SDN_SWITCH, attach_nid))

    def on_ctl_message(self, msg: wire.Message) -> None:
        """Frame arriving from the TM over the ICN-SDN channel."""
        if isinstance(msg, ResourceOffer) and msg.nonce in self.pending_proxy:
            proxy = self.pending_proxy[msg.nonce]
            proxy.nid = msg.nid
            self.nid_names[msg.nid] = proxy.new_switch
            self.net.ctl_send(OfferAccepted(msg.nonce, msg.nid))
        elif isinstance(msg, ResourceAccepted) and msg.nonce in self.pending_proxy:
            proxy = self.pending_proxy.pop(msg.nonce)
            self.enabled[proxy.new_switch] = proxy.nid
            self.net.switch_attach_complete(proxy.new_switch)
        elif isinstance(msg, RuleInstallFrame):
            self.apply_directive_frame(msg)
        else:
            self.audit_drops += 1
            log.info("controller: ctl frame %s dropped", type(msg).__name__)

    def on_packet_in(self, event: PacketIn) -> None:
        """Discovery broadcasts escalate here; everything else is logged away."""
        self.packet_in_count += 1
        try:
            packet = decode_packet(event.data, self.params)
            msg = wire.decode(packet.payload, self.params)
        except CodecError as exc:
            self.audit_drops += 1
            log.info("controller: undecodable PacketIn from %s: %s", event.switch, exc)
            return
        if not isinstance(msg, DiscoveryRequest):
            self.audit_drops += 1
            log.info("controller: %s via PacketIn dropped", type(msg).__name__)
            return
        self.pending_discovery[msg.nonce] = (event.switch, event.in_port)
        nid = self.enabled.get(event.switch)
        if nid is None:
            log.debug("controller: discovery at not-yet-enabled switch %s", event.switch)
            return
        tmfid = self.net.tm_graph.nodes[nid].tmfid
        offer = DiscoveryOffer(msg.nonce, nid, tmfid)
        reply = IcnPacket(BitVector.zero(self.params.m), self.net.hop_limit,
                          wire.encode(offer, self.params))
        self.net.packet_out(event.switch, event.in_port, reply)

    def on_link_change(self, event: Union[LinkDown, LinkUp]) -> None:
        """Relay a physical link transition to the TM, one event per direction."""
        kind = LinkEventKind.REMOVE if isinstance(event, LinkDown) else LinkEventKind.ADD
        nid_a, nid_b = self._name_nid(event.a), self._name_nid(event.b)
        if nid_a is None or nid_b is None:
            raise UnknownLink(f"link {event.a}<->{event.b} has unmanaged endpoints")
        delay = self.net.link_delay_ms(event.a, event.b)
        self.net.ctl_send(LinkEvent(kind, nid_a, nid_b, delay))
        self.net.ctl_send(LinkEvent(kind, nid_b, nid_a, delay))

    def on_stats_tick(self, event: StatsTick) -> None:
        """Report per-LID egress utilization for every managed switch."""
        entries: List[StatsEntry] = []
        period_s = event.period_us / 1e6
        for name in sorted(self.enabled):
            switch = self.net.switches[name]
            for rule in switch.table.rules:
                if rule.out_port == LOCAL_PORT:
                    continue
                counter = switch.tx_bytes.get(rule.out_port, 0)
                key = (name, rule.out_port)
                delta = counter - self._stats_base.get(key, 0)
                self._stats_base[key] = counter
                capacity_bps = self.net.link_capacity_mbps(name, rule.out_port) * 1e6
                util = min(1.0, (delta * 8) / (capacity_bps * period_s)) if period_s > 0 else 0.0
                entries.append(StatsEntry(rule.mask, delta, round(util * 1_000_000)))
        entries.sort(key=lambda e: e.lid.value)
        self.net.ctl_send(LinkStatsReport(tuple(entries)))

    # -- rule management -------------------------------------------------------

    def apply_directive_frame(self, frame: RuleInstallFrame) -> None:
        directive = RuleDirective(frame.install, frame.switch_nid, frame.dst_nid,
                                  frame.mask, frame.nonce)
        self.apply_directive(directive)

    def apply_directive(self, directive: RuleDirective) -> None:
        switch_name = self.nid_names.get(directive.switch_nid)
        if switch_name is None or switch_name == self.net.tm_name:
            if switch_name is None:
                log.warning("controller: directive for unknown switch NID %d", directive.switch_nid)
            return
        table = self.net.switches[switch_name].table
        if not directive.install:
            table.remove(directive.lid, directive.lid)
            return
        port = self._resolve_port(switch_name, directive)
        if port is None:
            log.warning("controller: cannot resolve port for rule on %s towards NID %d",
                        switch_name, directive.dst_nid)
            return
        self.rule_bindings[(switch_name, directive.lid.value)] = port
        table.add(FlowRule(directive.lid, directive.lid, port))

    def _resolve_port(self, switch_name: str, directive: RuleDirective) -> Optional[int]:
        bound = self.rule_bindings.get((switch_name, directive.lid.value))
        if bound is not None:
            return bound
        if directive.nonce and directive.nonce in self.pending_discovery:
            where, port = self.pending_discovery[directive.nonce]
            if where == switch_name:
                # Host attachment: bind the TM-assigned NID to the ingress port.
                ports = self.net.switches[switch_name].ports
                self.nid_names[directive.dst_nid] = ports[port]
                return port
        dst_name = self.nid_names.get(directive.dst_nid)
        if dst_name is not None:
            for port, neighbor in self.net.switches[switch_name].ports.items():
                if neighbor == dst_name:
                    return port
        return None

    def _name_nid(self, name: str) -> Optional[int]:
        if name == self.net.tm_name:
            return TM_NID
        if name in self.enabled:
            return self.enabled[name]
        for nid, known in self.nid_names.items():
            if known == name:
                return nid
        return None
