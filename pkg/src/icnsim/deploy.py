"""Executable deployments: spec in, simulated ICN-over-SDN network out.

Builds the reactive objects (TM, controller, switches, hosts), cables them
per the topology spec, and orchestrates bootstrap in spec order.  All
randomness is derived from the spec seed through named substreams, so a
(spec, seed) pair fully determines every event and measurement.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, replace
from random import Random
from typing import Dict, List, Optional, Tuple

from . import wire
from .bootstrap import (Arm, Broadcast, Directive, NodeBootstrapFsm, NodeConfig, Notify,
                        Reply, BootstrapState, Send, Timers, TmEngine, apply_update,
                        responder_on_discovery, NotBootstrapped)
from .fabric import (Controller, FlowTable, IcnPacket, LOCAL_PORT, LinkDown, LinkUp,
                     MISS, PacketIn, StatsTick, SwitchAttached, decode_packet,
                     encode_packet, switch_forward)
from .fid import BitVector, FidParams, fid_matches
from .simnet import (Control, Deliver, MeasurementSpan, NeverCompleted, SimReport,
                     Simulator, Timer, ms)
from .topology import TM_NID, TopologyGraph
from .topospec import TopologySpec
from .wire import CodecError, DiscoveryRequest, ResourceRequest, Update

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FabricDelivery:
    packet: IcnPacket
    src: str
    in_port: int


@dataclass(frozen=True)
class CtlDelivery:
    data: bytes


@dataclass(frozen=True)
class PacketOutCmd:
    port: int
    packet: IcnPacket


class SwitchNode:
    """Forwarding-only SDN switch with an arbitrary-bitmask flow table."""

    def __init__(self, name: str, net: "Deployment"):
        self.name = name
        self.net = net
        self.ports: Dict[int, str] = {}
        self.table = FlowTable()
        self.tx_bytes: Dict[int, int] = {}
        self.drops = 0
        self.local_delivered = 0

    def handle(self, event) -> None:
        kind = event.kind
        if isinstance(kind, Deliver) and isinstance(kind.payload, FabricDelivery):
            self._forward(kind.payload.packet, kind.payload.in_port)
        elif isinstance(kind, Control) and isinstance(kind.event, PacketOutCmd):
            self._emit(kind.event.packet, kind.event.port)
        else:  # pragma: no cover
            log.warning("%s: unhandled event %r", self.name, kind)

    def _forward(self, packet: IcnPacket, in_port: int) -> None:
        result = switch_forward(self.table, packet)
        if result is MISS:
            if packet.fid.is_zero():
                # Unknown ICN traffic on the bootstrap channel goes upstairs.
                self.net.packet_in(self.name, in_port, packet)
            else:
                self.drops += 1
            return
        if packet.hop_limit is not None and packet.hop_limit <= 0:
            self.drops += 1
            return
        onward = packet if packet.hop_limit is None else replace(
            packet, hop_limit=packet.hop_limit - 1)
        for port in result:
            if port == LOCAL_PORT:
                self.local_delivered += 1
            else:
                self._emit(onward, port)

    def _emit(self, packet: IcnPacket, port: int) -> None:
        self.tx_bytes[port] = self.tx_bytes.get(port, 0) + packet.encoded_len()
        self.net.emit(self.name, port, packet)


class HostNode:
    """ICN end host: runs the bootstrap FSM, then consumes and forwards."""

    def __init__(self, name: str, net: "Deployment", rng: Random, timers: Timers):
        self.name = name
        self.net = net
        self.ports: Dict[int, str] = {}
        self.fsm = NodeBootstrapFsm(name, rng, timers)
        self.nid_port: Dict[int, int] = {}
        self.attach_port: Optional[int] = None
        self.data_received = 0
        self._settled = False

    @property
    def config(self):
        return self.fsm.config

    def start(self) -> None:
        self._execute(self.fsm.start())

    def handle(self, event) -> None:
        kind = event.kind
        if isinstance(kind, Deliver) and isinstance(kind.payload, FabricDelivery):
            self._on_packet(kind.payload.packet, kind.payload.in_port)
        elif isinstance(kind, Timer):
            self._execute(self.fsm.on_timeout(kind.timer_id, kind.token))
        else:  # pragma: no cover
            log.warning("%s: unhandled event %r", self.name, kind)
        self._check_settled()

    def _on_packet(self, packet: IcnPacket, in_port: int) -> None:
        if packet.fid.is_zero():
            self._on_link_local(packet, in_port)
            return
        if self.fsm.state != BootstrapState.DONE:
            # Pre-configuration the node owns no identifiers; everything that
            # arrives is treated as addressed to it.
            try:
                msg = wire.decode(packet.payload, self.net.params)
            except CodecError:
                return
            self._execute(self.fsm.on_message(msg, in_port))
            return
        consumed = self.config.ilid is not None and fid_matches(packet.fid, self.config.ilid)
        if consumed:
            self._consume(packet, in_port)
        forward_ports: List[int] = []
        if packet.hop_limit is None or packet.hop_limit > 0:
            for nid, lid in self.config.link_lids.items():
                if not fid_matches(packet.fid, lid):
                    continue
                port = self.nid_port.get(nid)
                if port is not None:
                    forward_ports.append(port)
                else:
                    # Neighbor not yet bound to a port: flood, Bloom style.
                    forward_ports.extend(p for p in self.ports if p != in_port)
        onward = packet if packet.hop_limit is None else replace(
            packet, hop_limit=packet.hop_limit - 1)
        for port in sorted(set(forward_ports)):
            self.net.emit(self.name, port, onward)

    def _on_link_local(self, packet: IcnPacket, in_port: int) -> None:
        try:
            msg = wire.decode(packet.payload, self.net.params)
        except CodecError:
            return
        if isinstance(msg, DiscoveryRequest) and self.fsm.state == BootstrapState.DONE:
            try:
                offer = responder_on_discovery(msg, self.config)
            except NotBootstrapped:
                return
            self.net.emit(self.name, in_port, self.net.link_local_packet(offer))
        elif isinstance(msg, Update) and self.fsm.state == BootstrapState.DONE:
            apply_update(self.config, msg, self.fsm.attach_nid)
            if msg.nid != self.config.nid:
                self.nid_port[msg.nid] = in_port
        elif self.fsm.state != BootstrapState.DONE:
            self._execute(self.fsm.on_message(msg, in_port))

    def _consume(self, packet: IcnPacket, in_port: int) -> None:
        try:
            msg = wire.decode(packet.payload, self.net.params)
        except CodecError:
            self.data_received += 1
            self.net.record_consumed(packet.trace_id, self.name)
            return
        if isinstance(msg, Update):
            apply_update(self.config, msg, self.fsm.attach_nid)
        else:
            self._execute(self.fsm.on_message(msg, in_port))

    def _execute(self, actions) -> None:
        for action in actions:
            if isinstance(action, Broadcast):
                frame = self.net.link_local_packet(action.message)
                for port in sorted(self.ports):
                    self.net.emit(self.name, port, frame)
            elif isinstance(action, Send):
                fid = action.fid if action.fid is not None else BitVector.zero(self.net.params.m)
                packet = IcnPacket(fid, self.net.hop_limit,
                                   wire.encode(action.message, self.net.params),
                                   trace_id=self.net.next_trace())
                self.net.emit(self.name, action.port, packet)
            elif isinstance(action, Arm):
                self.net.sim.schedule_in(action.delay_us, f"node:{self.name}",
                                         Timer(action.timer_id, action.token))

    def _check_settled(self) -> None:
        if self._settled:
            return
        if self.fsm.state == BootstrapState.DONE:
            self._settled = True
            self.attach_port = self.fsm._selected[1] if self.fsm._selected else None
            if self.fsm.attach_nid is not None and self.attach_port is not None:
                self.nid_port[self.fsm.attach_nid] = self.attach_port
            self.net.node_done(self.name)
        elif self.fsm.state == BootstrapState.FAILED:
            self._settled = True
            self.net.node_failed(self.name, "bootstrap retries exhausted")


class TmNode:
    """The Topology Manager as a network endpoint plus serial message server."""

    def __init__(self, name: str, net: "Deployment", graph: TopologyGraph):
        self.name = name
        self.net = net
        self.graph = graph
        self.engine = TmEngine(graph)
        self.ports: Dict[int, str] = {}
        self.direct_ports: Dict[int, int] = {}
        self.config = None  # set after construction, needs zero tmfid
        self.service_us = 0
        self.alloc_us = 0
        self.wall_alloc_s = 0.0
        self.data_received = 0
        self._queue: deque = deque()
        self._busy = False
        self._pending_actions: List = []
        self._pending_origin: Tuple[str, Optional[int]] = ("ctl", None)

    def handle(self, event) -> None:
        kind = event.kind
        if isinstance(kind, Deliver):
            if isinstance(kind.payload, FabricDelivery):
                self._on_packet(kind.payload.packet, kind.payload.in_port)
            elif isinstance(kind.payload, CtlDelivery):
                self._on_ctl(kind.payload.data)
        elif isinstance(kind, Timer) and kind.timer_id == "svc":
            self._service_done()
        else:  # pragma: no cover
            log.warning("tm: unhandled event %r", kind)

    # -- packet plane ---------------------------------------------------------

    def _on_packet(self, packet: IcnPacket, in_port: int) -> None:
        if packet.fid.is_zero():
            self._on_link_local(packet, in_port)
            return
        if packet.hop_limit is None or packet.hop_limit > 0:
            onward = packet if packet.hop_limit is None else replace(
                packet, hop_limit=packet.hop_limit - 1)
            for (src, dst), link in sorted(self.graph.links.items()):
                if src != TM_NID or not fid_matches(packet.fid, link.lid):
                    continue
                port = self.direct_ports.get(dst)
                if port is not None:
                    self.net.emit(self.name, port, onward)
        # TM-bound FIDs carry no iLID for the TM, so arrival means delivery.
        try:
            msg = wire.decode(packet.payload, self.net.params)
        except CodecError:
            self.data_received += 1
            self.net.record_consumed(packet.trace_id, self.name)
            return
        self._enqueue(msg, "fabric", in_port)

    def _on_link_local(self, packet: IcnPacket, in_port: int) -> None:
        try:
            msg = wire.decode(packet.payload, self.net.params)
        except CodecError:
            return
        if isinstance(msg, DiscoveryRequest):
            offer = responder_on_discovery(msg, self.config)
            self.net.emit(self.name, in_port, self.net.link_local_packet(offer))
        elif isinstance(msg, Update):
            apply_update(self.config, msg, None)
            self.direct_ports[msg.nid] = in_port
        else:
            # Directly attached nodes address the TM with its own (all-zero)
            # TMFID, so handshake messages arrive on the default-FID channel.
            self._enqueue(msg, "fabric", in_port)

    def _on_ctl(self, data: bytes) -> None:
        try:
            msg = wire.decode(data, self.net.params)
        except CodecError as exc:
            log.warning("tm: bad control frame: %s", exc)
            return
        self._enqueue(msg, "ctl", None)

    # -- serial processing ------------------------------------------------------

    def _enqueue(self, msg, origin: str, in_port: Optional[int]) -> None:
        self._queue.append((msg, origin, in_port))
        if not self._busy:
            self._start_next()

    def _start_next(self) -> None:
        msg, origin, in_port = self._queue.popleft()
        self._busy = True
        t0 = time.perf_counter()
        if isinstance(msg, wire.LinkEvent):
            try:
                result = self.engine.on_link_event(msg)
            except Exception as exc:
                log.warning("tm: link event failed: %s", exc)
                result = None
        elif isinstance(msg, wire.LinkStatsReport):
            try:
                result = self.engine.on_link_stats(msg)
            except Exception as exc:
                log.warning("tm: stats report rejected: %s", exc)
                result = None
        else:
            result = self.engine.on_message(msg)
        self.wall_alloc_s += time.perf_counter() - t0
        lids = result.lids_allocated if result else 0
        if (origin == "fabric" and in_port is not None
                and isinstance(msg, ResourceRequest) and msg.attach_nid == TM_NID):
            nid = self.engine.nid_for_nonce(msg.nonce)
            if nid is not None:
                self.direct_ports[nid] = in_port
        self._pending_actions = result.actions if result else []
        self._pending_origin = (origin, in_port)
        cost = self.service_us + lids * self.alloc_us
        self.net.sim.schedule_in(cost, f"node:{self.name}", Timer("svc"))

    def _service_done(self) -> None:
        origin, _ = self._pending_origin
        for action in self._pending_actions:
            if isinstance(action, Reply):
                if origin == "ctl":
                    self.net.ctl_to_controller(action.message)
                else:
                    self._route_to_node(action.message.nid, action.message)
            elif isinstance(action, Directive):
                d = action.directive
                self.net.ctl_to_controller(wire.RuleInstallFrame(
                    d.install, d.nonce, d.switch_nid, d.dst_nid, d.lid, d.lid,
                    priority=100))
            elif isinstance(action, Notify):
                self._route_to_node(action.nid, action.message)
        self._pending_actions = []
        self._busy = False
        if self._queue:
            self._start_next()

    def _route_to_node(self, nid: int, message) -> None:
        """Source-route a message over the fabric using the downstream FID."""
        try:
            path = self.graph.shortest_path(TM_NID, nid)
        except Exception as exc:
            log.warning("tm: cannot route to %d: %s", nid, exc)
            return
        if not path:
            return
        fid = BitVector.zero(self.net.params.m)
        for link in path:
            fid = fid | link.lid
        ilid = self.graph.nodes[nid].ilid
        if ilid is not None:
            fid = fid | ilid
        port = self.direct_ports.get(path[0].dst)
        if port is None:
            log.warning("tm: no port binding for direct neighbor %d", path[0].dst)
            return
        packet = IcnPacket(fid, self.net.hop_limit,
                           wire.encode(message, self.net.params),
                           trace_id=self.net.next_trace())
        self.net.emit(self.name, port, packet)


class Deployment:
    """A fully wired simulated deployment driven by a topology spec."""

    def __init__(self, spec: TopologySpec, seed: Optional[int] = None,
                 mode: str = "sequential"):
        spec.validate()
        self.spec = spec
        self.seed = spec.seed if seed is None else seed
        self.mode = mode
        self.params = FidParams(m=spec.m, k=spec.k)
        d = spec.defaults
        self.timers = Timers(ms(d.discovery_wait_ms), ms(d.request_timeout_ms), d.max_retries)
        self.hop_limit = d.hop_limit
        self.ctl_delay_us = ms(d.control_delay_ms)
        self.default_capacity = d.capacity_mbps
        self.sim = Simulator()
        self.controller_rng = Random(f"{self.seed}:controller")
        self.tm_name = spec.tm_name()

        graph_rng = Random(f"{self.seed}:lids")
        self.graph = TopologyGraph(self.params, graph_rng)
        self.tm = TmNode(self.tm_name, self, self.graph)
        self.tm.service_us = ms(d.tm_service_ms)
        self.tm.alloc_us = ms(d.tm_alloc_per_lid_ms)
        self.tm.config = NodeConfig(nid=TM_NID, ilid=self.graph.nodes[TM_NID].ilid,
                                    tmfid=BitVector.zero(self.params.m))

        self.switches: Dict[str, SwitchNode] = {}
        self.hosts: Dict[str, HostNode] = {}
        kinds = spec.node_kinds()
        for node in spec.nodes:
            if node.kind == "switch":
                self.switches[node.name] = SwitchNode(node.name, self)
            elif node.kind == "host":
                rng = Random(f"{self.seed}:nonce:{node.name}")
                self.hosts[node.name] = HostNode(node.name, self, rng, self.timers)

        # Cable everything: port indices follow spec link order per node.
        self._wiring: Dict[Tuple[str, int], Tuple[str, int]] = {}
        self._pair_props: Dict[frozenset, Tuple[int, float]] = {}
        for link in spec.links:
            pa = self._next_port(link.a)
            pb = self._next_port(link.b)
            self._node(link.a).ports[pa] = link.b
            self._node(link.b).ports[pb] = link.a
            self._wiring[(link.a, pa)] = (link.b, pb)
            self._wiring[(link.b, pb)] = (link.a, pa)
            cap = link.capacity_mbps if link.capacity_mbps is not None else self.default_capacity
            self._pair_props[frozenset((link.a, link.b))] = (ms(link.delay_ms), cap)

        self.controller = Controller(self)
        self.down_pairs: set = set()
        self.drop_filter = None
        self.traces: Dict[int, List[Tuple[str, str]]] = {}
        self.consumed: Dict[int, List[str]] = {}
        self._trace_counter = 0
        self._order = [n.name for n in spec.nodes if n.kind != "tm"]
        self._order_idx = 0
        self.failures: Dict[str, str] = {}
        self._completed: set = set()
        self._reported_pairs: set = set()
        self._kinds = kinds

        self.sim.register(f"node:{self.tm_name}", self.tm.handle)
        for name, sw in self.switches.items():
            self.sim.register(f"node:{name}", sw.handle)
        for name, host in self.hosts.items():
            self.sim.register(f"node:{name}", host.handle)
        self.sim.register("ctl", self._controller_handle)
        self.sim.register("orch", self._orch_handle)

    # -- construction helpers ---------------------------------------------------

    def _node(self, name: str):
        if name == self.tm_name:
            return self.tm
        return self.switches.get(name) or self.hosts[name]

    def _next_port(self, name: str) -> int:
        return len(self._node(name).ports)

    # -- plumbing used by nodes and the controller -------------------------------

    @property
    def tm_graph(self) -> TopologyGraph:
        return self.graph

    def next_trace(self) -> int:
        self._trace_counter += 1
        return self._trace_counter

    def link_local_packet(self, message) -> IcnPacket:
        return IcnPacket(BitVector.zero(self.params.m), self.hop_limit,
                         wire.encode(message, self.params), trace_id=self.next_trace())

    def emit(self, src: str, port: int, packet: IcnPacket) -> None:
        dest = self._wiring.get((src, port))
        if dest is None:
            log.warning("%s: emission on unwired port %d", src, port)
            return
        dst, dst_port = dest
        pair = frozenset((src, dst))
        if pair in self.down_pairs:
            return
        if self.drop_filter is not None and self.drop_filter(src, dst, packet):
            return
        delay_us, _ = self._pair_props[pair]
        self.traces.setdefault(packet.trace_id, []).append((src, dst))
        self.sim.schedule_in(delay_us, f"node:{dst}",
                             Deliver(FabricDelivery(packet, src, dst_port), (src, dst)))

    def packet_in(self, switch: str, in_port: int, packet: IcnPacket) -> None:
        data = encode_packet(packet, self.params)
        self.sim.schedule_in(self.ctl_delay_us, "ctl",
                             Control(PacketIn(switch, in_port, data)))

    def packet_out(self, switch: str, port: int, packet: IcnPacket) -> None:
        packet = replace(packet, trace_id=self.next_trace())
        self.sim.schedule_in(self.ctl_delay_us, f"node:{switch}",
                             Control(PacketOutCmd(port, packet)))

    def ctl_send(self, message) -> None:
        """Controller -> TM over the ICN-SDN interface."""
        data = wire.encode(message, self.params)
        self.sim.schedule_in(self.ctl_delay_us, f"node:{self.tm_name}",
                             Deliver(CtlDelivery(data), "ctl"))

    def ctl_to_controller(self, message) -> None:
        """TM -> controller over the ICN-SDN interface."""
        data = wire.encode(message, self.params)
        self.sim.schedule_in(self.ctl_delay_us, "ctl", Deliver(CtlDelivery(data), "ctl"))

    def link_delay_ms(self, a: str, b: str) -> float:
        return self._pair_props[frozenset((a, b))][0] / 1000

    def link_capacity_mbps(self, switch_name: str, port: int) -> float:
        peer = self.switches[switch_name].ports[port]
        return self._pair_props[frozenset((switch_name, peer))][1]

    def record_consumed(self, trace_id: int, name: str) -> None:
        self.consumed.setdefault(trace_id, []).append(name)

    def _controller_handle(self, event) -> None:
        kind = event.kind
        if isinstance(kind, Control):
            self.controller.on_control_event(kind.event)
        elif isinstance(kind, Deliver) and isinstance(kind.payload, CtlDelivery):
            try:
                msg = wire.decode(kind.payload.data, self.params)
            except CodecError as exc:
                log.warning("controller: bad ctl frame: %s", exc)
                return
            self.controller.on_ctl_message(msg)

    # -- orchestration ------------------------------------------------------------

    def run_bootstrap(self, limit_us: int = 0) -> SimReport:
        """Bootstrap every node in spec order; returns the finished report."""
        if limit_us <= 0:
            limit_us = 10_000_000 + 5_000_000 * len(self._order)
        self.sim.schedule_in(0, "orch", Timer("next"))
        self.sim.run_until_idle(limit_us)
        return self.report()

    def _orch_handle(self, event) -> None:
        if isinstance(event.kind, Timer) and event.kind.timer_id == "next":
            self._start_next_node()

    def _start_next_node(self) -> None:
        while self._order_idx < len(self._order):
            name = self._order[self._order_idx]
            self._order_idx += 1
            if name in self.switches:
                attach = self._find_attach_point(name)
                if attach is None:
                    self.failures[name] = "no ICN-enabled attach point"
                    continue
                self.sim.begin_span(f"bootstrap:{name}")
                attach_port = next(p for p, n in self._node(attach).ports.items() if n == name)
                new_port = next(p for p, n in self.switches[name].ports.items() if n == attach)
                self._reported_pairs.add(frozenset((name, attach)))
                self.sim.schedule_in(0, "ctl", Control(
                    SwitchAttached(name, attach, attach_port, new_port)))
                return
            host = self.hosts[name]
            self.sim.begin_span(f"bootstrap:{name}")
            if self.mode == "concurrent":
                host.start()
                continue
            host.start()
            return

    def _find_attach_point(self, switch_name: str) -> Optional[str]:
        for port in sorted(self.switches[switch_name].ports):
            neighbor = self.switches[switch_name].ports[port]
            if neighbor == self.tm_name or neighbor in self.controller.enabled:
                return neighbor
        return None

    def switch_attach_complete(self, name: str) -> None:
        """Controller callback: proxy handshake finished, rules installed."""
        self.sim.end_span(f"bootstrap:{name}")
        self._completed.add(name)
        nid = self.controller.enabled[name]
        if name in self.tm.ports.values():
            port = next(p for p, n in self.tm.ports.items() if n == name)
            self.tm.direct_ports[nid] = port
        self._record_link_delay(name)
        self._scan_extra_links()
        self.sim.schedule_in(0, "orch", Timer("next"))

    def node_done(self, name: str) -> None:
        self.sim.end_span(f"bootstrap:{name}")
        self._completed.add(name)
        self._record_link_delay(name)
        self._scan_extra_links()
        if self.mode != "concurrent":
            self.sim.schedule_in(0, "orch", Timer("next"))

    def _record_link_delay(self, name: str) -> None:
        # Handshake-allocated graph links learn the physical delay afterwards;
        # the protocol itself never carries it.
        nid = self.nid_of(name)
        if nid is None:
            return
        for (src, dst), link in list(self.graph.links.items()):
            if nid not in (src, dst) or link.delay_ms:
                continue
            other = dst if src == nid else src
            other_name = next((n for n in self._kinds if self.nid_of(n) == other), None)
            if other_name is None:
                continue
            pair = frozenset((name, other_name))
            if pair in self._pair_props:
                self.graph.links[(src, dst)] = replace(
                    link, delay_ms=self._pair_props[pair][0] / 1000)

    def node_failed(self, name: str, reason: str) -> None:
        self.failures[name] = reason
        if self.mode != "concurrent":
            self.sim.schedule_in(0, "orch", Timer("next"))

    def nid_of(self, name: str) -> Optional[int]:
        if name == self.tm_name:
            return TM_NID
        if name in self.switches:
            return self.controller.enabled.get(name)
        host = self.hosts[name]
        return host.config.nid if host.fsm.state == BootstrapState.DONE else None

    def _scan_extra_links(self) -> None:
        """Report freshly usable switch/host links the handshakes didn't cover."""
        for pair in self._pair_props:
            if pair in self._reported_pairs or pair in self.down_pairs:
                continue
            a, b = sorted(pair)
            nid_a, nid_b = self.nid_of(a), self.nid_of(b)
            if nid_a is None or nid_b is None:
                continue
            if (nid_a, nid_b) in self.graph.links or (nid_a, nid_b) in self.graph.down_links:
                self._reported_pairs.add(pair)
                continue
            self._reported_pairs.add(pair)
            self.sim.schedule_in(0, "ctl", Control(LinkUp(a, b)))
            if self.tm_name in pair:
                other = b if a == self.tm_name else a
                port = next(p for p, n in self.tm.ports.items() if n == other)
                self.tm.direct_ports[self.nid_of(other)] = port

    # -- faults and probes ---------------------------------------------------------

    def fail_link(self, a: str, b: str) -> None:
        self.down_pairs.add(frozenset((a, b)))
        self.sim.schedule_in(0, "ctl", Control(LinkDown(a, b)))

    def restore_link(self, a: str, b: str) -> None:
        self.down_pairs.discard(frozenset((a, b)))
        self.sim.schedule_in(0, "ctl", Control(LinkUp(a, b)))

    def tick_stats(self, period_us: int, times: int = 1) -> None:
        for i in range(1, times + 1):
            self.sim.schedule_in(period_us * i, "ctl", Control(StatsTick(period_us)))

    def inject_probe(self, host_name: str) -> int:
        """Send a packet stamped with the host's own TMFID towards the TM."""
        host = self.hosts[host_name]
        fid = host.config.tmfid
        packet = IcnPacket(fid, self.hop_limit, b"PROBE", trace_id=self.next_trace())
        self.emit(host_name, host.attach_port, packet)
        return packet.trace_id

    def inject_data(self, src: str, dst: str) -> int:
        """Unicast data packet between committed nodes, FID from the TM graph."""
        src_nid, dst_nid = self.nid_of(src), self.nid_of(dst)
        path = self.graph.shortest_path(src_nid, dst_nid)
        fid = BitVector.zero(self.params.m)
        for link in path:
            fid = fid | link.lid
        ilid = self.graph.nodes[dst_nid].ilid
        if ilid is not None:
            fid = fid | ilid
        packet = IcnPacket(fid, self.hop_limit, b"DATA", trace_id=self.next_trace())
        node = self._node(src)
        first = path[0].dst if path else dst_nid
        if isinstance(node, HostNode):
            port = node.nid_port.get(first, node.attach_port)
        else:
            port = self.tm.direct_ports[first]
        self.emit(src, port, packet)
        return packet.trace_id

    def run_until_idle(self, limit_us: int = 10 ** 12) -> int:
        return self.sim.run_until_idle(limit_us)

    # -- reporting -------------------------------------------------------------------

    def report(self) -> SimReport:
        states: Dict[str, str] = {self.tm_name: "TM"}
        for name, sw in self.switches.items():
            states[name] = "ENABLED" if name in self.controller.enabled else "PENDING"
        for name, host in self.hosts.items():
            states[name] = host.fsm.state.name
        return self.sim.report(states)

    def bootstrap_span(self, name: str) -> MeasurementSpan:
        label = f"bootstrap:{name}"
        for span in self.sim.spans:
            if span.label == label:
                return span
        raise NeverCompleted(f"{name} never finished bootstrapping")

    def all_done(self) -> bool:
        return (all(n in self.controller.enabled for n in self.switches)
                and all(h.fsm.state == BootstrapState.DONE for h in self.hosts.values()))
