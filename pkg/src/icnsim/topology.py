"""Topology Manager: authoritative graph, resource allocation, and paths.

The TM is the single writer of the deployment's directed graph.  It hands
out node identifiers (NIDs), per-link LIDs and node-internal iLIDs, caches
each node's FID towards the TM (TMFID) together with the explicit link path
behind it, selects load-aware paths, and repairs paths when links fail.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace
from random import Random
from typing import Dict, List, Optional, Set, Tuple

from .fid import BitVector, Exhausted, Fid, FidParams, LinkId, fid_or, new_lid

TM_NID = 1
UNASSIGNED_NID = 0


class TopologyError(Exception):
    """Base error for topology manager operations."""


class UnknownAttachPoint(TopologyError):
    """Attachment point NID does not exist or is not committed."""


class NoPendingGrant(TopologyError):
    """No tentative grant exists for the given NID."""


class Unreachable(TopologyError):
    """No directed path between the requested endpoints."""


class UnknownLink(TopologyError):
    """Referenced link is not part of the graph."""


class NodeKind(enum.Enum):
    TM = 0
    ICN_NODE = 1
    SDN_SWITCH = 2


class LinkEventKind(enum.Enum):
    ADD = 0
    REMOVE = 1
    UPDATE = 2


@dataclass(frozen=True)
class DirectedLink:
    """One direction of a point-to-point connection, named by its LID."""

    src: int
    dst: int
    lid: LinkId
    delay_ms: float = 0.0
    load: float = 0.0

    def key(self) -> Tuple[int, int]:
        return (self.src, self.dst)


@dataclass
class NodeRecord:
    nid: int
    kind: NodeKind
    ilid: Optional[LinkId] = None
    tmfid: Optional[Fid] = None
    managed_path: Optional[List[DirectedLink]] = None
    committed: bool = False


@dataclass(frozen=True)
class ResourceGrant:
    """Tentative allocation for one attachment: fresh NID, LIDs, optional iLID.

    ``lid`` names the downstream link (attach point -> new node); the reverse
    direction gets ``uplink_lid``.
    """

    nid: int
    lid: LinkId
    uplink_lid: LinkId
    ilid: Optional[LinkId]
    attach_nid: int
    kind: NodeKind


@dataclass(frozen=True)
class LinkEvent:
    kind: LinkEventKind
    src: int
    dst: int
    delay_ms: float = 0.0


@dataclass(frozen=True)
class RepairAction:
    """Recomputed TM path for one node after a topology change."""

    nid: int
    new_tmfid: Fid
    new_path: Tuple[DirectedLink, ...]


@dataclass(frozen=True)
class RuleDirective:
    """Flow-rule change the controller must apply to a switch."""

    install: bool
    switch_nid: int
    dst_nid: int
    lid: LinkId
    nonce: int = 0


@dataclass(frozen=True)
class StatsEntry:
    lid: LinkId
    tx_bytes: int
    utilization_ppm: int


@dataclass(frozen=True)
class LinkStatsReport:
    entries: Tuple[StatsEntry, ...]


@dataclass
class LinkEventOutcome:
    repairs: List[RepairAction] = field(default_factory=list)
    rule_directives: List[RuleDirective] = field(default_factory=list)


class TopologyGraph:
    """The TM's directed graph plus identifier registries.

    Single-writer: mutations must be applied sequentially in event order.
    """

    def __init__(self, params: FidParams, rng: Random):
        self.params = params
        self.rng = rng
        self.nodes: Dict[int, NodeRecord] = {}
        self.links: Dict[Tuple[int, int], DirectedLink] = {}
        self.down_links: Dict[Tuple[int, int], DirectedLink] = {}
        self.lid_registry: Set[LinkId] = set()
        self.next_nid = 2
        self.alloc_wall_s = 0.0  # wall-clock spent assigning identifiers
        self._free_nids: List[int] = []
        self._pending: Dict[int, ResourceGrant] = {}
        tm = NodeRecord(TM_NID, NodeKind.TM, ilid=new_lid(rng, self.lid_registry, params),
                        committed=True)
        tm.tmfid = BitVector.zero(params.m)
        tm.managed_path = []
        self.nodes[TM_NID] = tm

    # -- identifier bookkeeping -------------------------------------------

    def _take_nid(self) -> int:
        if self._free_nids:
            self._free_nids.sort()
            return self._free_nids.pop(0)
        nid = self.next_nid
        self.next_nid += 1
        return nid

    def _release_lid(self, lid: LinkId) -> None:
        self.lid_registry.discard(lid)

    # -- allocation lifecycle ---------------------------------------------

    def allocate_resources(self, kind: NodeKind, attach_nid: int) -> ResourceGrant:
        """Tentatively allocate NID, link LID pair and (non-switch) iLID.

        Creates the new node record and both directed links attach->new and
        new->attach.  Everything stays tentative until :meth:`commit_grant`.
        """
        attach = self.nodes.get(attach_nid)
        if attach is None or not attach.committed:
            raise UnknownAttachPoint(f"attach point {attach_nid} unknown or not committed")
        t0 = time.perf_counter()
        snapshot = set(self.lid_registry)
        try:
            down = new_lid(self.rng, self.lid_registry, self.params)
            up = new_lid(self.rng, self.lid_registry, self.params)
            ilid = None
            if kind != NodeKind.SDN_SWITCH:
                ilid = new_lid(self.rng, self.lid_registry, self.params)
        except Exhausted:
            self.lid_registry = snapshot
            self.alloc_wall_s += time.perf_counter() - t0
            raise
        nid = self._take_nid()
        self.nodes[nid] = NodeRecord(nid, kind, ilid=ilid)
        self.links[(attach_nid, nid)] = DirectedLink(attach_nid, nid, down)
        self.links[(nid, attach_nid)] = DirectedLink(nid, attach_nid, up)
        grant = ResourceGrant(nid, down, up, ilid, attach_nid, kind)
        self._pending[nid] = grant
        self.alloc_wall_s += time.perf_counter() - t0
        return grant

    def commit_grant(self, nid: int) -> NodeRecord:
        """Make a tentative grant permanent and cache the node's TM path."""
        if nid not in self._pending:
            raise NoPendingGrant(f"no pending grant for NID {nid}")
        del self._pending[nid]
        record = self.nodes[nid]
        record.committed = True
        self._refresh_tm_path(nid)
        return record

    def expire_grant(self, nid: int) -> None:
        """Abandoned handshake: return all tentative identifiers to the pool."""
        grant = self._pending.pop(nid, None)
        if grant is None:
            raise NoPendingGrant(f"no pending grant for NID {nid}")
        del self.nodes[nid]
        del self.links[(grant.attach_nid, nid)]
        del self.links[(nid, grant.attach_nid)]
        self._release_lid(grant.lid)
        self._release_lid(grant.uplink_lid)
        if grant.ilid is not None:
            self._release_lid(grant.ilid)
        self._free_nids.append(nid)

    def pending_grant(self, nid: int) -> Optional[ResourceGrant]:
        return self._pending.get(nid)

    def add_link_pair(self, a: int, b: int, delay_ms: float = 0.0) -> Tuple[DirectedLink, DirectedLink]:
        """Allocate LIDs for a new bidirectional connection between committed nodes.

        A previously failed pair is revived with its original LIDs so that
        flow tables can be restored exactly after a link flap.
        """
        for nid in (a, b):
            rec = self.nodes.get(nid)
            if rec is None or not rec.committed:
                raise UnknownAttachPoint(f"endpoint {nid} unknown or not committed")
        out: List[DirectedLink] = []
        for (src, dst) in ((a, b), (b, a)):
            if (src, dst) in self.links:
                raise TopologyError(f"link {src}->{dst} already exists")
            revived = self.down_links.pop((src, dst), None)
            if revived is not None:
                link = replace(revived, delay_ms=delay_ms)
            else:
                link = DirectedLink(src, dst, new_lid(self.rng, self.lid_registry, self.params),
                                    delay_ms=delay_ms)
            self.links[(src, dst)] = link
            out.append(link)
        return out[0], out[1]

    # -- paths --------------------------------------------------------------

    def _neighbors(self, nid: int) -> List[int]:
        return sorted(dst for (src, dst) in self.links if src == nid)

    def _distances_to(self, dst: int) -> Dict[int, int]:
        # BFS over reversed edges gives hop counts towards dst.
        rev: Dict[int, List[int]] = {}
        for (src, d) in self.links:
            rev.setdefault(d, []).append(src)
        dist = {dst: 0}
        frontier = [dst]
        while frontier:
            nxt: List[int] = []
            for node in frontier:
                for pred in rev.get(node, ()):
                    if pred not in dist:
                        dist[pred] = dist[node] + 1
                        nxt.append(pred)
            frontier = nxt
        return dist

    def _path_via(self, src: int, dst: int, dist: Dict[int, int]) -> List[DirectedLink]:
        # Greedy smallest-NID step along the BFS gradient yields the
        # lexicographically smallest shortest path.
        path: List[DirectedLink] = []
        cur = src
        while cur != dst:
            step = min(n for n in self._neighbors(cur) if dist.get(n, -1) == dist[cur] - 1)
            path.append(self.links[(cur, step)])
            cur = step
        return path

    def shortest_path(self, src: int, dst: int) -> List[DirectedLink]:
        """Minimum-hop path; ties resolved towards the lexicographically
        smallest sequence of intermediate NIDs, so the result is unique."""
        if src not in self.nodes or dst not in self.nodes:
            raise UnknownAttachPoint(f"unknown endpoint {src if src not in self.nodes else dst}")
        if src == dst:
            return []
        dist = self._distances_to(dst)
        if src not in dist:
            raise Unreachable(f"no path {src} -> {dst}")
        return self._path_via(src, dst, dist)

    def compute_tmfid(self, nid: int) -> Fid:
        """OR of the LIDs along the node's shortest path to the TM."""
        rec = self.nodes.get(nid)
        if rec is None or not rec.committed:
            raise UnknownAttachPoint(f"node {nid} unknown or not committed")
        return fid_or((l.lid for l in self.shortest_path(nid, TM_NID)), width=self.params.m)

    def _refresh_tm_path(self, nid: int) -> None:
        rec = self.nodes[nid]
        path = self.shortest_path(nid, TM_NID)
        rec.managed_path = path
        rec.tmfid = fid_or((l.lid for l in path), width=self.params.m)

    def te_select_path(self, src: int, dst: int) -> List[DirectedLink]:
        """Bottleneck-optimal path: minimize max link load, then hops, then
        the lexicographic NID sequence."""
        if src not in self.nodes or dst not in self.nodes:
            raise UnknownAttachPoint(f"unknown endpoint {src if src not in self.nodes else dst}")
        if src == dst:
            return []
        full = self._distances_to(dst)
        if src not in full:
            raise Unreachable(f"no path {src} -> {dst}")
        loads = sorted({l.load for l in self.links.values()})
        best_cap = None
        for cap in loads:
            if self._reachable_under(src, dst, cap):
                best_cap = cap
                break
        assert best_cap is not None  # src in full implies reachable at max load
        return self._lex_shortest_under(src, dst, best_cap)

    def _reachable_under(self, src: int, dst: int, cap: float) -> bool:
        seen = {src}
        frontier = [src]
        while frontier:
            nxt = []
            for node in frontier:
                for (s, d), link in self.links.items():
                    if s == node and link.load <= cap and d not in seen:
                        seen.add(d)
                        nxt.append(d)
            if dst in seen:
                return True
            frontier = nxt
        return dst in seen

    def _lex_shortest_under(self, src: int, dst: int, cap: float) -> List[DirectedLink]:
        allowed = {key for key, link in self.links.items() if link.load <= cap}
        rev: Dict[int, List[int]] = {}
        for (s, d) in allowed:
            rev.setdefault(d, []).append(s)
        dist = {dst: 0}
        frontier = [dst]
        while frontier:
            nxt: List[int] = []
            for node in frontier:
                for pred in rev.get(node, ()):
                    if pred not in dist:
                        dist[pred] = dist[node] + 1
                        nxt.append(pred)
            frontier = nxt
        path: List[DirectedLink] = []
        cur = src
        while cur != dst:
            step = min(d for (s, d) in allowed
                       if s == cur and dist.get(d, -1) == dist[cur] - 1)
            path.append(self.links[(cur, step)])
            cur = step
        return path

    # -- link events and resilience ----------------------------------------

    def handle_link_event(self, event: LinkEvent) -> LinkEventOutcome:
        """Apply a reported link change, repair affected TM paths.

        REMOVE keeps the LID bound to the (src, dst) pair so a later ADD of
        the same pair revives identical flow rules.  Affected nodes are found
        by scanning stored explicit paths, never by Bloom membership.
        """
        out = LinkEventOutcome()
        if event.kind == LinkEventKind.REMOVE:
            link = self.links.pop((event.src, event.dst), None)
            if link is None:
                raise UnknownLink(f"link {event.src}->{event.dst} unknown")
            self.down_links[(event.src, event.dst)] = link
            if self.nodes[event.src].kind == NodeKind.SDN_SWITCH:
                out.rule_directives.append(RuleDirective(False, event.src, event.dst, link.lid))
            out.repairs = self._repair_paths_containing(link)
        elif event.kind == LinkEventKind.ADD:
            if (event.src, event.dst) in self.links:
                raise TopologyError(f"link {event.src}->{event.dst} already up")
            for nid in (event.src, event.dst):
                rec = self.nodes.get(nid)
                if rec is None or not rec.committed:
                    raise UnknownAttachPoint(f"endpoint {nid} unknown or not committed")
            revived = self.down_links.pop((event.src, event.dst), None)
            if revived is not None:
                link = replace(revived, delay_ms=event.delay_ms)
            else:
                link = DirectedLink(event.src, event.dst,
                                    new_lid(self.rng, self.lid_registry, self.params),
                                    delay_ms=event.delay_ms)
            self.links[(event.src, event.dst)] = link
            if self.nodes[event.src].kind == NodeKind.SDN_SWITCH:
                out.rule_directives.append(RuleDirective(True, event.src, event.dst, link.lid))
            out.repairs = self._repair_improvable()
        elif event.kind == LinkEventKind.UPDATE:
            link = self.links.get((event.src, event.dst))
            if link is None:
                raise UnknownLink(f"link {event.src}->{event.dst} unknown")
            self.links[(event.src, event.dst)] = replace(link, delay_ms=event.delay_ms)
        return out

    def _repair_paths_containing(self, failed: DirectedLink) -> List[RepairAction]:
        repairs = []
        for nid in sorted(self.nodes):
            rec = self.nodes[nid]
            if not rec.committed or rec.managed_path is None or nid == TM_NID:
                continue
            if any(l.key() == failed.key() for l in rec.managed_path):
                try:
                    self._refresh_tm_path(nid)
                except Unreachable:
                    continue  # node cut off; stale path kept until a link returns
                repairs.append(RepairAction(nid, rec.tmfid, tuple(rec.managed_path)))
        return repairs

    def _repair_improvable(self) -> List[RepairAction]:
        # After a link comes (back) up, move nodes whose deterministic
        # shortest path changed; restores pre-failure TMFIDs after a flap.
        repairs = []
        dist = self._distances_to(TM_NID)
        for nid in sorted(self.nodes):
            rec = self.nodes[nid]
            if not rec.committed or rec.managed_path is None or nid == TM_NID:
                continue
            if nid not in dist:
                continue
            fresh = self._path_via(nid, TM_NID, dist)
            if [l.key() for l in fresh] != [l.key() for l in rec.managed_path]:
                rec.managed_path = fresh
                rec.tmfid = fid_or((l.lid for l in fresh), width=self.params.m)
                repairs.append(RepairAction(nid, rec.tmfid, tuple(fresh)))
        return repairs

    def record_stats(self, report: LinkStatsReport) -> None:
        """Fold reported per-link utilization into link loads for TE."""
        by_lid = {link.lid: key for key, link in self.links.items()}
        for entry in report.entries:
            key = by_lid.get(entry.lid)
            if key is None:
                raise UnknownLink(f"stats for unknown LID {entry.lid}")
            self.links[key] = replace(self.links[key],
                                      load=entry.utilization_ppm / 1_000_000)

    # -- introspection -------------------------------------------------------

    def live_lids(self) -> Set[LinkId]:
        lids = {link.lid for link in self.links.values()}
        lids.update(rec.ilid for rec in self.nodes.values() if rec.ilid is not None)
        return lids

    def dump(self) -> str:
        """Structured text export: node table then link table, LIDs in hex."""
        lines = ["# nodes: nid kind ilid tmfid"]
        for nid in sorted(self.nodes):
            rec = self.nodes[nid]
            lines.append("%d %s %s %s" % (
                nid, rec.kind.name,
                rec.ilid.to_bytes().hex() if rec.ilid else "-",
                rec.tmfid.to_bytes().hex() if rec.tmfid else "-"))
        lines.append("# links: src dst lid delay_ms load")
        for key in sorted(self.links):
            link = self.links[key]
            lines.append("%d %d %s %.3f %.6f" % (
                link.src, link.dst, link.lid.to_bytes().hex(), link.delay_ms, link.load))
        return "\n".join(lines) + "\n"
