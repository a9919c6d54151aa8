"""Skill knowledge graph: typed nodes and edges, scenario activation, and a
shape-matched synthetic generator.

A graph holds three node kinds. Question and instruction nodes are assessable
skills; condition nodes are incident-state premises that gate downstream
skills. Edges are `sequential` (procedural order among skills), `implication`
(a skill establishes a condition), and `entailment` (a true condition opens a
conditional continuation).

A scenario is an incident type plus a boolean configuration of condition
nodes. Activating a scenario walks the incident's procedure from its root,
crossing into conditional branches only where the configuration switches the
gating condition on.
"""

from __future__ import annotations

import json
import zlib
from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

SCHEMA_VERSION = 1

#: Department labels used by the coarse belief-aggregation level, assigned
#: round-robin over the sorted incident-type ids.
DEPARTMENTS = ("police", "fire", "medical")


class NodeKind(str, Enum):
    CONDITION = "condition"
    QUESTION = "question"
    INSTRUCTION = "instruction"


class EdgeKind(str, Enum):
    SEQUENTIAL = "sequential"
    IMPLICATION = "implication"
    ENTAILMENT = "entailment"


class GraphError(ValueError):
    """Malformed graph data or a violated structural invariant."""


class GraphGenError(ValueError):
    """Synthetic-generation parameters that cannot produce a legal graph."""


@dataclass(frozen=True)
class SkillNode:
    id: str
    kind: NodeKind
    text: str
    incident_types: frozenset[str]
    depth: int

    @property
    def assessable(self) -> bool:
        return self.kind is not NodeKind.CONDITION


@dataclass(frozen=True)
class SkillEdge:
    src: str
    dst: str
    kind: EdgeKind


@dataclass(frozen=True)
class Scenario:
    """A training simulation: incident type plus condition configuration.

    Conditions absent from ``condition_config`` are treated as false.
    """

    id: str
    incident_type: str
    condition_config: Mapping[str, bool]


@dataclass(frozen=True)
class GraphGenParams:
    n_nodes: int
    n_edges: int
    n_incident_types: int
    condition_fraction: float
    max_depth: int
    seed: int

    def validate(self) -> None:
        if self.n_nodes <= self.n_incident_types:
            raise GraphGenError("n_nodes must exceed n_incident_types")
        if not 0.0 < self.condition_fraction < 0.5:
            raise GraphGenError("condition_fraction must lie in (0, 0.5)")
        if self.max_depth < 2:
            raise GraphGenError("max_depth must be at least 2")
        if self.n_nodes < 1 or self.n_edges < 1:
            raise GraphGenError("n_nodes and n_edges must be positive")


class SkillGraph:
    """Immutable after construction; validates all structural invariants."""

    def __init__(self, nodes: Iterable[SkillNode], edges: Iterable[SkillEdge]):
        self.nodes: dict[str, SkillNode] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise GraphError(f"duplicate node id {node.id!r}")
            if node.depth < 0:
                raise GraphError(f"node {node.id!r} has negative depth")
            self.nodes[node.id] = node
        self.edges: tuple[SkillEdge, ...] = tuple(
            sorted(edges, key=lambda e: (e.src, e.dst, e.kind.value))
        )
        self._validate_edges()

        self._seq_out: dict[str, list[str]] = {}
        self._seq_in: dict[str, list[str]] = {}
        self._impl_out: dict[str, list[str]] = {}
        self._ent_out: dict[str, list[str]] = {}
        for e in self.edges:
            if e.kind is EdgeKind.SEQUENTIAL:
                self._seq_out.setdefault(e.src, []).append(e.dst)
                self._seq_in.setdefault(e.dst, []).append(e.src)
            elif e.kind is EdgeKind.IMPLICATION:
                self._impl_out.setdefault(e.src, []).append(e.dst)
            else:
                self._ent_out.setdefault(e.src, []).append(e.dst)

        self.incident_types: tuple[str, ...] = tuple(
            sorted({t for n in self.nodes.values() for t in n.incident_types})
        )
        self.assessable_ids: tuple[str, ...] = tuple(
            sorted(n.id for n in self.nodes.values() if n.assessable)
        )
        self.node_index: dict[str, int] = {
            nid: i for i, nid in enumerate(self.assessable_ids)
        }
        self._roots: dict[str, tuple[str, ...]] = {
            t: tuple(
                sorted(
                    n.id
                    for n in self.nodes.values()
                    if n.assessable and n.depth == 0 and t in n.incident_types
                )
            )
            for t in self.incident_types
        }
        self._max_depth_by_incident: dict[str, int] = {
            t: max(
                (n.depth for n in self.nodes.values() if t in n.incident_types),
                default=0,
            )
            for t in self.incident_types
        }

    # -- validation ---------------------------------------------------------

    def _validate_edges(self) -> None:
        for e in self.edges:
            for endpoint in (e.src, e.dst):
                if endpoint not in self.nodes:
                    raise GraphError(
                        f"edge {e.src!r}->{e.dst!r} references missing node {endpoint!r}"
                    )
            if e.src == e.dst:
                raise GraphError(f"self-loop on node {e.src!r}")
            src_k = self.nodes[e.src].kind
            dst_k = self.nodes[e.dst].kind
            if e.kind is EdgeKind.SEQUENTIAL:
                ok = src_k is not NodeKind.CONDITION and dst_k is not NodeKind.CONDITION
            elif e.kind is EdgeKind.IMPLICATION:
                ok = src_k is not NodeKind.CONDITION and dst_k is NodeKind.CONDITION
            else:
                ok = src_k is NodeKind.CONDITION and dst_k is not NodeKind.CONDITION
            if not ok:
                raise GraphError(
                    f"illegal {e.kind.value} edge {e.src!r} ({src_k.value}) -> "
                    f"{e.dst!r} ({dst_k.value})"
                )

    # -- basic accessors ----------------------------------------------------

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def condition_ids(self) -> list[str]:
        return sorted(
            n.id for n in self.nodes.values() if n.kind is NodeKind.CONDITION
        )

    def roots(self, incident_type: str) -> tuple[str, ...]:
        if incident_type not in self._roots:
            raise GraphError(f"unknown incident type {incident_type!r}")
        return self._roots[incident_type]

    def departments(self) -> dict[str, str]:
        """Incident type -> department label, round-robin over sorted types."""
        return {
            t: DEPARTMENTS[i % len(DEPARTMENTS)]
            for i, t in enumerate(self.incident_types)
        }

    def sequential_predecessors(self, node_id: str) -> list[str]:
        return self._seq_in.get(node_id, [])

    # -- activation ---------------------------------------------------------

    def activated_subgraph(self, scenario: Scenario) -> frozenset[str]:
        """Assessable node ids reached by the scenario's activation walk.

        Breadth-first from the incident root along sequential edges; an
        entailment edge out of condition ``c`` is crossed only when the
        scenario configures ``c`` true. Condition nodes are never part of the
        result.
        """
        roots = self.roots(scenario.incident_type)
        config = scenario.condition_config
        visited: set[str] = set(roots)
        queue: deque[str] = deque(roots)
        while queue:
            u = queue.popleft()
            nxt: list[str] = list(self._seq_out.get(u, []))
            for cond in self._impl_out.get(u, []):
                if config.get(cond, False):
                    nxt.extend(self._ent_out.get(cond, []))
            for w in nxt:
                if w not in visited:
                    visited.add(w)
                    queue.append(w)
        return frozenset(visited)

    def reachable_conditions(self, incident_type: str) -> list[str]:
        """Condition ids whose establishing skill is activatable under the
        all-true configuration of this incident."""
        all_true = {c: True for c in self.condition_ids()}
        probe = Scenario(id="__probe__", incident_type=incident_type,
                         condition_config=all_true)
        active = self.activated_subgraph(probe)
        out: set[str] = set()
        for u in active:
            out.update(self._impl_out.get(u, []))
        return sorted(out)

    def normalized_depth(self, node_id: str) -> float:
        """Depth of the node scaled to [0, 1] within its incident procedure."""
        node = self.nodes.get(node_id)
        if node is None:
            raise GraphError(f"unknown node {node_id!r}")
        if not node.incident_types:
            return 0.0
        primary = sorted(node.incident_types)[0]
        peak = self._max_depth_by_incident.get(primary, 0)
        if peak == 0:
            return 0.0
        return node.depth / peak

    def normalized_depths(self) -> dict[str, float]:
        return {nid: self.normalized_depth(nid) for nid in self.assessable_ids}

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "nodes": [
                {
                    "id": n.id,
                    "kind": n.kind.value,
                    "text": n.text,
                    "incident_types": sorted(n.incident_types),
                    "depth": n.depth,
                }
                for n in sorted(self.nodes.values(), key=lambda n: n.id)
            ],
            "edges": [
                {"src": e.src, "dst": e.dst, "kind": e.kind.value}
                for e in self.edges
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def _node_from_dict(raw: dict) -> SkillNode:
    try:
        return SkillNode(
            id=str(raw["id"]),
            kind=NodeKind(raw["kind"]),
            text=str(raw.get("text", "")),
            incident_types=frozenset(str(t) for t in raw.get("incident_types", [])),
            depth=int(raw["depth"]),
        )
    except (KeyError, ValueError) as exc:
        raise GraphError(f"bad node record {raw!r}: {exc}") from exc


def loads_graph(text: str) -> SkillGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"graph file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "nodes" not in doc or "edges" not in doc:
        raise GraphError("graph document must contain 'nodes' and 'edges'")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise GraphError(f"unsupported schema_version {version!r}")
    nodes = [_node_from_dict(r) for r in doc["nodes"]]
    edges = []
    for r in doc["edges"]:
        try:
            edges.append(
                SkillEdge(src=str(r["src"]), dst=str(r["dst"]), kind=EdgeKind(r["kind"]))
            )
        except (KeyError, ValueError) as exc:
            raise GraphError(f"bad edge record {r!r}: {exc}") from exc
    return SkillGraph(nodes, edges)


def load_graph(path: str | Path) -> SkillGraph:
    return loads_graph(Path(path).read_text(encoding="utf-8"))


def activated_subgraph(graph: SkillGraph, scenario: Scenario) -> frozenset[str]:
    return graph.activated_subgraph(scenario)


def normalized_depth(graph: SkillGraph, node_id: str) -> float:
    return graph.normalized_depth(node_id)


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------

_THEMES = (
    "vehicle collision", "structure fire", "cardiac arrest", "choking",
    "drowning", "overdose", "trauma injury", "gas leak", "electrical hazard",
    "domestic disturbance", "armed robbery", "burglary", "missing person",
    "welfare check", "traffic obstruction", "brush fire", "chemical spill",
    "seizure", "stroke", "allergic reaction", "fall injury",
)
_QUALIFIERS = ("routine", "escalated", "critical")

_Q_ACTIONS = ("confirm", "verify", "obtain", "determine", "assess",
              "clarify", "ask about", "establish", "check", "probe")
_I_ACTIONS = ("instruct", "advise", "direct", "coach", "guide", "relay")
_EARLY_OBJECTS = ("caller location", "callback number", "incident address",
                  "caller identity", "scene status")
_MID_OBJECTS = ("injury status", "people involved", "hazard presence",
                "timeline of events", "access route", "symptom severity")
_LATE_OBJECTS = ("first aid steps", "safety positioning", "evacuation route",
                 "responder access", "scene preservation", "follow-up checks")
_COND_PREMISES = ("injuries reported", "hazard confirmed", "suspect on scene",
                  "patient unresponsive", "access blocked", "fluid leaking",
                  "weapon involved", "smoke visible", "multiple patients")
_SEGMENT_THEMES = ("caller intake", "scene safety", "patient condition",
                   "hazard control", "bystander guidance", "responder handoff")


def _incident_names(n: int) -> list[str]:
    # Theme-major so consecutive incident ids are severity variants of one
    # theme; those triples form the clusters that share conditional branches.
    names = []
    for t in _THEMES:
        for q in _QUALIFIERS:
            names.append(f"{t} ({q})")
    while len(names) < n:
        names.append(f"incident variant {len(names)}")
    return names[:n]


CLUSTER_SIZE = len(_QUALIFIERS)


def _stage_objects(depth: int, max_depth: int) -> tuple[str, ...]:
    frac = depth / max(max_depth, 1)
    if frac < 0.34:
        return _EARLY_OBJECTS
    if frac < 0.67:
        return _MID_OBJECTS
    return _LATE_OBJECTS


class _GraphBuilder:
    """Accumulates nodes/edges during synthetic generation."""

    def __init__(self, params: GraphGenParams):
        self.params = params
        self.rng = np.random.default_rng(params.seed)
        self.nodes: list[SkillNode] = []
        self.edges: list[SkillEdge] = []
        self._edge_set: set[tuple[str, str, EdgeKind]] = set()

    def add_node(self, node: SkillNode) -> None:
        self.nodes.append(node)

    def add_edge(self, src: str, dst: str, kind: EdgeKind) -> bool:
        key = (src, dst, kind)
        if key in self._edge_set or src == dst:
            return False
        self._edge_set.add(key)
        self.edges.append(SkillEdge(src, dst, kind))
        return True


def generate_synthetic_graph(params: GraphGenParams) -> SkillGraph:
    """Build a deterministic synthetic skill graph matching the requested shape.

    The graph mirrors how real call-taking procedure manuals hang together:

    * a small library of shared protocol cascades (caller information, scene
      safety, patient condition, ...): sequential segments chained by
      conditions, so one established premise opens the next shared segment
      and a missed skill orphans a deep tail of downstream checkpoints;
    * one root question plus an incident-specific backbone per incident
      type, with conditions gating incident-specific branches;
    * entry links from incident conditions into the shared cascades, placed
      per theme cluster, so related incidents exercise overlapping skills
      while rarely-entered deep segments stay niche.

    Scenario configurations therefore genuinely change the activated
    subgraph, and skills range from near-universal to single-incident.
    """
    params.validate()
    b = _GraphBuilder(params)
    rng = b.rng

    n_inc = params.n_incident_types
    n_cond = int(round(params.n_nodes * params.condition_fraction))
    n_assess = params.n_nodes - n_cond
    if n_cond < 1:
        raise GraphGenError("condition budget is empty; raise condition_fraction")

    inc_ids = [f"inc{i:02d}" for i in range(n_inc)]
    inc_names = _incident_names(n_inc)
    topic_words = {
        inc_ids[i]: inc_names[i].replace("(", "").replace(")", "")
        for i in range(n_inc)
    }

    # -- budget split ------------------------------------------------------
    use_cascades = n_inc >= 3 and n_cond >= n_inc + 2 * 2
    if use_cascades:
        n_casc = max(1, min(3, (n_cond - n_inc) // 7))
        seg_per_casc = max(2, min(12, (n_cond - n_inc) // n_casc + 1))
        casc_cond_total = n_casc * (seg_per_casc - 1)
    else:
        n_casc, seg_per_casc, casc_cond_total = 0, 0, 0
    own_cond_total = n_cond - casc_cond_total
    n_shared = int(round(0.16 * n_assess)) if use_cascades else 0
    n_shared = max(n_shared, n_casc * seg_per_casc)
    remaining = n_assess - n_shared - n_inc
    if remaining < own_cond_total:
        raise GraphGenError(
            "not enough assessable nodes for one root per incident plus one "
            "branch head per condition"
        )
    tail_total = int(round((remaining - own_cond_total) * 0.45))
    trunk_total = remaining - own_cond_total - tail_total

    def pick_kind(depth: int) -> NodeKind:
        p_question = float(np.clip(0.95 - 1.1 * depth / params.max_depth, 0.1, 0.95))
        return NodeKind.QUESTION if rng.random() < p_question else NodeKind.INSTRUCTION

    def skill_text(kind: NodeKind, topic: str, depth: int,
                   step_key: tuple | None = None) -> str:
        actions = _Q_ACTIONS if kind is NodeKind.QUESTION else _I_ACTIONS
        objects = _stage_objects(depth, params.max_depth)
        if step_key is not None:
            # Same protocol step across a theme's severity variants keeps the
            # same wording, so sibling incidents' skills read as siblings.
            # zlib.crc32 rather than hash(): process-independent.
            h = zlib.crc32(repr(step_key).encode())
            action = actions[h % len(actions)]
            obj = objects[(h >> 8) % len(objects)]
        else:
            action = actions[int(rng.integers(len(actions)))]
            obj = objects[int(rng.integers(len(objects)))]
        return f"{action} {obj} during {topic}"

    def premise_text(topic: str) -> str:
        premise = _COND_PREMISES[int(rng.integers(len(_COND_PREMISES)))]
        return f"{premise} during {topic}"

    # -- shared cascades -----------------------------------------------------
    seg_heads: dict[tuple[int, int], str] = {}
    seg_sizes = [0] * (n_casc * seg_per_casc)
    if seg_sizes:
        weights = np.array([
            0.9 if (k % seg_per_casc) < 3 else 1.0 + 0.04 * (k % seg_per_casc)
            for k in range(len(seg_sizes))
        ])
        shares = weights / weights.sum() * n_shared
        seg_sizes = [max(1, int(x)) for x in shares]
        k = 0
        while sum(seg_sizes) < n_shared:
            seg_sizes[np.argsort(shares - np.array(seg_sizes))[-1]] += 1
            k += 1
            if k > n_shared:
                break
        while sum(seg_sizes) > n_shared:
            big = int(np.argmax(seg_sizes))
            if seg_sizes[big] <= 1:
                break
            seg_sizes[big] -= 1
    for c in range(n_casc):
        prev_tail: str | None = None
        for j in range(seg_per_casc):
            theme = _SEGMENT_THEMES[(j * len(_SEGMENT_THEMES)) // seg_per_casc]
            topic = f"{theme} protocol"
            size = seg_sizes[c * seg_per_casc + j]
            node_ids = []
            for k in range(size):
                depth = min(3 + j + k, params.max_depth)
                kind = pick_kind(depth)
                nid = f"lib{c}:s{j:02d}n{k:02d}"
                b.add_node(SkillNode(nid, kind, skill_text(kind, topic, depth),
                                     frozenset(), depth))
                node_ids.append(nid)
                if k > 0:
                    b.add_edge(node_ids[k - 1], nid, EdgeKind.SEQUENTIAL)
            seg_heads[(c, j)] = node_ids[0]
            if j > 0:
                cond_id = f"lib{c}:c{j - 1:02d}"
                cond_depth = min(3 + j, params.max_depth)
                b.add_node(SkillNode(cond_id, NodeKind.CONDITION,
                                     premise_text(topic), frozenset(), cond_depth))
                b.add_edge(prev_tail, cond_id, EdgeKind.IMPLICATION)
                b.add_edge(cond_id, node_ids[0], EdgeKind.ENTAILMENT)
            prev_tail = node_ids[-1]

    # -- incident backbones -----------------------------------------------------
    own_cond_count = {iid: 0 for iid in inc_ids}
    order = list(inc_ids)
    rng.shuffle(order)
    for k in range(own_cond_total):
        own_cond_count[order[k % n_inc]] += 1
    trunk_extra = {iid: trunk_total // n_inc for iid in inc_ids}
    rng.shuffle(order)
    for iid in order[: trunk_total % n_inc]:
        trunk_extra[iid] += 1

    own_conditions: dict[str, list[str]] = {iid: [] for iid in inc_ids}
    branch_heads: dict[str, list[str]] = {iid: [] for iid in inc_ids}
    branch_nodes: dict[str, list[tuple[str, int]]] = {iid: [] for iid in inc_ids}
    trunks: dict[str, list[tuple[str, int]]] = {}

    for idx, iid in enumerate(inc_ids):
        itypes = frozenset([iid])
        topic = topic_words[iid]
        root_id = f"{iid}:t00"
        b.add_node(SkillNode(root_id, NodeKind.QUESTION,
                             skill_text(NodeKind.QUESTION, topic, 0), itypes, 0))
        trunk = [(root_id, 0)]
        tip_id, tip_depth = root_id, 0
        for k in range(1, trunk_extra[iid] + 1):
            if tip_depth < params.max_depth and rng.random() < 0.8:
                parent_id, parent_depth = tip_id, tip_depth
            else:
                cands = [t for t in trunk if t[1] < params.max_depth]
                parent_id, parent_depth = cands[int(rng.integers(len(cands)))]
            depth = parent_depth + 1
            kind = pick_kind(depth)
            nid = f"{iid}:t{k:02d}"
            b.add_node(SkillNode(
                nid, kind,
                skill_text(kind, topic, depth,
                           step_key=(idx // CLUSTER_SIZE, "t", k)),
                itypes, depth))
            b.add_edge(parent_id, nid, EdgeKind.SEQUENTIAL)
            trunk.append((nid, depth))
            if depth > tip_depth:
                tip_id, tip_depth = nid, depth
        trunks[iid] = trunk

        for j in range(own_cond_count[iid]):
            srcs = [t for t in trunk if t[1] <= params.max_depth - 2]
            src_id, src_depth = srcs[int(rng.integers(len(srcs)))]
            cond_id = f"{iid}:c{j:02d}"
            cond_depth = src_depth + 1
            b.add_node(SkillNode(cond_id, NodeKind.CONDITION,
                                 premise_text(topic), itypes, cond_depth))
            b.add_edge(src_id, cond_id, EdgeKind.IMPLICATION)
            own_conditions[iid].append(cond_id)

            head_depth = cond_depth + 1
            head_kind = pick_kind(head_depth)
            head_id = f"{iid}:b{j:02d}n00"
            b.add_node(SkillNode(
                head_id, head_kind,
                skill_text(head_kind, topic, head_depth,
                           step_key=(idx // CLUSTER_SIZE, "b", j, 0)),
                itypes, head_depth))
            b.add_edge(cond_id, head_id, EdgeKind.ENTAILMENT)
            branch_heads[iid].append(head_id)
            branch_nodes[iid].append((head_id, head_depth))

        # Cluster-assigned entry from the first condition into a cascade, so
        # severity variants of one theme exercise the same shared segments.
        if use_cascades and own_conditions[iid]:
            cluster = idx // CLUSTER_SIZE
            casc = cluster % n_casc
            entry = (cluster // n_casc) % min(3, seg_per_casc)
            b.add_edge(own_conditions[iid][0], seg_heads[(casc, entry)],
                       EdgeKind.ENTAILMENT)
            if len(own_conditions[iid]) > 1 and n_casc > 1 and rng.random() < 0.5:
                casc2 = (casc + 1) % n_casc
                entry2 = (cluster * 2 + 1) % seg_per_casc
                b.add_edge(own_conditions[iid][1], seg_heads[(casc2, entry2)],
                           EdgeKind.ENTAILMENT)

    # -- branch tails -----------------------------------------------------------
    all_branches = [(iid, j) for iid in inc_ids
                    for j in range(len(branch_heads[iid]))]
    branch_tail_count = {key: 0 for key in all_branches}
    if all_branches:
        rng.shuffle(all_branches)
        for k in range(tail_total):
            branch_tail_count[all_branches[k % len(all_branches)]] += 1
    for iid in inc_ids:
        topic = topic_words[iid]
        for j, head in enumerate(branch_heads[iid]):
            chain = [branch_nodes[iid][j]]
            prev_id, prev_depth = chain[0]
            for m in range(1, branch_tail_count[(iid, j)] + 1):
                if prev_depth >= params.max_depth:
                    cands = [t for t in chain if t[1] < params.max_depth]
                    if not cands:
                        cands = [t for t in trunks[iid] if t[1] < params.max_depth]
                    prev_id, prev_depth = cands[int(rng.integers(len(cands)))]
                depth = prev_depth + 1
                kind = pick_kind(depth)
                nid = f"{iid}:b{j:02d}n{m:02d}"
                b.add_node(SkillNode(nid, kind, skill_text(kind, topic, depth),
                                     frozenset([iid]), depth))
                b.add_edge(prev_id, nid, EdgeKind.SEQUENTIAL)
                chain.append((nid, depth))
                prev_id, prev_depth = nid, depth

    # -- edge top-up --------------------------------------------------------------
    base_edges = len(b.edges)
    if params.n_edges < base_edges:
        raise GraphGenError(
            f"n_edges={params.n_edges} is below the structural minimum "
            f"{base_edges} for these parameters"
        )
    deficit = params.n_edges - base_edges
    all_heads = list(seg_heads.values())
    attempts = 0
    while deficit > 0 and attempts < 100 * params.n_edges:
        attempts += 1
        inc_i = int(rng.integers(n_inc))
        iid = inc_ids[inc_i]
        conds = own_conditions[iid]
        roll = rng.random()
        if roll < 0.08 and use_cascades and conds:
            # occasional extra cascade entry
            cond = conds[int(rng.integers(len(conds)))]
            head = all_heads[int(rng.integers(len(all_heads)))]
            added = b.add_edge(cond, head, EdgeKind.ENTAILMENT)
        elif roll < 0.58 and conds:
            # a condition also opens the matching branch of a sibling
            # severity variant; related incidents share conditional skills
            cluster = inc_i // CLUSTER_SIZE
            mates = [j for j in range(cluster * CLUSTER_SIZE,
                                      min((cluster + 1) * CLUSTER_SIZE, n_inc))
                     if j != inc_i and branch_heads[inc_ids[j]]]
            if mates:
                mate = inc_ids[mates[int(rng.integers(len(mates)))]]
                cond = conds[int(rng.integers(len(conds)))]
                heads = branch_heads[mate]
                head = heads[int(rng.integers(len(heads)))]
                added = b.add_edge(cond, head, EdgeKind.ENTAILMENT)
            else:
                added = False
        elif roll < 0.8 and conds:
            # second establishing skill for an incident condition
            trunk = trunks[iid]
            src = trunk[int(rng.integers(len(trunk)))][0]
            cond = conds[int(rng.integers(len(conds)))]
            added = b.add_edge(src, cond, EdgeKind.IMPLICATION)
        elif conds and branch_heads[iid]:
            cond = conds[int(rng.integers(len(conds)))]
            head = branch_heads[iid][int(rng.integers(len(branch_heads[iid])))]
            added = b.add_edge(cond, head, EdgeKind.ENTAILMENT)
        else:
            added = False
        if added:
            deficit -= 1
    if deficit > 0.02 * params.n_edges:
        raise GraphGenError(
            f"could not reach n_edges={params.n_edges} within tolerance; "
            f"short by {deficit}"
        )

    graph = SkillGraph(b.nodes, b.edges)
    return _with_activation_memberships(graph)


def _with_activation_memberships(graph: SkillGraph) -> SkillGraph:
    """Rebuild node incident_types as the set of incident types whose
    all-true activation reaches the node; condition memberships are kept."""
    roots = {
        n.id: n for n in graph.nodes.values()
        if n.assessable and n.depth == 0
    }
    membership: dict[str, set[str]] = {nid: set() for nid in graph.nodes}
    all_true = {c: True for c in graph.condition_ids()}
    incident_of_root = {}
    for n in roots.values():
        for itype in n.incident_types:
            incident_of_root[n.id] = itype
    for root_id, itype in sorted(incident_of_root.items()):
        probe = Scenario(id="__probe__", incident_type=itype,
                         condition_config=all_true)
        for nid in graph.activated_subgraph(probe):
            membership[nid].add(itype)
    nodes = []
    for n in graph.nodes.values():
        if n.kind is NodeKind.CONDITION or not membership[n.id]:
            nodes.append(n)
        else:
            nodes.append(SkillNode(n.id, n.kind, n.text,
                                   frozenset(membership[n.id]), n.depth))
    return SkillGraph(nodes, graph.edges)


# ---------------------------------------------------------------------------
# Scenario catalog
# ---------------------------------------------------------------------------

DEFAULT_CATALOG_SIZE = 297


@dataclass
class ScenarioCatalog:
    scenarios: tuple[Scenario, ...]
    truncated: bool = False  # target count was unreachable on this graph

    def __len__(self) -> int:
        return len(self.scenarios)

    def __iter__(self) -> Iterator[Scenario]:
        return iter(self.scenarios)

    def __getitem__(self, i: int) -> Scenario:
        return self.scenarios[i]

    def by_id(self, scenario_id: str) -> Scenario:
        for s in self.scenarios:
            if s.id == scenario_id:
                return s
        raise KeyError(scenario_id)

    def incident_types(self) -> list[str]:
        return sorted({s.incident_type for s in self.scenarios})

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "scenarios": [
                {
                    "id": s.id,
                    "incident_type": s.incident_type,
                    "conditions": dict(sorted(s.condition_config.items())),
                }
                for s in self.scenarios
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")


def load_catalog(path: str | Path) -> ScenarioCatalog:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise GraphError(f"unsupported catalog schema_version {doc.get('schema_version')!r}")
    scenarios = tuple(
        Scenario(id=r["id"], incident_type=r["incident_type"],
                 condition_config={k: bool(v) for k, v in r["conditions"].items()})
        for r in doc["scenarios"]
    )
    return ScenarioCatalog(scenarios=scenarios)


#: Probability a condition is switched on in a sampled configuration.
#: Incident-local premises are usually part of the drill; shared-library
#: premises are rarer, so deep shared segments reward policies that
#: deliberately pick rich configurations over a blind cycler.
LOCAL_TRUE_BIAS = 0.75
SHARED_TRUE_BIAS = 0.32
#: Complexity floor: configurations activating fewer skills are dropped when
#: the incident can do better (degenerate drills are not useful simulations).
MIN_SCENARIO_SIZE = 16
#: Minimum count of skills exclusive to the incident per scenario, so a
#: simulation always exercises a substantial incident-specific protocol slice
#: rather than only widely shared segments.
MIN_EXCLUSIVE_SIZE = 9
#: Complexity ceiling: a single simulated call cannot meaningfully exercise
#: an unbounded sweep of the protocol library.
MAX_SCENARIO_SIZE = 64


def build_scenario_catalog(
    graph: SkillGraph,
    target_count: int = DEFAULT_CATALOG_SIZE,
    seed: int = 0,
    min_size: int = MIN_SCENARIO_SIZE,
    max_size: int = MAX_SCENARIO_SIZE,
    min_exclusive: int = MIN_EXCLUSIVE_SIZE,
    local_true_bias: float = LOCAL_TRUE_BIAS,
    shared_true_bias: float = SHARED_TRUE_BIAS,
) -> ScenarioCatalog:
    """Sample a deterministic catalog of distinct (incident, configuration)
    scenarios spanning every incident type.

    Per incident, the first scenario switches every reachable condition on;
    further scenarios draw distinct random configurations, preferring those
    whose activated subgraph passes the complexity floor. When the graph
    cannot support ``target_count`` distinct scenarios the catalog is capped
    and flagged.
    """
    rng = np.random.default_rng(seed)
    incidents = list(graph.incident_types)
    if not incidents:
        raise GraphError("graph has no incident types")
    reachable = {iid: graph.reachable_conditions(iid) for iid in incidents}
    capacity = {iid: 1 << min(len(reachable[iid]), 30) for iid in incidents}

    quota = {iid: 1 for iid in incidents}
    remaining = target_count - len(incidents)
    if remaining < 0:
        remaining = 0
    order = list(incidents)
    rng.shuffle(order)
    pos = 0
    stalled = 0
    while remaining > 0 and stalled < len(incidents):
        iid = order[pos % len(incidents)]
        pos += 1
        if quota[iid] < capacity[iid]:
            quota[iid] += 1
            remaining -= 1
            stalled = 0
        else:
            stalled += 1

    # "Exclusive" counts skills local to the incident's theme cluster, not
    # the widely shared library segments.
    exclusive = {
        nid for nid, n in graph.nodes.items()
        if n.assessable and 0 < len(n.incident_types) <= 3
    }
    shared_conditions = set()
    for cond in graph.condition_ids():
        for target in graph._ent_out.get(cond, []):
            if len(graph.nodes[target].incident_types) > 3:
                shared_conditions.add(cond)
                break

    def activation_stats(iid: str, config: dict[str, bool]) -> tuple[int, int]:
        probe = Scenario(id="__probe__", incident_type=iid,
                         condition_config=config)
        active = graph.activated_subgraph(probe)
        return len(active), len(active & exclusive)

    scenarios: list[Scenario] = []
    for iid in incidents:
        conds = reachable[iid]
        seen: set[tuple[bool, ...]] = set()
        passing: list[tuple[bool, ...]] = []
        small: list[tuple[int, tuple[bool, ...]]] = []
        all_true = tuple(True for _ in conds)
        seen.add(all_true)
        size, own = activation_stats(iid, dict(zip(conds, all_true)))
        if min_size <= size <= max_size and own >= min_exclusive:
            passing.append(all_true)
        else:
            small.append((min(size, max_size) + own, all_true))
        bias = np.array([
            shared_true_bias if c in shared_conditions else local_true_bias
            for c in conds
        ])
        guard = 0
        while len(passing) < quota[iid] and guard < 200 * max(quota[iid], 1):
            guard += 1
            mask = tuple(bool(x) for x in (rng.random(len(conds)) < bias))
            if mask in seen:
                continue
            seen.add(mask)
            size, own = activation_stats(iid, dict(zip(conds, mask)))
            if min_size <= size <= max_size and own >= min_exclusive:
                passing.append(mask)
            else:
                small.append((min(size, max_size) + own, mask))
        if len(passing) < quota[iid]:
            # The incident cannot produce enough rich configurations; take
            # its largest remaining ones instead.
            small.sort(key=lambda t: (-t[0], t[1]))
            for _, mask in small:
                if len(passing) >= quota[iid]:
                    break
                passing.append(mask)
        for mask in passing[: quota[iid]]:
            sid = f"scn{len(scenarios):03d}"
            scenarios.append(
                Scenario(
                    id=sid,
                    incident_type=iid,
                    condition_config={c: v for c, v in zip(conds, mask)},
                )
            )
    truncated = len(scenarios) < target_count
    return ScenarioCatalog(scenarios=tuple(scenarios), truncated=truncated)
