from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

NodeId = int
Label = str
Capability = str
Cell = tuple[int, int]


class GridError(ValueError):
    pass


class InvalidTrajectory(ValueError):
    pass


@dataclass(frozen=True)
class Environment:
    nodes: tuple[NodeId, ...]
    "Dense 1-based node indices. ind(q) is the identity on these."

    edges: frozenset[tuple[NodeId, NodeId]]
    "Directed transitions, self-loops included."

    labeling: Mapping[NodeId, frozenset[Label]] = field(default_factory=dict)
    "Labels reported at each node. Nodes absent from the map carry no label."

    geometry: Mapping[NodeId, Cell] | None = None
    "Optional 1-based (row, col) of each node, used for grid rendering and scenario files."

    _succ: dict[NodeId, tuple[NodeId, ...]] = field(init=False, repr=False, compare=False)
    _pred: dict[NodeId, tuple[NodeId, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        succ: dict[NodeId, list[NodeId]] = {q: [] for q in self.nodes}
        pred: dict[NodeId, list[NodeId]] = {q: [] for q in self.nodes}
        for q, q2 in sorted(self.edges):
            succ.setdefault(q, []).append(q2)
            pred.setdefault(q2, []).append(q)
        object.__setattr__(self, "_succ", {q: tuple(v) for q, v in succ.items()})
        object.__setattr__(self, "_pred", {q: tuple(v) for q, v in pred.items()})

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def label_set(self) -> frozenset[Label]:
        "Π: every label used somewhere in the environment."
        return frozenset().union(*self.labeling.values()) if self.labeling else frozenset()

    def adj(self, q: NodeId) -> tuple[NodeId, ...]:
        return self._succ.get(q, ())

    def preds(self, q: NodeId) -> tuple[NodeId, ...]:
        return self._pred.get(q, ())

    def out_edges(self, q: NodeId) -> list[tuple[NodeId, NodeId]]:
        return [(q, q2) for q2 in self.adj(q)]

    def in_edges(self, q: NodeId) -> list[tuple[NodeId, NodeId]]:
        return [(q1, q) for q1 in self.preds(q)]

    def labels_at(self, q: NodeId) -> frozenset[Label]:
        return self.labeling.get(q, frozenset())

    def nodes_with(self, label: Label, negated: bool = False) -> list[NodeId]:
        "L^{-1}(π), or its complement for the ¬π pseudo-label."
        return [q for q in self.nodes if (label in self.labels_at(q)) != negated]

    def cell(self, q: NodeId) -> Cell | None:
        if self.geometry is None:
            return None
        return self.geometry.get(q)

    def node_at(self, row: int, col: int) -> NodeId:
        if self.geometry is not None:
            for q, rc in self.geometry.items():
                if rc == (row, col):
                    return q
        raise GridError(f"no node at cell ({row},{col})")

    def distances_from(self, start: NodeId) -> dict[NodeId, int]:
        "BFS hop counts over the directed edges."
        dist = {start: 0}
        queue = deque([start])
        while queue:
            q = queue.popleft()
            for q2 in self.adj(q):
                if q2 not in dist:
                    dist[q2] = dist[q] + 1
                    queue.append(q2)
        return dist

    def __repr__(self) -> str:
        return f"Environment({self.num_nodes} nodes, {len(self.edges)} edges, {len(self.label_set)} labels)"


@dataclass(frozen=True)
class Agent:
    id: int
    "1-based index, unique within the team."

    capabilities: frozenset[Capability]
    "C_j."

    start: NodeId
    "q_j(0)."


@dataclass(frozen=True)
class Team:
    agents: tuple[Agent, ...]

    @property
    def size(self) -> int:
        return len(self.agents)

    @property
    def ids(self) -> list[int]:
        return [a.id for a in self.agents]

    @property
    def global_capabilities(self) -> frozenset[Capability]:
        "C_global."
        return frozenset().union(*(a.capabilities for a in self.agents)) if self.agents else frozenset()

    def agent(self, j: int) -> Agent:
        if not 1 <= j <= len(self.agents):
            raise KeyError(f"no agent {j}")
        return self.agents[j - 1]

    def holders(self, c: Capability) -> frozenset[int]:
        "I_c: ids of agents holding capability c."
        return frozenset(a.id for a in self.agents if c in a.capabilities)

    def helpers(self, c: Capability, j: int) -> list[int]:
        "I_c \\ {j}, sorted."
        return sorted(self.holders(c) - {j})


@dataclass(frozen=True)
class GroupTrajectory:
    occupancy: tuple[tuple[NodeId, ...], ...]
    "occupancy[k][j-1] is q_j(k), for k in [0, T_p]."

    @property
    def horizon(self) -> int:
        "T_p."
        return len(self.occupancy) - 1

    @property
    def num_agents(self) -> int:
        return len(self.occupancy[0]) if self.occupancy else 0

    def at(self, k: int, j: int) -> NodeId:
        return self.occupancy[k][j - 1]

    def path(self, j: int) -> tuple[NodeId, ...]:
        return tuple(row[j - 1] for row in self.occupancy)

    @staticmethod
    def from_paths(paths: Iterable[Iterable[NodeId]]) -> GroupTrajectory:
        columns = [tuple(p) for p in paths]
        if not columns:
            return GroupTrajectory(())
        lengths = {len(p) for p in columns}
        if len(lengths) != 1:
            raise InvalidTrajectory(f"agent paths have different lengths: {sorted(lengths)}")
        return GroupTrajectory(tuple(zip(*columns)))


@dataclass(frozen=True)
class Observation:
    labels: frozenset[Label]
    "L(q_j(k))."

    counts: Mapping[Capability, int]
    "n_j^c(k) for every c in C_global."


@dataclass(frozen=True)
class Trace:
    agent: int
    observations: tuple[Observation, ...]

    @property
    def horizon(self) -> int:
        return len(self.observations) - 1


def build_grid(rows: int, cols: int, labeling: Mapping[Cell, Iterable[Label]] | None = None) -> Environment:
    """
    4-connected grid with self-loops. Nodes are numbered row-major from 1,
    cells are 1-based (row, col).
    """
    if rows < 1 or cols < 1:
        raise GridError(f"grid must be at least 1x1 (got {rows}x{cols})")

    def index(r: int, c: int) -> NodeId:
        return (r - 1) * cols + c

    nodes = tuple(range(1, rows * cols + 1))
    geometry = {index(r, c): (r, c) for r in range(1, rows + 1) for c in range(1, cols + 1)}

    edges = set()
    for q, (r, c) in geometry.items():
        edges.add((q, q))
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            r2, c2 = r + dr, c + dc
            if 1 <= r2 <= rows and 1 <= c2 <= cols:
                edges.add((q, index(r2, c2)))

    node_labels: dict[NodeId, set[Label]] = {}
    for (r, c), labels in (labeling or {}).items():
        if not (1 <= r <= rows and 1 <= c <= cols):
            raise GridError(f"label cell ({r},{c}) is outside the {rows}x{cols} grid")
        node_labels.setdefault(index(r, c), set()).update(labels)

    return Environment(
        nodes=nodes,
        edges=frozenset(edges),
        labeling={q: frozenset(v) for q, v in sorted(node_labels.items()) if v},
        geometry=geometry)


def validate_environment(env: Environment) -> list[str]:
    violations = []
    node_set = set(env.nodes)

    if sorted(node_set) != list(range(1, len(node_set) + 1)) or len(node_set) != len(env.nodes):
        violations.append("nodes: indices must be dense and unique starting at 1")

    for q, q2 in sorted(env.edges):
        if q not in node_set:
            violations.append(f"edge ({q},{q2}): source absent")
        if q2 not in node_set:
            violations.append(f"edge ({q},{q2}): target absent")

    for q in env.nodes:
        if (q, q) not in env.edges:
            violations.append(f"node {q}: no self-loop")

    for q in sorted(env.labeling):
        if q not in node_set:
            violations.append(f"labeling: node {q} absent")
        for label in sorted(env.labeling[q]):
            if not label or any(ch.isspace() for ch in label):
                violations.append(f"node {q}: bad label name {label!r}")

    return violations


def validate_trajectory(env: Environment, team: Team, traj: GroupTrajectory) -> None:
    if not traj.occupancy:
        raise InvalidTrajectory("trajectory has no time steps")
    if traj.num_agents != team.size:
        raise InvalidTrajectory(f"trajectory has {traj.num_agents} agents, team has {team.size}")

    for agent in team.agents:
        q0 = traj.at(0, agent.id)
        if q0 != agent.start:
            raise InvalidTrajectory(f"agent {agent.id}: starts at node {q0}, expected {agent.start}")
        for k in range(traj.horizon):
            q, q2 = traj.at(k, agent.id), traj.at(k + 1, agent.id)
            if (q, q2) not in env.edges:
                raise InvalidTrajectory(f"agent {agent.id}: transition ({q},{q2}) at k={k} is not an edge")


def count_colocated(traj: GroupTrajectory, team: Team, j: int, c: Capability, k: int) -> int:
    "n_j^c(k): holders of c sharing agent j's node at time k, agent j excluded."
    if not 0 <= k <= traj.horizon:
        raise IndexError(f"time step {k} outside [0,{traj.horizon}]")
    here = traj.at(k, j)
    return sum(1 for i in team.helpers(c, j) if traj.at(k, i) == here)


def trace_of(env: Environment, team: Team, traj: GroupTrajectory, j: int) -> Trace:
    validate_trajectory(env, team, traj)
    capabilities = sorted(team.global_capabilities)
    observations = []
    for k in range(traj.horizon + 1):
        counts = {c: count_colocated(traj, team, j, c, k) for c in capabilities}
        observations.append(Observation(env.labels_at(traj.at(k, j)), counts))
    return Trace(j, tuple(observations))
