"""
Scenario files and the seeded random scenario generator.

A scenario file is UTF-8 JSON:

    {
      "name": "fig1",
      "grid": {"rows": 5, "cols": 5},
      "labels": {"Water": [[4, 1], [4, 2]], "Goal": [[5, 3]]},
      "agents": [{"id": 1, "capabilities": ["carry"], "start": [3, 3]}],
      "specs": {"1": "F[0,10] CAT(\\"Goal\\")"},
      "M": 50,
      "seed": null
    }

Cells are 1-based (row, col). Every label named under "labels" is declared,
even with an empty cell list; capabilities are declared by the agents that
hold them, plus an optional top-level "capabilities" list.

Random generation (pinned, so a seed always yields the same file):

    1. SeedSequence(seed) is split into a labeling stream and a placement
       stream, each driving a PCG64 generator.
    2. One uniform draw per node, row-major. Labels are taken in name order
       with cumulative densities; the first label whose cumulative density
       exceeds the draw labels the node, otherwise it stays unlabeled.
    3. Each required label that did not occur is patched onto an unlabeled
       node picked uniformly by the labeling stream, in name order.
    4. Agents, in id order, start on a node picked uniformly by the placement
       stream among nodes without the avoided label (Water by default).
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from catmip.formula import Formula, FormulaError, cats_of, horizon, labels_of, simplify_cat
from catmip.oracle import default_big_m
from catmip.parser import cat_to_text, parse
from catmip.world import Agent, Environment, GridError, Team, build_grid, validate_environment
from catmip.textio import is_token

logger = logging.getLogger(__name__)


class ScenarioError(ValueError):
    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class GeneratorError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    environment: Environment
    team: Team
    specs: dict[int, str]
    "Formula text per agent id, as written."

    formulas: dict[int, Formula]
    big_m: float | None = None
    "Satisfaction weight M; None means the default for the planning horizon."

    seed: int | None = None
    declared_labels: tuple[str, ...] = ()
    declared_capabilities: tuple[str, ...] = ()
    warnings: list[str] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return max((horizon(f) for f in self.formulas.values()), default=0)

    @property
    def effective_big_m(self) -> float:
        return self.big_m if self.big_m is not None else default_big_m(self.horizon)


#-----------------------------------------------------------------------------
# Loading

def _escape(part: str) -> str:
    return part.replace("~", "~0").replace("/", "~1")


def _ptr(*parts: object) -> str:
    return "".join("/" + _escape(str(p)) for p in parts)


def _expect(value: Any, kind: type | tuple[type, ...], what: str, pointer: str) -> Any:
    if isinstance(value, bool) and kind is not bool:
        raise ScenarioError(f"{what} must be {_kind_name(kind)}, got a boolean", pointer)
    if not isinstance(value, kind):
        raise ScenarioError(f"{what} must be {_kind_name(kind)}, got {type(value).__name__}", pointer)
    return value


def _kind_name(kind: type | tuple[type, ...]) -> str:
    names = {dict: "an object", list: "an array", str: "a string", int: "an integer", float: "a number"}
    if isinstance(kind, tuple):
        return " or ".join(names.get(k, k.__name__) for k in kind)
    return names.get(kind, kind.__name__)


def _cell(value: Any, rows: int, cols: int, pointer: str) -> tuple[int, int]:
    _expect(value, list, "cell", pointer)
    if len(value) != 2:
        raise ScenarioError(f"cell must be [row, col], got {len(value)} numbers", pointer)
    r = _expect(value[0], int, "row", pointer + "/0")
    c = _expect(value[1], int, "column", pointer + "/1")
    if not (1 <= r <= rows and 1 <= c <= cols):
        raise ScenarioError(f"cell ({r},{c}) is outside the {rows}x{cols} grid", pointer)
    return r, c


def scenario_from_json(blob: Any, name: str = "scenario") -> Scenario:
    _expect(blob, dict, "scenario", "")

    grid = _expect(blob.get("grid"), dict, "grid", "/grid")
    rows = _expect(grid.get("rows"), int, "rows", "/grid/rows")
    cols = _expect(grid.get("cols"), int, "cols", "/grid/cols")
    if rows < 1 or cols < 1:
        raise ScenarioError(f"grid must be at least 1x1 (got {rows}x{cols})", "/grid")

    labeling: dict[tuple[int, int], set[str]] = {}
    declared_labels = []
    for label, cells in _expect(blob.get("labels", {}), dict, "labels", "/labels").items():
        if not is_token(label):
            raise ScenarioError(f"bad label name {label!r}", _ptr("labels", label))
        declared_labels.append(label)
        _expect(cells, list, "label cells", _ptr("labels", label))
        for i, cell in enumerate(cells):
            rc = _cell(cell, rows, cols, _ptr("labels", label, i))
            labeling.setdefault(rc, set()).add(label)

    try:
        env = build_grid(rows, cols, labeling)
    except GridError as exc:
        raise ScenarioError(str(exc), "/grid") from exc
    problems = validate_environment(env)
    if problems:
        raise ScenarioError("; ".join(problems), "/labels")

    agents_blob = _expect(blob.get("agents"), list, "agents", "/agents")
    if not agents_blob:
        raise ScenarioError("at least one agent is required", "/agents")
    agents = []
    for i, entry in enumerate(agents_blob):
        _expect(entry, dict, "agent", _ptr("agents", i))
        agent_id = _expect(entry.get("id"), int, "id", _ptr("agents", i, "id"))
        if agent_id != i + 1:
            raise ScenarioError(f"agent ids must be 1..N in order; expected {i + 1}, got {agent_id}",
                                _ptr("agents", i, "id"))
        caps = _expect(entry.get("capabilities", []), list, "capabilities", _ptr("agents", i, "capabilities"))
        for n, c in enumerate(caps):
            if not isinstance(c, str) or not is_token(c):
                raise ScenarioError(f"bad capability name {c!r}", _ptr("agents", i, "capabilities", n))
        r, c = _cell(entry.get("start"), rows, cols, _ptr("agents", i, "start"))
        agents.append(Agent(agent_id, frozenset(caps), env.node_at(r, c)))
    team = Team(tuple(agents))

    extra_caps = _expect(blob.get("capabilities", []), list, "capabilities", "/capabilities")
    for n, c in enumerate(extra_caps):
        if not isinstance(c, str) or not is_token(c):
            raise ScenarioError(f"bad capability name {c!r}", _ptr("capabilities", n))
    declared_caps = sorted(team.global_capabilities | set(extra_caps))

    specs_blob = _expect(blob.get("specs"), dict, "specs", "/specs")
    for key in specs_blob:
        if not key.isdigit() or not 1 <= int(key) <= team.size:
            raise ScenarioError(f"spec for unknown agent {key!r}", _ptr("specs", key))
    specs: dict[int, str] = {}
    formulas: dict[int, Formula] = {}
    for j in team.ids:
        pointer = _ptr("specs", j)
        text = specs_blob.get(str(j))
        if text is None:
            raise ScenarioError(f"agent {j} has no spec", pointer)
        _expect(text, str, "spec", pointer)
        try:
            formulas[j] = parse(text, declared_labels, declared_caps)
        except FormulaError as exc:
            raise ScenarioError(f"spec does not parse: {exc}", pointer) from exc
        specs[j] = text

    big_m = blob.get("M")
    if big_m is not None:
        _expect(big_m, (int, float), "M", "/M")
        if big_m <= 0:
            raise ScenarioError(f"M must be positive (got {big_m})", "/M")
    seed = blob.get("seed")
    if seed is not None:
        _expect(seed, int, "seed", "/seed")

    scenario = Scenario(
        name=_expect(blob.get("name", name), str, "name", "/name"),
        environment=env,
        team=team,
        specs=specs,
        formulas=formulas,
        big_m=big_m,
        seed=seed,
        declared_labels=tuple(declared_labels),
        declared_capabilities=tuple(declared_caps))
    scenario.warnings = scenario_warnings(scenario)
    for w in scenario.warnings:
        logger.warning("%s: %s", scenario.name, w)
    return scenario


def scenario_warnings(scenario: Scenario) -> list[str]:
    "CAT atoms that simplify away for their agent, labels on no node, M below T_p."
    out = []
    env, team = scenario.environment, scenario.team
    for j, f in scenario.formulas.items():
        seen = set()
        for atom in cats_of(f):
            if atom in seen:
                continue
            seen.add(atom)
            simpler = simplify_cat(atom, team, agent=j)
            if simpler != atom:
                out.append(f"agent {j}: {cat_to_text(atom)} can only act as {cat_to_text(simpler)} "
                           f"with this team")
        for label in sorted(labels_of(f) - env.label_set):
            out.append(f"agent {j}: label {label!r} is on no node")
    if scenario.big_m is not None and scenario.big_m < scenario.horizon:
        out.append(f"M={scenario.big_m} is below the planning horizon {scenario.horizon}")
    return out


def load_scenario(path: str | os.PathLike) -> Scenario:
    with open(path, "rt", encoding="utf-8") as f:
        text = f.read()
    try:
        blob = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"not valid JSON: {exc}") from exc
    stem = os.path.splitext(os.path.basename(path))[0]
    return scenario_from_json(blob, stem)


#-----------------------------------------------------------------------------
# Saving

def scenario_to_json(scenario: Scenario) -> dict:
    env = scenario.environment
    rows = max(rc[0] for rc in env.geometry.values())
    cols = max(rc[1] for rc in env.geometry.values())

    labels = {}
    for label in sorted(set(scenario.declared_labels) | env.label_set):
        labels[label] = [list(env.cell(q)) for q in env.nodes_with(label)]

    blob: dict[str, Any] = {
        "name": scenario.name,
        "grid": {"rows": rows, "cols": cols},
        "labels": labels,
        "agents": [{"id": a.id, "capabilities": sorted(a.capabilities), "start": list(env.cell(a.start))}
                   for a in scenario.team.agents],
    }
    extra = sorted(set(scenario.declared_capabilities) - scenario.team.global_capabilities)
    if extra:
        blob["capabilities"] = extra
    blob["specs"] = {str(j): scenario.specs[j] for j in scenario.team.ids}
    blob["M"] = scenario.big_m
    blob["seed"] = scenario.seed
    return blob


_PAIR = re.compile(r"\[\s*(-?\d+),\s*(-?\d+)\s*\]")


def _dumps(blob: dict) -> str:
    "Indented JSON with [row, col] pairs kept on one line."
    return _PAIR.sub(r"[\1, \2]", json.dumps(blob, indent=2)) + "\n"


def save_scenario(scenario: Scenario, path: str | os.PathLike) -> None:
    with open(path, "wt", encoding="utf-8") as f:
        f.write(_dumps(scenario_to_json(scenario)))


#-----------------------------------------------------------------------------
# Random generation

AERIAL_SPEC = 'F[0,6] (CAT("Scenic") & F[0,4] CAT("Upload", aug("WiFi",1)))'
GROUND_SPEC = 'F[0,10] CAT("Goal") & G[0,10] CAT(!"Water", aug("carry",1), limit("wheels",1))'


@dataclass(frozen=True)
class AgentTemplate:
    capabilities: frozenset[str]
    count: int
    spec: str
    name: str = ""


DEFAULT_DENSITIES = {"Water": 0.60, "Upload": 0.01, "Scenic": 0.01, "Goal": 0.01}

DEFAULT_TEMPLATES = (
    AgentTemplate(frozenset({"carry"}), 1, AERIAL_SPEC, "aerial"),
    AgentTemplate(frozenset({"WiFi", "wheels"}), 2, GROUND_SPEC, "ground"),
)


@dataclass(frozen=True)
class GeneratorConfig:
    rows: int
    cols: int
    densities: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_DENSITIES))
    "Fraction of nodes that should carry each label."

    required: tuple[str, ...] = ("Goal", "Scenic", "Upload")
    "Labels guaranteed at least one node."

    agents: tuple[AgentTemplate, ...] = DEFAULT_TEMPLATES
    seed: int = 0
    big_m: float | None = 50
    avoid: str = "Water"
    "Agents never start on a node with this label."

    def check(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise GeneratorError(f"grid must be at least 1x1 (got {self.rows}x{self.cols})")
        if any(d < 0 for d in self.densities.values()):
            raise GeneratorError("densities must be non-negative")
        total = sum(self.densities.values())
        if total > 1 + 1e-12:
            raise GeneratorError(f"densities sum to {total:g} > 1")
        missing = sorted(set(self.required) - set(self.densities))
        if missing:
            raise GeneratorError(f"required labels without a density: {missing}")
        if not self.agents or any(t.count < 1 for t in self.agents):
            raise GeneratorError("every agent template needs a positive count")

        n = self.rows * self.cols
        need = len(set(self.required)) + round(n * total)
        if n < need:
            raise GeneratorError(f"a {self.rows}x{self.cols} grid has {n} nodes; these densities "
                                 f"and required labels need about {need}")


def _stream(seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seq))


def random_scenario(cfg: GeneratorConfig) -> Scenario:
    cfg.check()
    labeling_seq, placement_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = _stream(labeling_seq)

    n = cfg.rows * cfg.cols
    names = sorted(cfg.densities)
    cumulative = np.cumsum([cfg.densities[name] for name in names])
    draws = rng.random(n)

    node_label: list[str | None] = [None] * n
    for i, u in enumerate(draws):
        hit = int(np.searchsorted(cumulative, u, side="right"))
        if hit < len(names):
            node_label[i] = names[hit]

    for label in sorted(set(cfg.required)):
        if label in node_label:
            continue
        free = [i for i, name in enumerate(node_label) if name is None]
        if not free:
            raise GeneratorError(f"no unlabeled node left for required label {label!r}")
        node_label[free[int(rng.integers(len(free)))]] = label

    labeling = {divmod(i, cfg.cols): name for i, name in enumerate(node_label) if name is not None}
    env = build_grid(cfg.rows, cfg.cols, {(r + 1, c + 1): {name} for (r, c), name in labeling.items()})

    open_nodes = [q for q in env.nodes if cfg.avoid not in env.labels_at(q)]
    if not open_nodes:
        raise GeneratorError(f"every node is labeled {cfg.avoid!r}; nowhere to place agents")
    placer = _stream(placement_seq)

    agents, specs = [], {}
    for template in cfg.agents:
        for _ in range(template.count):
            j = len(agents) + 1
            agents.append(Agent(j, template.capabilities, open_nodes[int(placer.integers(len(open_nodes)))]))
            specs[j] = template.spec
    team = Team(tuple(agents))

    declared_caps = sorted(team.global_capabilities)
    formulas = {}
    for j, text in specs.items():
        try:
            formulas[j] = parse(text, names, declared_caps)
        except FormulaError as exc:
            raise GeneratorError(f"agent {j} template spec: {exc}") from exc

    scenario = Scenario(
        name=f"random-{cfg.rows}x{cfg.cols}-s{cfg.seed}",
        environment=env,
        team=team,
        specs=specs,
        formulas=formulas,
        big_m=cfg.big_m,
        seed=cfg.seed,
        declared_labels=tuple(names),
        declared_capabilities=tuple(declared_caps))
    scenario.warnings = scenario_warnings(scenario)
    logger.debug("generated %s: %d labeled nodes, agents at %s",
                 scenario.name, len(labeling), [a.start for a in agents])
    return scenario
