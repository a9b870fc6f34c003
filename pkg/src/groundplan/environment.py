"""Household executability simulator.

Scenes are graphs of rooms and objects; an agent walks between rooms,
holds up to two objects and changes object states. Every atomic action's
preconditions and effects come from ``data/conditions.yaml``.
"""
from __future__ import annotations

import copy
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from importlib import resources

import yaml

from groundplan.dsl import ActionStep, Program, UnparsedStep, render_step
from groundplan.errors import SceneError, UnknownObject

PROPERTIES = frozenset(
    {
        "openable", "switchable", "grabbable", "sittable", "lieable", "surface",
        "container", "drinkable", "eatable", "readable", "cuttable", "squeezable",
        "plugged-kind", "washable", "person", "keyboard", "wearable",
    }
)
STATES = frozenset({"OPEN", "CLOSED", "ON", "OFF", "PLUGGED_IN", "PLUGGED_OUT", "DIRTY", "CLEAN"})
POSTURES = ("STANDING", "SITTING", "LYING")
EXCLUSIVE = (("openable", "OPEN", "CLOSED"), ("switchable", "ON", "OFF"),
             ("plugged-kind", "PLUGGED_IN", "PLUGGED_OUT"))

Key = tuple[str, int]


@dataclass
class SceneObject:
    class_name: str
    id: int
    properties: frozenset[str] = frozenset()
    states: set[str] = field(default_factory=set)
    location: Key | None = None
    is_room: bool = False

    @property
    def key(self) -> Key:
        return (self.class_name, self.id)


@dataclass
class Agent:
    location: Key
    holding: list[Key] = field(default_factory=list)
    posture: str = "STANDING"
    facing: Key | None = None
    asleep: bool = False
    wearing: set[Key] = field(default_factory=set)


@dataclass
class SceneGraph:
    name: str
    rooms: list[Key]
    objects: dict[Key, SceneObject]
    agent: Agent
    origins: dict[Key, Key] = field(default_factory=dict)

    def copy(self) -> SceneGraph:
        return copy.deepcopy(self)

    def room_of(self, key: Key) -> Key:
        seen = set()
        while True:
            obj = self.objects[key]
            if obj.is_room:
                return key
            if obj.location is None:  # held or worn
                return self.agent.location
            if key in seen:
                raise SceneError(f"containment cycle at {key}")
            seen.add(key)
            key = obj.location

    def enclosing_closed(self, key: Key) -> Key | None:
        """Nearest closed openable container holding ``key``, if any."""
        loc = self.objects[key].location
        while loc is not None and not self.objects[loc].is_room:
            holder = self.objects[loc]
            if "openable" in holder.properties and "CLOSED" in holder.states:
                return loc
            loc = holder.location
        return None

    def instances(self, class_name: str) -> list[SceneObject]:
        return sorted((o for o in self.objects.values() if o.class_name == class_name), key=lambda o: o.id)


def check_invariants(scene: SceneGraph) -> list[str]:
    """All violated scene invariants, as messages (empty when the scene is sound)."""
    problems = []
    agent = scene.agent
    if len(agent.holding) > 2:
        problems.append(f"agent holds {len(agent.holding)} objects")
    if len(set(agent.holding)) != len(agent.holding):
        problems.append("agent holds the same object twice")
    if agent.location not in scene.objects or not scene.objects[agent.location].is_room:
        problems.append(f"agent location {agent.location} is not a room")
    if agent.posture not in POSTURES:
        problems.append(f"bad posture {agent.posture}")
    carried = set(agent.holding) | agent.wearing
    for obj in scene.objects.values():
        name = f"{obj.class_name}({obj.id})"
        for prop, a, b in EXCLUSIVE:
            if prop in obj.properties and (a in obj.states) == (b in obj.states):
                problems.append(f"{name}: {prop} needs exactly one of {a}/{b}")
        if obj.is_room:
            continue
        if obj.key in carried:
            if obj.location is not None:
                problems.append(f"{name}: carried object has a location")
            continue
        if obj.location is None:
            problems.append(f"{name}: no location")
        elif obj.location not in scene.objects:
            problems.append(f"{name}: dangling location {obj.location}")
        else:
            holder = scene.objects[obj.location]
            if not (holder.is_room or holder.properties & {"container", "surface"}):
                problems.append(f"{name}: located in non-container {holder.class_name}")
    if not problems:
        try:
            for key in scene.objects:
                scene.room_of(key)
        except SceneError as exc:
            problems.append(str(exc))
    return problems


def _parse_ref(text: str) -> tuple[str, int | None]:
    text = str(text).strip()
    if text.endswith(")") and "(" in text:
        name, num = text[:-1].split("(", 1)
        return name.strip(), int(num)
    return text, None


def scene_from_dict(data: dict, name: str = "scene") -> SceneGraph:
    if not isinstance(data, dict):
        raise SceneError(f"{name}: scene must be a mapping")
    name = data.get("name", name)
    objects: dict[Key, SceneObject] = {}
    next_id: dict[str, int] = {}

    def add(obj: SceneObject):
        if obj.key in objects:
            raise SceneError(f"{name}: duplicate node {obj.class_name}({obj.id})")
        objects[obj.key] = obj
        next_id[obj.class_name] = max(next_id.get(obj.class_name, 1), obj.id + 1)

    rooms = []
    for entry in data.get("rooms") or []:
        cls, rid = _parse_ref(entry)
        room = SceneObject(cls, rid or next_id.get(cls, 1), is_room=True)
        add(room)
        rooms.append(room.key)
    if not rooms:
        raise SceneError(f"{name}: at least one room is required")

    pending = []
    for i, entry in enumerate(data.get("objects") or []):
        if not isinstance(entry, dict) or "class" not in entry:
            raise SceneError(f"{name}: object #{i + 1} needs a 'class'")
        props = frozenset(entry.get("properties") or ())
        states = set(entry.get("states") or ())
        if props - PROPERTIES:
            raise SceneError(f"{name}: unknown properties {sorted(props - PROPERTIES)}")
        if states - STATES:
            raise SceneError(f"{name}: unknown states {sorted(states - STATES)}")
        cls = str(entry["class"]).strip().lower()
        obj = SceneObject(cls, int(entry.get("id") or next_id.get(cls, 1)), props, states)
        add(obj)
        pending.append((obj, entry.get("location")))

    def lookup(ref) -> Key:
        cls, oid = _parse_ref(ref)
        matches = [o for o in objects.values() if o.class_name == cls and (oid is None or o.id == oid)]
        if not matches:
            raise SceneError(f"{name}: dangling location reference {ref!r}")
        return min(matches, key=lambda o: o.id).key

    for obj, loc in pending:
        if loc is None:
            raise SceneError(f"{name}: {obj.class_name}({obj.id}) has no location")
        obj.location = lookup(loc)

    agent_data = data.get("agent") or {}
    agent = Agent(lookup(agent_data.get("location", rooms[0][0])))
    agent.posture = agent_data.get("posture", "STANDING")
    scene = SceneGraph(name, rooms, objects, agent)
    problems = check_invariants(scene)
    if problems:
        raise SceneError(f"{name}: " + "; ".join(problems))
    return scene


def load_scene(path) -> SceneGraph:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise SceneError(f"{path}: malformed scene file: {exc}") from exc
    return scene_from_dict(data, name=str(path))


def fixture_scene_names() -> list[str]:
    folder = resources.files("groundplan").joinpath("data/scenes")
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".yaml"))


def load_fixture_scene(name: str) -> SceneGraph:
    path = resources.files("groundplan").joinpath(f"data/scenes/{name}.yaml")
    with path.open(encoding="utf-8") as fh:
        return scene_from_dict(yaml.safe_load(fh), name=name)


def resolve_object(scene: SceneGraph, class_name: str, id: int | None = None) -> SceneObject:
    found = scene.instances(class_name)
    if id is not None:
        found = [o for o in found if o.id == id]
    if not found:
        label = class_name if id is None else f"{class_name}({id})"
        raise UnknownObject(f"no object {label} in scene {scene.name}")
    return found[0]


# ---------------------------------------------------------------- conditions

@dataclass(frozen=True)
class Clause:
    name: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class Conditions:
    pre: tuple[Clause, ...]
    post: tuple[Clause, ...]


def _clause(text: str) -> Clause:
    parts = str(text).split()
    return Clause(parts[0], tuple(parts[1:]))


def load_condition_table(path=None) -> dict[str, Conditions]:
    if path is None:
        text = resources.files("groundplan").joinpath("data/conditions.yaml").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    data = yaml.safe_load(text)
    table = {}
    for action, spec in data["actions"].items():
        pre = tuple(_clause(c) for c in spec.get("pre") or ())
        post = tuple(_clause(c) for c in spec.get("post") or ())
        for c in pre:
            if c.name not in PRECONDITIONS:
                raise ValueError(f"{action}: unknown precondition {c.name!r}")
        for c in post:
            if c.name not in EFFECTS:
                raise ValueError(f"{action}: unknown effect {c.name!r}")
        table[action] = Conditions(pre, post)
    return table


def _pre_object(s, k):
    return None if not s.objects[k].is_room else f"{k[0]} is a room"


def _pre_has(s, k, prop):
    return None if prop in s.objects[k].properties else f"{k[0]} is not {prop}"


def _pre_state(s, k, st):
    return None if st in s.objects[k].states else f"{k[0]} is not {st}"


def _pre_colocated(s, k):
    if s.objects[k].is_room:
        return None if k == s.agent.location else f"agent is not in {k[0]}"
    return None if s.room_of(k) == s.agent.location else f"{k[0]} is not in the agent's room"


def _pre_visible(s, k):
    holder = s.enclosing_closed(k)
    return None if holder is None else f"{k[0]} is inside closed container {holder[0]}"


def _pre_held(s, k):
    return None if k in s.agent.holding else f"{k[0]} is not held"


def _pre_not_held(s, k):
    return None if k not in s.agent.holding else f"{k[0]} is already held"


def _pre_free_hand(s):
    return None if len(s.agent.holding) < 2 else "both hands are full"


def _pre_holding_any(s):
    return None if s.agent.holding else "nothing is held"


def _pre_posture(s, p):
    return None if s.agent.posture == p else f"agent is {s.agent.posture}, not {p}"


def _pre_not_posture(s, p):
    return None if s.agent.posture != p else f"agent is already {p}"


def _pre_posture_in(s, *ps):
    return None if s.agent.posture in ps else f"agent is {s.agent.posture}"


def _pre_plugged(s, k):
    o = s.objects[k]
    if "plugged-kind" in o.properties and "PLUGGED_IN" not in o.states:
        return f"{k[0]} is not plugged in"
    return None


def _pre_open_if_openable(s, k):
    o = s.objects[k]
    if "openable" in o.properties and "OPEN" not in o.states:
        return f"{k[0]} is closed"
    return None


def _pre_on_if_switchable(s, k):
    o = s.objects[k]
    if "switchable" in o.properties and "ON" not in o.states:
        return f"{k[0]} is off"
    return None


def _pre_worn(s, k):
    return None if k in s.agent.wearing else f"{k[0]} is not worn"


PRECONDITIONS = {
    "object": _pre_object,
    "has": _pre_has,
    "state": _pre_state,
    "colocated": _pre_colocated,
    "visible": _pre_visible,
    "held": _pre_held,
    "not_held": _pre_not_held,
    "free_hand": _pre_free_hand,
    "holding_any": _pre_holding_any,
    "posture": _pre_posture,
    "not_posture": _pre_not_posture,
    "posture_in": _pre_posture_in,
    "plugged_if_needed": _pre_plugged,
    "open_if_openable": _pre_open_if_openable,
    "on_if_switchable": _pre_on_if_switchable,
    "worn": _pre_worn,
    "awake": lambda s: "agent is asleep" if s.agent.asleep else None,
    "asleep": lambda s: None if s.agent.asleep else "agent is awake",
}


def _eff_goto(s, k):
    room = s.room_of(k)
    if room != s.agent.location:
        s.agent.location = room
        s.agent.posture = "STANDING"
        s.agent.asleep = False


def _eff_stand(s):
    s.agent.posture = "STANDING"


def _eff_hold(s, k):
    obj = s.objects[k]
    s.origins.setdefault(k, obj.location)
    obj.location = None
    s.agent.holding.append(k)


def _release(s, k, where):
    s.agent.holding.remove(k)
    s.objects[k].location = where


def _eff_place(s, k, dest):
    _release(s, k, dest)


def _eff_return(s, k):
    origin = s.origins.get(k)
    if origin is None or origin not in s.objects:
        origin = s.agent.location
    _release(s, k, origin)


def _eff_drop(s, k):
    _release(s, k, s.agent.location)


def _eff_drop_first(s):
    _release(s, s.agent.holding[0], s.agent.location)


def _eff_set(s, k, st):
    s.objects[k].states.add(st)


def _eff_unset(s, k, st):
    s.objects[k].states.discard(st)


def _eff_switch_off(s, k):
    o = s.objects[k]
    if "ON" in o.states:
        o.states.discard("ON")
        o.states.add("OFF")


def _eff_clean(s, k):
    o = s.objects[k]
    if "DIRTY" in o.states:
        o.states.discard("DIRTY")
        o.states.add("CLEAN")


def _eff_wear(s, k):
    s.agent.holding.remove(k)
    s.agent.wearing.add(k)


def _eff_unwear(s, k):
    s.agent.wearing.discard(k)
    s.agent.holding.append(k)


def _eff_posture(s, p):
    s.agent.posture = p


EFFECTS = {
    "goto": _eff_goto,
    "stand": _eff_stand,
    "clear_facing": lambda s: setattr(s.agent, "facing", None),
    "face": lambda s, k: setattr(s.agent, "facing", k),
    "hold": _eff_hold,
    "place": _eff_place,
    "return": _eff_return,
    "drop": _eff_drop,
    "drop_first": _eff_drop_first,
    "set": _eff_set,
    "unset": _eff_unset,
    "switch_off_if_on": _eff_switch_off,
    "clean": _eff_clean,
    "wear": _eff_wear,
    "unwear": _eff_unwear,
    "set_posture": _eff_posture,
    "fall_asleep": lambda s: setattr(s.agent, "asleep", True),
    "wake": lambda s: setattr(s.agent, "asleep", False),
}

_DEFAULT_TABLE: dict[str, Conditions] | None = None


def default_condition_table() -> dict[str, Conditions]:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = load_condition_table()
    return _DEFAULT_TABLE


@dataclass(frozen=True)
class StepFailure:
    step_index: int  # 1-based
    reason: str  # parse | unknown-object | precondition
    message: str


@dataclass(frozen=True)
class ExecutionReport:
    executed_steps: int
    total_steps: int
    failure: StepFailure | None = None

    @property
    def success(self) -> bool:
        return self.executed_steps == self.total_steps


def _bind(scene: SceneGraph, step: ActionStep, strict_ids: bool) -> list[Key]:
    keys = []
    ids = step.ids or (None,) * len(step.args)
    for name, oid in zip(step.args, ids):
        if oid is not None and not strict_ids and not any(o.id == oid for o in scene.instances(name)):
            oid = None  # environment assigns the instance
        keys.append(resolve_object(scene, name, oid).key)
    return keys


def _apply_inplace(scene, step, table, strict_ids=False) -> tuple[str, str] | None:
    """Check and apply one step to ``scene``; returns ``(reason, message)`` on failure.

    The scene is only mutated once every precondition holds.
    """
    if isinstance(step, UnparsedStep):
        return ("parse", f"cannot parse {step.text!r}")
    cond = table.get(step.action.name)
    if cond is None:
        return ("parse", f"action {step.action.name} has no conditions")
    try:
        keys = _bind(scene, step, strict_ids)
    except UnknownObject as exc:
        return ("unknown-object", str(exc))

    def args(clause):
        return [keys[int(a[1:]) - 1] if a.startswith("$") else a for a in clause.args]

    for clause in cond.pre:
        msg = PRECONDITIONS[clause.name](scene, *args(clause))
        if msg is not None:
            return ("precondition", f"{render_step(step)}: {msg}")
    for clause in cond.post:
        EFFECTS[clause.name](scene, *args(clause))
    return None


def check_and_apply(
    state: SceneGraph, step: ActionStep, table: dict[str, Conditions] | None = None
) -> SceneGraph | StepFailure:
    """Apply ``step`` to a copy of ``state``; a failed check is returned, not raised."""
    scene = state.copy()
    failure = _apply_inplace(scene, step, table or default_condition_table())
    if failure is not None:
        return StepFailure(1, *failure)
    return scene


def execute_program(
    scene: SceneGraph,
    program: Program | Sequence[ActionStep],
    table: dict[str, Conditions] | None = None,
    strict_ids: bool = False,
) -> ExecutionReport:
    steps = program.steps if isinstance(program, Program) else tuple(program)
    table = table or default_condition_table()
    work = scene.copy()
    for i, step in enumerate(steps):
        failure = _apply_inplace(work, step, table, strict_ids)
        if failure is not None:
            return ExecutionReport(i, len(steps), StepFailure(i + 1, *failure))
    return ExecutionReport(len(steps), len(steps))


def executability(
    program: Program,
    scenes: Iterable[SceneGraph],
    fractional: bool = False,
    table: dict[str, Conditions] | None = None,
) -> float:
    """Fraction of scenes in which the program runs to completion.

    With ``fractional`` each scene contributes executed/total steps instead.
    An empty program is vacuously executable.
    """
    scenes = list(scenes)
    if not scenes:
        raise ValueError("executability needs at least one scene")
    total = 0.0
    for scene in scenes:
        report = execute_program(scene, program, table)
        if fractional:
            total += report.executed_steps / report.total_steps if report.total_steps else 1.0
        else:
            total += report.success
    return total / len(scenes)
