import pytest
from hypothesis import given
from hypothesis import strategies as st

from groundplan.dsl import (
    ACTION_TABLE,
    ActionStep,
    PhraseMatcher,
    Program,
    UnparsedStep,
    get_action,
    natural_to_step,
    parse_program,
    parse_records,
    parse_step,
    render_program,
    render_step,
    step_to_natural,
)
from groundplan.errors import (
    AmbiguousPhrase,
    ArityMismatch,
    DSLError,
    MalformedSyntax,
    NoTemplateMatch,
    UnknownAction,
)

from conftest import RELAX_ON_SOFA

VOCAB = ("living_room", "television", "milk", "fridge", "glass", "sofa", "bedroom", "light")

# Natural-language templates of the 42 atomic actions, one row per action.
TEMPLATE_TABLE = {
    "CLOSE": "close <arg1>", "CUT": "cut <arg1>", "DRINK": "drink <arg1>", "DROP": "drop <arg1>",
    "EAT": "eat <arg1>", "FIND": "find <arg1>", "GRAB": "grab <arg1>", "GREET": "greet <arg1>",
    "LIE": "lie on <arg1>", "LOOKAT": "look at <arg1>", "MOVE": "move <arg1>",
    "OPEN": "open <arg1>", "PLUGIN": "plug in <arg1>", "PLUGOUT": "plug out <arg1>",
    "POINTAT": "point at <arg1>", "POUR": "pour <arg1> into <arg2>", "PULL": "pull <arg1>",
    "PUSH": "push <arg1>", "PUTBACK": "put <arg1> on <arg2>", "PUTIN": "put <arg1> in <arg2>",
    "PUTOBJBACK": "put back <arg1>", "PUTOFF": "take off <arg1>", "PUTON": "put on <arg1>",
    "READ": "read <arg1>", "RELEASE": "release", "RINSE": "rinse <arg1>", "RUN": "run to <arg1>",
    "SCRUB": "scrub <arg1>", "SIT": "sit on <arg1>", "SLEEP": "sleep", "SQUEEZE": "squeeze <arg1>",
    "STANDUP": "stand up", "SWITCHOFF": "switch off <arg1>", "SWITCHON": "switch on <arg1>",
    "TOUCH": "touch <arg1>", "TURNTO": "turn to <arg1>", "TYPE": "type on <arg1>",
    "WAKEUP": "wake up", "WALK": "walk to <arg1>", "WASH": "wash <arg1>", "WATCH": "watch <arg1>",
    "WIPE": "wipe <arg1>",
}


def test_action_table_matches_template_list():
    assert len(ACTION_TABLE) == 42
    assert {a.name: a.template for a in ACTION_TABLE} == TEMPLATE_TABLE
    assert len({a.template for a in ACTION_TABLE}) == 42
    for a in ACTION_TABLE:
        assert a.arity == a.template.count("<arg")


def test_arity_classes():
    zero = sorted(a.name for a in ACTION_TABLE if a.arity == 0)
    two = sorted(a.name for a in ACTION_TABLE if a.arity == 2)
    assert zero == ["RELEASE", "SLEEP", "STANDUP", "WAKEUP"]
    assert two == ["POUR", "PUTBACK", "PUTIN"]


@pytest.mark.parametrize(
    "line, name, args, ids",
    [
        ("[WALK] ⟨living_room⟩(1)", "WALK", ("living_room",), (1,)),
        ("[PUTBACK] ⟨milk⟩(1) ⟨fridge⟩(1)", "PUTBACK", ("milk", "fridge"), (1, 1)),
        ("[PUTBACK] <milk>(2) <fridge>(3)", "PUTBACK", ("milk", "fridge"), (2, 3)),
        ("[walk] <living room>", "WALK", ("living_room",), None),
        ("[SLEEP]", "SLEEP", (), None),
    ],
)
def test_parse_step(line, name, args, ids):
    step = parse_step(line)
    assert (step.action.name, step.args, step.ids) == (name, args, ids)


@pytest.mark.parametrize(
    "line, error",
    [
        ("[FLY] ⟨sky⟩(1)", UnknownAction),
        ("[WALK]", ArityMismatch),
        ("[PUTIN] <milk>(1)", ArityMismatch),
        ("WALK <kitchen>", MalformedSyntax),
        ("[WALK] <kitchen>(1) trailing", MalformedSyntax),
    ],
)
def test_parse_step_errors(line, error):
    with pytest.raises(error):
        parse_step(line)


def test_render_step():
    assert render_step(ActionStep.make("SLEEP")) == "[SLEEP]"
    assert render_step(ActionStep.make("SWITCHON", "television", ids=[1])) == "[SWITCHON] <television>(1)"
    assert render_step(ActionStep.make("POUR", "milk", "glass")) == "[POUR] <milk>(1) <glass>(1)"


def test_render_parse_round_trip_with_default_ids():
    step = ActionStep.make("POUR", "milk", "glass")
    assert parse_step(render_step(step)) == step.with_default_ids()


def test_step_to_natural():
    assert step_to_natural(ActionStep.make("WALK", "living_room")) == "walk to living room"
    assert step_to_natural(ActionStep.make("STANDUP")) == "stand up"
    assert step_to_natural(ActionStep.make("PUTIN", "milk", "fridge")) == "put milk in fridge"


def test_natural_to_step():
    assert natural_to_step("walk to living room", VOCAB) == ActionStep.make("WALK", "living_room")
    assert natural_to_step("switch on TELEVISION", VOCAB) == ActionStep.make("SWITCHON", "television")
    assert natural_to_step("  put  milk in   fridge ", VOCAB) == ActionStep.make("PUTIN", "milk", "fridge")
    with pytest.raises(NoTemplateMatch):
        natural_to_step("I first walk to the bedroom", VOCAB)


def test_phrase_matcher_reports_ambiguity():
    # Multi-word names containing "on" let one phrase split two ways.
    matcher = PhraseMatcher(["a", "a on b", "b on c", "c"])
    assert len(matcher.match_all("put a on b on c")) > 1
    with pytest.raises(AmbiguousPhrase):
        matcher.match("put a on b on c")


def test_invalid_object_names_rejected():
    with pytest.raises(DSLError):
        ActionStep.make("WALK", "Living Room")
    with pytest.raises(DSLError):
        ActionStep.make("WALK", "")


def test_parse_program_relax_on_sofa():
    program = parse_program("Task: Relax on sofa\n" + RELAX_ON_SOFA)
    assert program.task_name == "Relax on sofa"
    assert len(program.steps) == 8
    assert program.steps[3] == ActionStep.make("SWITCHON", "television", ids=[1])
    assert parse_program(render_program(program)) == program


def test_parse_program_empty_and_blank_lines():
    assert parse_program("").steps == ()
    assert len(parse_program("\n[SLEEP]\n\n[WAKEUP]\n").steps) == 2


def test_parse_program_reports_line():
    lines = RELAX_ON_SOFA.splitlines()
    lines[2] = "[FIND] television"
    with pytest.raises(DSLError) as info:
        parse_program("\n".join(lines))
    assert info.value.line == 3
    assert "line 3" in str(info.value)


def test_unparsed_step_is_kept_in_program():
    program = Program("x", (UnparsedStep("do a dance"), ActionStep.make("SLEEP")))
    assert not program.is_parsed
    assert render_step(program.steps[0]) == "do a dance"


def test_parse_records():
    text = (
        "Task: Watch TV\nDescription: Sit and watch.\n[WALK] <living_room>(1)\n[WATCH] <television>(1)\n"
        "\nTask: Sleep\n[SLEEP]\n"
    )
    records = parse_records(text)
    assert [r.task_name for r in records] == ["Watch TV", "Sleep"]
    assert records[0].description == "Sit and watch."
    assert records[1].description is None
    assert len(records[0].program.steps) == 2


def test_get_action_case_insensitive():
    assert get_action("putin") is get_action("PUTIN")
    with pytest.raises(UnknownAction):
        get_action("fly")


names = st.sampled_from(VOCAB)
ids = st.one_of(st.none(), st.integers(1, 9))


@st.composite
def steps(draw):
    action = draw(st.sampled_from(ACTION_TABLE))
    args = [draw(names) for _ in range(action.arity)]
    step_ids = [draw(st.integers(1, 9)) for _ in args] if args and draw(st.booleans()) else None
    return ActionStep(action, tuple(args), tuple(step_ids) if step_ids else None)


@given(st.lists(steps(), max_size=12))
def test_program_round_trip(step_list):
    program = Program("Task", tuple(s.with_default_ids() for s in step_list))
    assert parse_program(render_program(program)) == program


@given(steps())
def test_template_bijection(step):
    bare = ActionStep(step.action, step.args)
    assert natural_to_step(step_to_natural(bare), VOCAB) == bare


@given(steps(), steps())
def test_template_distinctness(a, b):
    a, b = ActionStep(a.action, a.args), ActionStep(b.action, b.args)
    if a != b:
        assert step_to_natural(a) != step_to_natural(b)
